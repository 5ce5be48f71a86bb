#include "ipswlab/mice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "ipswlab/error.hpp"
#include "ipswlab/parallel.hpp"

namespace ipswlab {

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::M1A: return "M1A";
    case ModelKind::M1B: return "M1B";
    case ModelKind::M2: return "M2";
    case ModelKind::M3A: return "M3A";
    case ModelKind::M3B: return "M3B";
  }
  return "M2";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "M1A") return ModelKind::M1A;
  if (name == "M1B") return ModelKind::M1B;
  if (name == "M2") return ModelKind::M2;
  if (name == "M3A") return ModelKind::M3A;
  if (name == "M3B") return ModelKind::M3B;
  throw ConfigError("unknown imputation model kind '" + name + "'");
}

namespace {

bool is_structural_cell(const Column& col, double s_value) {
  // Treatment/outcome cells off-trial are missing by design, not by the
  // missingness mechanism; they never count toward the m rule or the
  // completeness preconditions.
  return (col.role == ColumnRole::Treatment || col.role == ColumnRole::Outcome) &&
         s_value == 0.0;
}

bool binary_observed(const Column& col) {
  bool any = false;
  for (std::size_t i = 0; i < col.values.size(); ++i) {
    if (!col.observed[i]) continue;
    any = true;
    if (col.values[i] != 0.0 && col.values[i] != 1.0) return false;
  }
  return any;
}

// Rows with a genuinely missing analysis value. Structural
// treatment/outcome cells off-trial and derived columns (whose missingness
// is inherited from their sources) do not count.
std::size_t count_incomplete_rows(const Dataset& ds, const std::vector<std::string>& variables) {
  const Column* s = ds.find_role(ColumnRole::TrialIndicator);
  std::size_t incomplete = 0;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (const auto& name : variables) {
      if (!ds.has_column(name)) continue;
      const Column& col = ds.column(name);
      if (col.role == ColumnRole::Derived) continue;
      if (col.observed[i]) continue;
      if (s && is_structural_cell(col, s->values[i])) continue;
      ++incomplete;
      break;
    }
  }
  return incomplete;
}

int resolve_m(const MRule& rule, const Dataset& ds, const std::vector<std::string>& variables) {
  if (!rule.paper_percent) {
    if (rule.explicit_m < 1) throw ConfigError("explicit m must be at least 1");
    return rule.explicit_m;
  }
  // 100 * count / n keeps half-integer percentages exact (2850/10000 -> 28.5)
  double pct = 100.0 * static_cast<double>(count_incomplete_rows(ds, variables)) /
               static_cast<double>(ds.n_rows());
  int m = static_cast<int>(std::lround(pct));
  return std::max(m, 2);
}

std::size_t masked_in_scope(const Dataset& ds, const std::string& name,
                            const std::vector<std::size_t>& scope_rows) {
  const Column& col = ds.column(name);
  std::size_t n = 0;
  for (std::size_t r : scope_rows) n += (col.observed[r] == 0);
  return n;
}

}  // namespace

ImputationSpec build_spec(ModelKind kind, const Dataset& ds, MRule m_rule,
                          const std::vector<std::string>& interactions) {
  const Column* s = ds.find_role(ColumnRole::TrialIndicator);
  if (!s) throw ConfigError("build_spec requires a trial indicator column");
  const Column* a = ds.find_role(ColumnRole::Treatment);
  const Column* y = ds.find_role(ColumnRole::Outcome);
  auto covariates = ds.covariate_names();
  if (covariates.empty()) throw ConfigError("build_spec requires covariate columns");

  ImputationSpec spec;
  spec.maxit = 5;

  if (kind == ModelKind::M1A) {
    // only applicable when the trial stratum is fully observed
    std::vector<std::string> trial_vars = covariates;
    if (a) trial_vars.push_back(a->name);
    if (y) trial_vars.push_back(y->name);
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
      if (s->values[i] != 1.0) continue;
      for (const auto& name : trial_vars)
        if (!ds.column(name).observed[i])
          throw ConfigError("M1A is only applicable when there was no missing data "
                            "in the trial population (column '" + name + "')");
    }
    spec.row_scope = RowScope::nontrial_only;
    spec.variables = covariates;
  } else if (kind == ModelKind::M1B) {
    spec.row_scope = RowScope::superpopulation;
    spec.variables = covariates;
  } else {
    if (!a || !y)
      throw ConfigError(model_kind_name(kind) +
                        " requires treatment and outcome columns");
    spec.row_scope = RowScope::superpopulation;
    spec.variables = covariates;
    spec.variables.push_back(s->name);
    spec.variables.push_back(a->name);
    spec.variables.push_back(y->name);
  }

  if (kind == ModelKind::M3A || kind == ModelKind::M3B) {
    std::vector<std::string> inter = interactions.empty() ? covariates : interactions;
    for (const auto& name : inter) {
      DerivedColumnSpec d;
      d.source_a = name;
      d.source_b = a->name;
      d.out = name + a->name;
      d.mode = kind == ModelKind::M3A ? DerivedMode::active : DerivedMode::passive;
      spec.derived.push_back(d);
      spec.variables.push_back(d.out);
    }
  }

  // Scope rows for masked-count bookkeeping.
  std::vector<std::size_t> scope_rows;
  for (std::size_t i = 0; i < ds.n_rows(); ++i)
    if (spec.row_scope == RowScope::superpopulation || s->values[i] == 0.0)
      scope_rows.push_back(i);

  // A variable needs a model when it has masked cells in scope; passive
  // derived columns are recomputed instead of modeled. Derived columns not
  // yet present in ds are masked wherever either source is.
  auto masked_count = [&](const std::string& name) -> std::size_t {
    if (ds.has_column(name)) return masked_in_scope(ds, name, scope_rows);
    for (const auto& d : spec.derived) {
      if (d.out != name) continue;
      const Column& ca = ds.column(d.source_a);
      const Column& cb = ds.column(d.source_b);
      std::size_t n = 0;
      for (std::size_t r : scope_rows) n += !(ca.observed[r] && cb.observed[r]);
      return n;
    }
    throw ConfigError("no column named '" + name + "'");
  };

  auto is_derived = [&](const std::string& name) {
    for (const auto& d : spec.derived)
      if (d.out == name) return true;
    return false;
  };
  auto is_passive = [&](const std::string& name) {
    for (const auto& d : spec.derived)
      if (d.out == name && d.mode == DerivedMode::passive) return true;
    return false;
  };
  auto derived_of = [&](const std::string& source) {
    std::set<std::string> out;
    for (const auto& d : spec.derived)
      if (d.source_a == source || d.source_b == source) out.insert(d.out);
    return out;
  };

  struct Candidate {
    std::string name;
    std::size_t masked;
    std::size_t order;
    bool derived;
  };
  std::vector<Candidate> candidates;
  std::size_t order = 0;
  for (const auto& name : spec.variables) {
    std::size_t masked = masked_count(name);
    if (masked > 0 && !is_passive(name))
      candidates.push_back({name, masked, order, is_derived(name)});
    ++order;
  }
  // visit order: ascending masked count, derived columns last
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& l, const Candidate& r) {
    if (l.derived != r.derived) return !l.derived;
    if (l.masked != r.masked) return l.masked < r.masked;
    return l.order < r.order;
  });

  for (const auto& c : candidates) {
    ColumnModel model;
    model.target = c.name;
    auto excluded = derived_of(c.name);
    for (const auto& p : spec.variables) {
      if (p == c.name) continue;
      if (excluded.count(p)) continue;  // no column conditions on a function of itself
      model.predictors.push_back(p);
    }
    bool binary = ds.has_column(c.name) && binary_observed(ds.column(c.name)) &&
                  ds.column(c.name).role != ColumnRole::Outcome;
    model.method = binary ? ImputeMethod::logistic : ImputeMethod::pmm;
    spec.column_models.push_back(std::move(model));
  }

  spec.m = resolve_m(m_rule, ds, spec.variables);
  return spec;
}

// ---------------------------------------------------------------------------
// column imputation primitives

std::vector<double> pmm_impute(const std::vector<double>& target,
                               const DesignMatrix& predictors,
                               const std::vector<std::uint8_t>& observed, int donor_k,
                               RngStream& rng, const PmmOptions& options) {
  const std::size_t n = target.size();
  if (static_cast<std::size_t>(predictors.X.rows()) != n || observed.size() != n)
    throw ConfigError("pmm_impute: inconsistent input lengths");
  if (donor_k < 1) throw ConfigError("pmm_impute: donor_k must be at least 1");

  std::vector<std::size_t> obs, mis;
  for (std::size_t i = 0; i < n; ++i) (observed[i] ? obs : mis).push_back(i);
  std::vector<double> out = target;
  if (mis.empty()) return out;
  if (obs.size() < static_cast<std::size_t>(donor_k))
    throw ConfigError("pmm_impute: fewer than donor_k observed rows");

  DesignMatrix dm_obs;
  dm_obs.names = predictors.names;
  dm_obs.X.resize(static_cast<Eigen::Index>(obs.size()), predictors.X.cols());
  Eigen::VectorXd y_obs(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    dm_obs.X.row(static_cast<Eigen::Index>(i)) = predictors.X.row(static_cast<Eigen::Index>(obs[i]));
    y_obs[static_cast<Eigen::Index>(i)] = target[obs[i]];
  }
  GlmFit fit = fit_wls(dm_obs, y_obs, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(obs.size())));
  Eigen::VectorXd beta_star = options.bayes_draw ? draw_coef(fit, rng).coef : fit.coef;

  // type-1 matching: donors on the non-drawn fit, recipients on the draw
  struct Donor {
    double pred;
    std::size_t row;
  };
  std::vector<Donor> donors(obs.size());
  Eigen::VectorXd yhat_obs = dm_obs.X * fit.coef;
  for (std::size_t i = 0; i < obs.size(); ++i)
    donors[i] = {yhat_obs[static_cast<Eigen::Index>(i)], obs[i]};
  std::sort(donors.begin(), donors.end(), [](const Donor& l, const Donor& r) {
    if (l.pred != r.pred) return l.pred < r.pred;
    return l.row < r.row;
  });

  std::vector<std::size_t> pool(static_cast<std::size_t>(donor_k));
  for (std::size_t mi : mis) {
    double target_pred = beta_star.dot(predictors.X.row(static_cast<Eigen::Index>(mi)));
    // expand around the insertion point to collect the k nearest donors
    auto it = std::lower_bound(donors.begin(), donors.end(), target_pred,
                               [](const Donor& d, double v) { return d.pred < v; });
    std::ptrdiff_t right = it - donors.begin();
    std::ptrdiff_t left = right - 1;
    for (int k = 0; k < donor_k; ++k) {
      bool take_left;
      if (left < 0) {
        take_left = false;
      } else if (right >= static_cast<std::ptrdiff_t>(donors.size())) {
        take_left = true;
      } else {
        double dl = target_pred - donors[static_cast<std::size_t>(left)].pred;
        double dr = donors[static_cast<std::size_t>(right)].pred - target_pred;
        take_left = dl <= dr;
      }
      pool[static_cast<std::size_t>(k)] =
          take_left ? donors[static_cast<std::size_t>(left--)].row
                    : donors[static_cast<std::size_t>(right++)].row;
    }
    out[mi] = target[pool[rng.uniform_index(pool.size())]];
  }
  return out;
}

std::vector<double> logistic_impute(const std::vector<double>& target,
                                    const DesignMatrix& predictors,
                                    const std::vector<std::uint8_t>& observed,
                                    RngStream& rng) {
  const std::size_t n = target.size();
  if (static_cast<std::size_t>(predictors.X.rows()) != n || observed.size() != n)
    throw ConfigError("logistic_impute: inconsistent input lengths");

  std::vector<std::size_t> obs, mis;
  for (std::size_t i = 0; i < n; ++i) (observed[i] ? obs : mis).push_back(i);
  std::vector<double> out = target;
  if (mis.empty()) return out;

  DesignMatrix dm_obs;
  dm_obs.names = predictors.names;
  dm_obs.X.resize(static_cast<Eigen::Index>(obs.size()), predictors.X.cols());
  Eigen::VectorXd y_obs(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    dm_obs.X.row(static_cast<Eigen::Index>(i)) = predictors.X.row(static_cast<Eigen::Index>(obs[i]));
    y_obs[static_cast<Eigen::Index>(i)] = target[obs[i]];
  }
  GlmFit fit = fit_logistic(dm_obs, y_obs);
  Eigen::VectorXd beta_star = draw_coef(fit, rng).coef;
  for (std::size_t mi : mis) {
    double p = expit(beta_star.dot(predictors.X.row(static_cast<Eigen::Index>(mi))));
    out[mi] = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// chained-equations engine

namespace {

struct EngineModel {
  ColumnModel model;
  std::size_t target_idx = 0;
  std::vector<std::size_t> rows_obs;  // scope rows, target observed in the input
  std::vector<std::size_t> rows_mis;  // scope rows to impute
};

struct PassiveColumn {
  std::size_t out_idx, a_idx, b_idx;
};

// Current-value design over `rows`, dropping predictors that are constant
// on the fit rows (mirrors what a chained-equations engine does when, say,
// the trial indicator is constant within the trial-only fit).
DesignMatrix design_from_work(const std::vector<std::vector<double>>& work,
                              const std::vector<std::string>& predictor_names,
                              const std::vector<std::size_t>& predictor_idx,
                              const std::vector<std::size_t>& fit_rows,
                              const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> keep;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < predictor_idx.size(); ++j) {
    const auto& col = work[predictor_idx[j]];
    double lo = col[fit_rows[0]], hi = lo;
    for (std::size_t r : fit_rows) {
      lo = std::min(lo, col[r]);
      hi = std::max(hi, col[r]);
    }
    if (hi > lo) {
      keep.push_back(predictor_idx[j]);
      names.push_back(predictor_names[j]);
    }
  }
  DesignMatrix d;
  d.names = std::move(names);
  d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(keep.size() + 1));
  d.X.col(0).setOnes();
  for (std::size_t j = 0; j < keep.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i)
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = work[keep[j]][rows[i]];
  return d;
}

}  // namespace

std::string ImputedSet::chain_log_csv() const {
  std::ostringstream os;
  os << "chain,iteration,column,n_imputed,mean,sd\n";
  for (const auto& e : chain_log) {
    os << e.chain << ',' << e.iteration << ',' << e.column << ',' << e.n_imputed << ','
       << e.mean << ',' << e.sd << '\n';
  }
  return os.str();
}

ImputedSet impute(const Dataset& input, const ImputationSpec& spec, int workers) {
  if (spec.m < 1) throw ConfigError("impute: m must be at least 1");
  if (spec.maxit < 1) throw ConfigError("impute: maxit must be at least 1");

  // materialize derived columns that do not exist yet
  Dataset base = input;
  for (const auto& d : spec.derived)
    if (!base.has_column(d.out))
      base = add_derived_product(base, d.source_a, d.source_b, d.out);

  const Column* s = base.find_role(ColumnRole::TrialIndicator);
  if (spec.row_scope == RowScope::nontrial_only && !s)
    throw ConfigError("nontrial_only scope requires a trial indicator column");

  std::vector<std::size_t> scope_rows;
  for (std::size_t i = 0; i < base.n_rows(); ++i)
    if (spec.row_scope == RowScope::superpopulation || s->values[i] == 0.0)
      scope_rows.push_back(i);

  std::vector<EngineModel> models;
  std::set<std::string> modeled;
  for (const auto& cm : spec.column_models) {
    if (!modeled.insert(cm.target).second)
      throw ConfigError("column '" + cm.target + "' has more than one model");
    EngineModel em;
    em.model = cm;
    em.target_idx = base.column_index(cm.target);
    const Column& col = base.column(em.target_idx);
    for (std::size_t r : scope_rows)
      (col.observed[r] ? em.rows_obs : em.rows_mis).push_back(r);
    models.push_back(std::move(em));
  }
  for (const auto& d : spec.derived) {
    if (d.mode == DerivedMode::passive && modeled.count(d.out))
      throw ConfigError("passive derived column '" + d.out + "' must not have a model");
    if (d.mode == DerivedMode::active && !modeled.count(d.out) &&
        masked_in_scope(base, d.out, scope_rows) > 0)
      throw ConfigError("active derived column '" + d.out + "' needs a model");
  }
  for (const auto& name : spec.variables) {
    if (modeled.count(name)) continue;
    bool passive = false;
    for (const auto& d : spec.derived)
      if (d.out == name && d.mode == DerivedMode::passive) passive = true;
    if (!passive && masked_in_scope(base, name, scope_rows) > 0)
      throw ConfigError("variable '" + name + "' has masked entries in scope but no model");
  }

  std::vector<PassiveColumn> passives;
  for (const auto& d : spec.derived)
    if (d.mode == DerivedMode::passive)
      passives.push_back({base.column_index(d.out), base.column_index(d.source_a),
                          base.column_index(d.source_b)});

  ImputedSet result;
  result.spec = spec;
  result.datasets.resize(static_cast<std::size_t>(spec.m));
  std::vector<std::vector<ChainLogEntry>> logs(static_cast<std::size_t>(spec.m));

  RngStream root(spec.seed);

  auto run_chain = [&](std::size_t chain) {
    RngStream rng = root.substream(chain);

    std::vector<std::vector<double>> work(base.n_cols());
    for (std::size_t j = 0; j < base.n_cols(); ++j) work[j] = base.column(j).values;

    auto recompute_passive_for = [&](std::size_t changed_idx) {
      for (const auto& p : passives) {
        if (p.a_idx != changed_idx && p.b_idx != changed_idx) continue;
        for (std::size_t r : scope_rows)
          work[p.out_idx][r] = work[p.a_idx][r] * work[p.b_idx][r];
      }
    };

    // initialization: random draws from the observed marginal
    for (const auto& em : models) {
      const Column& col = base.column(em.target_idx);
      std::vector<double> observed_values;
      observed_values.reserve(em.rows_obs.size());
      for (std::size_t r : em.rows_obs) observed_values.push_back(col.values[r]);
      if (observed_values.empty() && !em.rows_mis.empty())
        throw PipelineError("column '" + em.model.target +
                            "' has no observed values in scope to initialize from");
      for (std::size_t r : em.rows_mis)
        work[em.target_idx][r] = observed_values[rng.uniform_index(observed_values.size())];
    }
    for (const auto& p : passives)
      for (std::size_t r : scope_rows)
        work[p.out_idx][r] = work[p.a_idx][r] * work[p.b_idx][r];

    for (int iter = 1; iter <= spec.maxit; ++iter) {
      for (const auto& em : models) {
        if (em.rows_mis.empty()) continue;

        std::vector<std::size_t> predictor_idx;
        for (const auto& p : em.model.predictors)
          predictor_idx.push_back(base.column_index(p));

        // rows: observed block first, then the rows to impute
        std::vector<std::size_t> rows = em.rows_obs;
        rows.insert(rows.end(), em.rows_mis.begin(), em.rows_mis.end());
        DesignMatrix dm = design_from_work(work, em.model.predictors, predictor_idx,
                                           em.rows_obs, rows);

        std::vector<double> target(rows.size());
        std::vector<std::uint8_t> obs_flags(rows.size(), 0);
        for (std::size_t i = 0; i < em.rows_obs.size(); ++i) {
          target[i] = work[em.target_idx][em.rows_obs[i]];
          obs_flags[i] = 1;
        }
        for (std::size_t i = 0; i < em.rows_mis.size(); ++i)
          target[em.rows_obs.size() + i] = work[em.target_idx][em.rows_mis[i]];

        std::vector<double> filled;
        try {
          if (em.model.method == ImputeMethod::pmm) {
            filled = pmm_impute(target, dm, obs_flags, em.model.donor_k, rng);
          } else {
            filled = logistic_impute(target, dm, obs_flags, rng);
          }
        } catch (const Error& e) {
          throw PipelineError("imputation model for column '" + em.model.target +
                              "' failed at iteration " + std::to_string(iter) +
                              " (chain " + std::to_string(chain) + "): " + e.what());
        }

        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < em.rows_mis.size(); ++i) {
          double v = filled[em.rows_obs.size() + i];
          work[em.target_idx][em.rows_mis[i]] = v;
          sum += v;
          sum2 += v * v;
        }
        recompute_passive_for(em.target_idx);

        const double nm = static_cast<double>(em.rows_mis.size());
        double mean = sum / nm;
        double var = nm > 1 ? std::max(0.0, (sum2 - nm * mean * mean) / (nm - 1)) : 0.0;
        logs[chain].push_back({static_cast<int>(chain), iter, em.model.target, mean,
                               std::sqrt(var), em.rows_mis.size()});
      }
    }

    // completed dataset: imputed cells unmasked, everything else untouched
    Dataset completed = base;
    for (const auto& em : models) {
      Column& col = completed.column_mut(em.target_idx);
      for (std::size_t r : em.rows_mis) {
        col.values[r] = work[em.target_idx][r];
        col.observed[r] = 1;
      }
    }
    for (const auto& p : passives) {
      Column& col = completed.column_mut(p.out_idx);
      const Column& ca = completed.column(p.a_idx);
      const Column& cb = completed.column(p.b_idx);
      for (std::size_t i = 0; i < completed.n_rows(); ++i) {
        if (ca.observed[i] && cb.observed[i]) {
          col.values[i] = ca.values[i] * cb.values[i];
          col.observed[i] = 1;
        }
      }
    }
    result.datasets[chain] = std::move(completed);
  };

  parallel_for(static_cast<std::size_t>(spec.m), workers, run_chain);

  for (auto& log : logs)
    result.chain_log.insert(result.chain_log.end(), log.begin(), log.end());
  return result;
}

}  // namespace ipswlab
