#include "ipswlab/study.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ipswlab/error.hpp"
#include "ipswlab/parallel.hpp"

namespace ipswlab {

std::string method_name(Method method) {
  switch (method) {
    case Method::FullData: return "FullData";
    case Method::CC: return "CC";
    case Method::M1A: return "M1A";
    case Method::M1B: return "M1B";
    case Method::M2: return "M2";
    case Method::M3A: return "M3A";
    case Method::M3B: return "M3B";
  }
  return "FullData";
}

Method parse_method(const std::string& name) {
  if (name == "FullData") return Method::FullData;
  if (name == "CC") return Method::CC;
  if (name == "M1A") return Method::M1A;
  if (name == "M1B") return Method::M1B;
  if (name == "M2") return Method::M2;
  if (name == "M3A") return Method::M3A;
  if (name == "M3B") return Method::M3B;
  throw ConfigError("unknown method '" + name + "'");
}

void StudyConfig::validate() const {
  scenario.validate();
  mar.validate();
  if (n_sim < 2) throw ConfigError("n_sim must be at least 2");
  if (methods.empty()) throw ConfigError("no methods requested");
  if (trial_fracs.empty()) throw ConfigError("no trial-missing levels requested");
  for (double f : trial_fracs)
    if (f < 0 || f > 1) throw ConfigError("trial-missing level outside [0,1]");
  bool has_m1a = std::find(methods.begin(), methods.end(), Method::M1A) != methods.end();
  bool has_zero = std::find(trial_fracs.begin(), trial_fracs.end(), 0.0) != trial_fracs.end();
  if (has_m1a && !has_zero)
    throw ConfigError("M1A requires fully observed trial (trial-missing level 0)");
}

MetricRecord performance_metrics(const std::vector<double>& estimates, double truth,
                                 const std::vector<double>& robust_ses) {
  const std::size_t n = estimates.size();
  if (n < 2) throw ConfigError("performance_metrics needs at least 2 estimates");
  if (robust_ses.size() != n)
    throw ConfigError("robust SE array must match the estimates");

  MetricRecord m;
  m.n = n;
  double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / n;
  m.bias = mean - truth;

  double ss = 0.0;
  for (double e : estimates) ss += (e - mean) * (e - mean);
  m.emp_se = std::sqrt(ss / (n - 1));
  m.bias_mcse = m.emp_se / std::sqrt(static_cast<double>(n));
  m.emp_se_mcse = m.emp_se / std::sqrt(2.0 * (n - 1));

  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (estimates[i] - truth) * (estimates[i] - truth);
  m.mse = std::accumulate(sq.begin(), sq.end(), 0.0) / n;
  double ss_sq = 0.0;
  for (double v : sq) ss_sq += (v - m.mse) * (v - m.mse);
  m.mse_mcse = std::sqrt(ss_sq / (n - 1)) / std::sqrt(static_cast<double>(n));

  m.avg_robust_se = std::accumulate(robust_ses.begin(), robust_ses.end(), 0.0) / n;
  return m;
}

namespace {

struct Cell {
  Method method;
  std::optional<double> trial_missing;
};

struct CellOutcome {
  bool ok = false;
  double estimate = 0.0;
  double se = 0.0;
};

struct ReplicateOutcome {
  std::vector<CellOutcome> cells;
  ReplicateTruth truth;
};

std::vector<Cell> make_cells(const StudyConfig& cfg) {
  std::vector<Cell> cells;
  for (Method m : cfg.methods)
    if (m == Method::FullData) cells.push_back({m, std::nullopt});
  for (double level : cfg.trial_fracs) {
    for (Method m : cfg.methods) {
      if (m == Method::FullData) continue;
      if (m == Method::M1A && level != 0.0) continue;
      cells.push_back({m, level});
    }
  }
  return cells;
}

std::string format_level(std::optional<double> level) {
  if (!level) return "NA";
  std::ostringstream os;
  os << *level;
  return os.str();
}

}  // namespace

const StudyCell* StudyResult::find(Method method, std::optional<double> trial_missing) const {
  for (const auto& c : cells) {
    if (c.method != method) continue;
    if (trial_missing.has_value() != c.trial_missing.has_value()) continue;
    if (trial_missing && *trial_missing != *c.trial_missing) continue;
    return &c;
  }
  return nullptr;
}

StudyResult run_study(const StudyConfig& cfg, int workers) {
  cfg.validate();
  const std::vector<Cell> cells = make_cells(cfg);
  const std::size_t n_sim = static_cast<std::size_t>(cfg.n_sim);

  std::vector<ReplicateOutcome> outcomes(n_sim);
  RngStream master(cfg.master_seed);

  PipelineParams params;
  params.scheme = WeightScheme::Generalize;
  params.treat_prob_mode = TreatProbMode::marginal;

  parallel_for(n_sim, workers, [&](std::size_t r) {
    RngStream rep = master.substream(r);
    Superpopulation pop = make_superpopulation(cfg.scenario, rep.substream(0));

    ReplicateOutcome& out = outcomes[r];
    out.cells.resize(cells.size());
    out.truth = {r, pop.true_pate_s0, pop.true_pate_all, pop.realized_tate};

    PipelineParams rparams = params;
    rparams.covariates = pop.data.covariate_names();

    // MAR masks per level, reused across methods
    std::vector<Dataset> masked;
    masked.reserve(cfg.trial_fracs.size());
    for (std::size_t li = 0; li < cfg.trial_fracs.size(); ++li) {
      MarSpec ms = cfg.mar;
      ms.frac_trial = cfg.trial_fracs[li];
      masked.push_back(induce_mar(pop.data, ms, rep.substream(1 + li)));
    }

    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      const Cell& cell = cells[ci];
      CellOutcome& co = out.cells[ci];
      try {
        if (cell.method == Method::FullData) {
          EstimateResult res = ipsw_pipeline(pop.data, rparams);
          co = {true, res.estimate, res.robust_se};
          continue;
        }
        std::size_t li = 0;
        while (cfg.trial_fracs[li] != *cell.trial_missing) ++li;
        const Dataset& ds = masked[li];
        if (cell.method == Method::CC) {
          EstimateResult res = complete_case(ds, rparams);
          co = {true, res.estimate, res.robust_se};
        } else {
          ModelKind kind = parse_model_kind(method_name(cell.method));
          ImputationSpec spec = build_spec(kind, ds, cfg.m_rule, cfg.interactions);
          spec.seed = rep.substream(1000 + ci).seed();
          ImputedSet imputed = impute(ds, spec);
          PooledEstimate pooled = psi_within(imputed, rparams);
          co = {true, pooled.estimate, pooled.se()};
        }
      } catch (const Error&) {
        co.ok = false;  // excluded from this cell's aggregates, counted below
      }
    }
  });

  StudyResult result;
  result.n_sim = cfg.n_sim;

  double sum_s0 = 0.0, sum_all = 0.0, sum_tate = 0.0;
  for (const auto& o : outcomes) {
    sum_s0 += o.truth.true_pate_s0;
    sum_all += o.truth.true_pate_all;
    sum_tate += o.truth.realized_tate;
    result.truths.push_back(o.truth);
  }
  result.mean_true_pate_s0 = sum_s0 / static_cast<double>(n_sim);
  result.mean_true_pate_all = sum_all / static_cast<double>(n_sim);
  result.mean_realized_tate = sum_tate / static_cast<double>(n_sim);
  double ss_tate = 0.0;
  for (const auto& o : outcomes) {
    double d = o.truth.realized_tate - result.mean_realized_tate;
    ss_tate += d * d;
  }
  result.sd_realized_tate = std::sqrt(ss_tate / static_cast<double>(n_sim - 1));

  result.truth_value = cfg.truth == TruthKind::pate_s0 ? result.mean_true_pate_s0
                                                       : result.mean_true_pate_all;

  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    std::vector<double> estimates, ses;
    std::size_t failed = 0;
    for (std::size_t r = 0; r < n_sim; ++r) {
      const CellOutcome& co = outcomes[r].cells[ci];
      if (!co.ok) {
        ++failed;
        continue;
      }
      estimates.push_back(co.estimate);
      ses.push_back(co.se);
      result.estimates.push_back({r, cells[ci].method, cells[ci].trial_missing,
                                  co.estimate, co.se});
    }
    if (failed * 20 > n_sim)
      throw StudyError("method " + method_name(cells[ci].method) + " at trial-missing " +
                       format_level(cells[ci].trial_missing) + " failed in " +
                       std::to_string(failed) + " of " + std::to_string(n_sim) +
                       " replicates (>5%)");
    StudyCell sc;
    sc.method = cells[ci].method;
    sc.trial_missing = cells[ci].trial_missing;
    sc.n_failed = failed;
    sc.metrics = performance_metrics(estimates, result.truth_value, ses);
    result.cells.push_back(sc);
  }
  return result;
}

std::string StudyResult::results_csv() const {
  std::ostringstream os;
  os << "method,trial_missing,bias,bias_mcse,emp_se,emp_se_mcse,avg_robust_se,"
        "mse,mse_mcse,n_completed\n";
  for (const auto& c : cells) {
    const MetricRecord& m = c.metrics;
    os << method_name(c.method) << ',' << format_level(c.trial_missing) << ',' << m.bias
       << ',' << m.bias_mcse << ',' << m.emp_se << ',' << m.emp_se_mcse << ','
       << m.avg_robust_se << ',' << m.mse << ',' << m.mse_mcse << ',' << m.n << '\n';
  }
  return os.str();
}

std::string StudyResult::estimates_csv() const {
  std::ostringstream os;
  os << "replicate,method,trial_missing,estimate,se\n";
  for (const auto& e : estimates) {
    os << e.replicate << ',' << method_name(e.method) << ','
       << format_level(e.trial_missing) << ',' << e.estimate << ',' << e.se << '\n';
  }
  return os.str();
}

std::string StudyResult::truths_csv() const {
  std::ostringstream os;
  os << "replicate,true_pate_s0,true_pate_all,realized_tate\n";
  for (const auto& t : truths) {
    os << t.replicate << ',' << t.true_pate_s0 << ',' << t.true_pate_all << ','
       << t.realized_tate << '\n';
  }
  return os.str();
}

}  // namespace ipswlab
