#include "ipswlab/ipsw.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ipswlab/error.hpp"
#include "ipswlab/parallel.hpp"

namespace ipswlab {

std::string weight_scheme_name(WeightScheme scheme) {
  return scheme == WeightScheme::Generalize ? "generalize" : "transport";
}

WeightScheme parse_weight_scheme(const std::string& name) {
  if (name == "generalize") return WeightScheme::Generalize;
  if (name == "transport") return WeightScheme::Transport;
  throw ConfigError("unknown weight scheme '" + name + "' (generalize|transport)");
}

namespace {

const Column& indicator(const Dataset& ds) {
  const Column* s = ds.find_role(ColumnRole::TrialIndicator);
  if (!s) throw ConfigError("dataset has no trial indicator column");
  return *s;
}

std::vector<std::size_t> all_rows(const Dataset& ds) {
  std::vector<std::size_t> rows(ds.n_rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace

GlmFit estimate_ps_fit(const Dataset& ds, const std::vector<std::string>& covariates) {
  const Column& s = indicator(ds);
  for (auto o : s.observed)
    if (!o) throw ConfigError("trial indicator must be observed everywhere");
  auto rows = all_rows(ds);
  DesignMatrix dm = make_design(ds, covariates, rows);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    y[static_cast<Eigen::Index>(i)] = s.values[i];
  return fit_logistic(dm, y);
}

std::vector<double> estimate_ps(const Dataset& ds, const std::vector<std::string>& covariates) {
  GlmFit fit = estimate_ps_fit(ds, covariates);
  DesignMatrix dm = make_design(ds, covariates, all_rows(ds));
  return predict_proba(fit, dm);
}

std::vector<double> treatment_prob(const Dataset& ds, TreatProbMode mode,
                                   const std::vector<std::string>& covariates) {
  const Column& s = indicator(ds);
  const Column* a = ds.find_role(ColumnRole::Treatment);
  if (!a) throw ConfigError("dataset has no treatment column");

  std::vector<std::size_t> trial;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    if (s.values[i] != 1.0) continue;
    if (!a->observed[i]) throw ConfigError("treatment masked on a trial row");
    trial.push_back(i);
    n1 += (a->values[i] == 1.0);
  }
  if (trial.empty()) throw ConfigError("no trial rows");
  if (n1 == 0 || n1 == trial.size())
    throw PipelineError("single-arm trial: both treatment arms are required");

  std::vector<double> e(ds.n_rows(), 0.0);
  if (mode == TreatProbMode::marginal) {
    double e1 = static_cast<double>(n1) / static_cast<double>(trial.size());
    for (std::size_t i : trial) e[i] = a->values[i] == 1.0 ? e1 : 1.0 - e1;
    return e;
  }
  std::vector<std::string> covs = covariates.empty() ? ds.covariate_names() : covariates;
  DesignMatrix dm = make_design(ds, covs, trial);
  Eigen::VectorXd y(static_cast<Eigen::Index>(trial.size()));
  for (std::size_t i = 0; i < trial.size(); ++i)
    y[static_cast<Eigen::Index>(i)] = a->values[trial[i]];
  GlmFit fit = fit_logistic(dm, y);
  std::vector<double> p1 = predict_proba(fit, dm);
  for (std::size_t i = 0; i < trial.size(); ++i)
    e[trial[i]] = a->values[trial[i]] == 1.0 ? p1[i] : 1.0 - p1[i];
  return e;
}

std::vector<double> compute_weights(const Dataset& ds, const std::vector<double>& ps,
                                    const std::vector<double>& e_a, WeightScheme scheme) {
  const Column& s = indicator(ds);
  if (ps.size() != ds.n_rows())
    throw ConfigError("propensity scores do not match dataset rows");

  double n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) (s.values[i] == 1.0 ? n1 : n0) += 1.0;

  std::vector<double> w(ds.n_rows(), 0.0);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    if (s.values[i] != 1.0) continue;  // weight support is the trial
    if (!(ps[i] > 0.0 && ps[i] < 1.0))
      throw PipelineError("propensity score at a trial row is 0 or 1");
    if (scheme == WeightScheme::Generalize) {
      if (e_a.size() != ds.n_rows())
        throw ConfigError("treatment probabilities do not match dataset rows");
      if (e_a[i] <= 0.0)
        throw PipelineError("non-positive treatment probability on a trial row");
      w[i] = 1.0 / (ps[i] * e_a[i]);
    } else {
      if (n0 == 0) throw PipelineError("transport weights need non-trial rows");
      w[i] = (1.0 - ps[i]) / ps[i] * (n1 / n0);
    }
  }
  return w;
}

EstimateResult estimate_pate(const Dataset& ds, const std::vector<double>& w) {
  const Column& s = indicator(ds);
  const Column* a = ds.find_role(ColumnRole::Treatment);
  const Column* y = ds.find_role(ColumnRole::Outcome);
  if (!a || !y) throw ConfigError("dataset needs treatment and outcome columns");
  if (w.size() != ds.n_rows()) throw ConfigError("weights do not match dataset rows");

  std::vector<std::size_t> rows;
  std::size_t pos1 = 0, pos0 = 0;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    if (s.values[i] != 1.0) continue;
    if (!a->observed[i] || !y->observed[i])
      throw ConfigError("treatment/outcome masked on a trial row");
    rows.push_back(i);
    if (w[i] > 0) (a->values[i] == 1.0 ? pos1 : pos0) += 1;
  }
  if (pos1 < 2 || pos0 < 2)
    throw PipelineError("degenerate arms: need at least 2 positive-weight rows per arm");

  DesignMatrix dm = make_design(ds, {a->name}, rows);
  Eigen::VectorXd yv(static_cast<Eigen::Index>(rows.size()));
  Eigen::VectorXd wv(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    yv[static_cast<Eigen::Index>(i)] = y->values[rows[i]];
    wv[static_cast<Eigen::Index>(i)] = w[rows[i]];
  }
  GlmFit fit = fit_wls(dm, yv, wv);

  EstimateResult res;
  res.estimate = fit.coef[1];
  res.robust_se = fit.robust_se(1);
  res.model_se = fit.se(1);
  res.n_used = pos1 + pos0;

  double sum = 0.0, sum2 = 0.0, lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t i : rows) {
    if (w[i] <= 0) continue;
    sum += w[i];
    sum2 += w[i] * w[i];
    if (first) {
      lo = hi = w[i];
      first = false;
    } else {
      lo = std::min(lo, w[i]);
      hi = std::max(hi, w[i]);
    }
  }
  res.weights = {lo, hi, sum, sum2 > 0 ? sum * sum / sum2 : 0.0};
  if (!std::isfinite(res.estimate))
    throw PipelineError("non-finite treatment effect estimate");
  return res;
}

EstimateResult ipsw_pipeline(const Dataset& ds, const PipelineParams& params) {
  std::vector<std::string> covs =
      params.covariates.empty() ? ds.covariate_names() : params.covariates;
  std::vector<double> ps = estimate_ps(ds, covs);
  std::vector<double> e_a;
  if (params.scheme == WeightScheme::Generalize)
    e_a = treatment_prob(ds, params.treat_prob_mode, covs);
  std::vector<double> w = compute_weights(ds, ps, e_a, params.scheme);
  return estimate_pate(ds, w);
}

PooledEstimate pool_estimates(const std::vector<double>& estimates,
                              const std::vector<double>& variances) {
  const int m = static_cast<int>(estimates.size());
  if (m < 1) throw ConfigError("pooling needs at least one estimate");
  if (variances.size() != estimates.size())
    throw ConfigError("pooling needs one variance per estimate");

  PooledEstimate pooled;
  pooled.m = m;
  pooled.estimate = std::accumulate(estimates.begin(), estimates.end(), 0.0) / m;
  pooled.within_var = std::accumulate(variances.begin(), variances.end(), 0.0) / m;
  double between = 0.0;
  for (double e : estimates) between += (e - pooled.estimate) * (e - pooled.estimate);
  pooled.between_var = m > 1 ? between / (m - 1) : 0.0;
  pooled.total_var = pooled.within_var + (1.0 + 1.0 / m) * pooled.between_var;
  return pooled;
}

PooledEstimate psi_within(const ImputedSet& imputed, const PipelineParams& params) {
  const std::size_t m = imputed.datasets.size();
  if (m < 1) throw ConfigError("psi_within needs at least one imputed dataset");

  std::vector<double> estimates(m), variances(m);
  for (std::size_t i = 0; i < m; ++i) {
    try {
      EstimateResult r = ipsw_pipeline(imputed.datasets[i], params);
      estimates[i] = r.estimate;
      variances[i] = r.robust_se * r.robust_se;
    } catch (const Error& e) {
      throw PipelineError("IPSW failed in imputed dataset " + std::to_string(i) + ": " +
                          e.what());
    }
  }
  return pool_estimates(estimates, variances);
}

EstimateResult complete_case(const Dataset& ds, const PipelineParams& params) {
  const Column& s = indicator(ds);
  std::vector<std::string> covs =
      params.covariates.empty() ? ds.covariate_names() : params.covariates;
  const Column* a = ds.find_role(ColumnRole::Treatment);
  const Column* y = ds.find_role(ColumnRole::Outcome);

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    bool complete = true;
    for (const auto& name : covs)
      if (!ds.column(name).observed[i]) complete = false;
    if (s.values[i] == 1.0) {
      if (a && !a->observed[i]) complete = false;
      if (y && !y->observed[i]) complete = false;
    }
    if (complete) keep.push_back(i);
  }

  Dataset cc = take_rows(ds, keep);
  std::size_t n1 = 0, n0 = 0;
  const Column& s_cc = indicator(cc);
  for (std::size_t i = 0; i < cc.n_rows(); ++i) (s_cc.values[i] == 1.0 ? n1 : n0) += 1;
  if (n1 == 0 || n0 == 0)
    throw PipelineError("complete-case analysis emptied a stratum");
  return ipsw_pipeline(cc, params);
}

double bootstrap_se(const Dataset& ds, const BootstrapPipeline& pipeline, int B,
                    RngStream& rng, int workers) {
  if (B < 2) throw ConfigError("bootstrap needs B >= 2");
  const Column& s = indicator(ds);
  std::vector<std::size_t> rows1, rows0;
  for (std::size_t i = 0; i < ds.n_rows(); ++i)
    (s.values[i] == 1.0 ? rows1 : rows0).push_back(i);

  std::vector<double> estimates(static_cast<std::size_t>(B),
                                std::numeric_limits<double>::quiet_NaN());
  RngStream root = rng.substream(0x626f6f74);  // detached from the caller's stream

  parallel_for(static_cast<std::size_t>(B), workers, [&](std::size_t b) {
    RngStream rb = root.substream(b);
    std::vector<std::size_t> resample;
    resample.reserve(ds.n_rows());
    for (std::size_t i = 0; i < rows1.size(); ++i)
      resample.push_back(rows1[rb.uniform_index(rows1.size())]);
    for (std::size_t i = 0; i < rows0.size(); ++i)
      resample.push_back(rows0[rb.uniform_index(rows0.size())]);
    Dataset boot = take_rows(ds, resample);
    try {
      estimates[b] = pipeline(boot, rb);
    } catch (const Error&) {
      // left as NaN; counted below
    }
  });

  std::vector<double> ok;
  ok.reserve(estimates.size());
  for (double e : estimates)
    if (!std::isnan(e)) ok.push_back(e);
  std::size_t failed = estimates.size() - ok.size();
  if (failed * 100 > estimates.size())
    throw PipelineError("bootstrap: " + std::to_string(failed) + " of " +
                        std::to_string(B) + " resamples failed (>1%)");
  auto [lo, hi] = std::minmax_element(ok.begin(), ok.end());
  if (*lo == *hi) return 0.0;  // constant statistic, exactly
  double mean = std::accumulate(ok.begin(), ok.end(), 0.0) / ok.size();
  double ss = 0.0;
  for (double e : ok) ss += (e - mean) * (e - mean);
  return std::sqrt(ss / (ok.size() - 1));
}

}  // namespace ipswlab
