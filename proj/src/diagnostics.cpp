#include "ipswlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "ipswlab/error.hpp"

namespace ipswlab {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population form
};

Moments weighted_moments(const std::vector<double>& x, const std::vector<double>& w) {
  double sw = 0.0, sx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
  }
  if (sw <= 0) throw ConfigError("asd: zero total weight on the trial side");
  Moments m;
  m.mean = sx / sw;
  double sv = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sv += w[i] * (x[i] - m.mean) * (x[i] - m.mean);
  m.var = sv / sw;
  return m;
}

bool all_binary(const std::vector<double>& x) {
  for (double v : x)
    if (v != 0.0 && v != 1.0) return false;
  return !x.empty();
}

}  // namespace

double asd(const Dataset& ds, const std::string& covariate,
           const std::optional<std::vector<double>>& w) {
  const Column* s = ds.find_role(ColumnRole::TrialIndicator);
  if (!s) throw ConfigError("asd needs a trial indicator column");
  const Column& col = ds.column(covariate);

  std::vector<double> x1, x0, w1;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    if (!col.observed[i])
      throw ConfigError("asd: covariate '" + covariate + "' masked at row " +
                        std::to_string(i));
    if (s->values[i] == 1.0) {
      x1.push_back(col.values[i]);
      if (w) w1.push_back((*w)[i]);
    } else {
      x0.push_back(col.values[i]);
    }
  }
  if (x1.empty() || x0.empty()) throw ConfigError("asd: empty stratum");

  Moments m1 = weighted_moments(x1, w ? w1 : std::vector<double>(x1.size(), 1.0));
  Moments m0 = weighted_moments(x0, std::vector<double>(x0.size(), 1.0));
  if (all_binary(x1) && all_binary(x0)) {
    m1.var = m1.mean * (1.0 - m1.mean);
    m0.var = m0.mean * (1.0 - m0.mean);
  }
  double pooled = (m1.var + m0.var) / 2.0;
  if (pooled <= 0.0) throw ConfigError("asd: zero pooled variance for '" + covariate + "'");
  return std::abs(m1.mean - m0.mean) / std::sqrt(pooled);
}

double tipton_index(const std::vector<double>& ps_trial,
                    const std::vector<double>& ps_target, int bins) {
  if (bins < 2) throw ConfigError("tipton_index needs at least 2 bins");
  if (ps_trial.empty() || ps_target.empty())
    throw ConfigError("tipton_index needs non-empty samples");

  auto histogram = [bins](const std::vector<double>& ps) {
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    for (double p : ps) {
      if (p < 0.0 || p > 1.0)
        throw ConfigError("tipton_index: propensity score outside [0,1]");
      int b = std::min(static_cast<int>(p * bins), bins - 1);
      counts[static_cast<std::size_t>(b)] += 1.0;
    }
    return counts;
  };
  std::vector<double> f = histogram(ps_trial);
  std::vector<double> g = histogram(ps_target);

  // sum_b sqrt(c_b d_b) / sqrt(n m): integer products keep the identical
  // and disjoint cases exact (1 and 0).
  double num = 0.0;
  for (int b = 0; b < bins; ++b)
    num += std::sqrt(f[static_cast<std::size_t>(b)] * g[static_cast<std::size_t>(b)]);
  double den = std::sqrt(static_cast<double>(ps_trial.size()) *
                         static_cast<double>(ps_target.size()));
  return num / den;
}

double ess(const std::vector<double>& w) {
  double sw = 0.0, sw2 = 0.0;
  for (double v : w) {
    if (v < 0) throw ConfigError("ess: negative weight");
    sw += v;
    sw2 += v * v;
  }
  if (sw <= 0.0) throw ConfigError("ess: all weights are zero");
  return sw * sw / sw2;
}

BalanceReport balance_report(const Dataset& ds, const std::vector<std::string>& covariates,
                             const std::vector<double>& ps, const std::vector<double>& w,
                             int bins) {
  const Column* s = ds.find_role(ColumnRole::TrialIndicator);
  if (!s) throw ConfigError("balance report needs a trial indicator column");

  BalanceReport report;
  for (const auto& name : covariates) {
    CovariateBalance cb;
    cb.name = name;
    cb.asd_unweighted = asd(ds, name);
    cb.asd_weighted = asd(ds, name, w);
    report.covariates.push_back(cb);
  }

  std::vector<double> ps1, ps0, w1;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    if (s->values[i] == 1.0) {
      ps1.push_back(ps[i]);
      w1.push_back(w[i]);
    } else {
      ps0.push_back(ps[i]);
    }
  }
  report.tipton_index = tipton_index(ps1, ps0, bins);
  report.ess_trial = ess(w1);
  return report;
}

}  // namespace ipswlab
