#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ipswlab/tabular.hpp"

namespace ipswlab {

struct CovariateBalance {
  std::string name;
  double asd_unweighted = 0.0;
  double asd_weighted = 0.0;
};

struct BalanceReport {
  std::vector<CovariateBalance> covariates;
  double tipton_index = 0.0;
  double ess_trial = 0.0;
};

/// Absolute standardized difference between trial and target rows:
/// |m1 - m0| / sqrt((s1^2 + s0^2) / 2), population-form variances (binary
/// columns use p(1-p)). When weights are supplied the trial side uses
/// weighted moments; the target side is never reweighted.
double asd(const Dataset& ds, const std::string& covariate,
           const std::optional<std::vector<double>>& w = std::nullopt);

/// Binned Bhattacharyya overlap of two propensity-score samples on equal
/// width bins over [0,1]; 1 = identical histograms, 0 = disjoint support.
double tipton_index(const std::vector<double>& ps_trial,
                    const std::vector<double>& ps_target, int bins = 20);

/// Effective sample size (sum w)^2 / sum w^2.
double ess(const std::vector<double>& w);

BalanceReport balance_report(const Dataset& ds, const std::vector<std::string>& covariates,
                             const std::vector<double>& ps, const std::vector<double>& w,
                             int bins = 20);

}  // namespace ipswlab
