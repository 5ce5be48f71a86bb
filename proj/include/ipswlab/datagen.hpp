#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ipswlab/rng.hpp"
#include "ipswlab/tabular.hpp"

namespace ipswlab {

/// One simulation scenario: target size, selection logit, outcome
/// coefficients under treatment/control, noise, randomization probability.
struct ScenarioConfig {
  std::size_t n_target = 10000;
  std::array<double, 4> alpha = {-4.10, 1.0, 1.0, 1.0};
  std::array<double, 4> beta1 = {1.0, 1.0, 1.0, 1.0};
  std::array<double, 4> beta0 = {0.0, 0.0, 0.0, 1.0};
  double noise_sd = 1.0;
  double treat_prob = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Generated target population. The potential-outcome columns live next
/// to (not inside) the dataset so estimators can never see them; the
/// simulate command can append them on request.
struct Superpopulation {
  Dataset data;             // X1..X3, S, A (masked off-trial), Y (masked off-trial)
  std::vector<double> y1;   // potential outcome under treatment, every row
  std::vector<double> y0;   // potential outcome under control, every row
  double true_pate_s0 = 0.0;   // mean(Y1 - Y0) over S=0 rows
  double true_pate_all = 0.0;  // mean(Y1 - Y0) over all rows
  double realized_tate = 0.0;  // arm-mean difference of realized Y in the trial
  std::size_t n_trial = 0;
};

/// Three i.i.d. standard-normal covariate columns.
std::vector<std::vector<double>> gen_covariates(std::size_t n, RngStream& rng);

/// S_i ~ Bernoulli(expit(alpha . (1, X_i))).
std::vector<double> gen_trial_indicator(const std::vector<std::vector<double>>& X,
                                        const std::array<double, 4>& alpha, RngStream& rng);

/// Treatment column: Bernoulli(treat_prob) where S=1, masked elsewhere.
/// Returns (values, observed).
std::pair<std::vector<double>, std::vector<std::uint8_t>> gen_treatment(
    const std::vector<double>& s, double treat_prob, RngStream& rng);

/// (Y1, Y0) from the linear potential-outcome model with independent
/// N(0, noise_sd^2) errors.
std::pair<std::vector<double>, std::vector<double>> gen_potential_outcomes(
    const std::vector<std::vector<double>>& X, const std::array<double, 4>& beta1,
    const std::array<double, 4>& beta0, double noise_sd, RngStream& rng);

/// Composes the generators; retries (bounded) when the realized trial is
/// degenerate (< 2 trial rows or a single treatment arm).
Superpopulation make_superpopulation(const ScenarioConfig& cfg);
Superpopulation make_superpopulation(const ScenarioConfig& cfg, RngStream rng);

}  // namespace ipswlab
