#include <cmath>
#include <numeric>

#include "doctest.h"

#include "ipswlab/datagen.hpp"
#include "ipswlab/error.hpp"
#include "ipswlab/ipsw.hpp"
#include "ipswlab/missingness.hpp"

using namespace ipswlab;

namespace {

Superpopulation main_scenario(std::uint64_t seed = 61) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  return make_superpopulation(cfg);
}

// tiny balanced trial + target fixture
Dataset four_row_trial() {
  return build_dataset({{"X1", {0.5, -0.5, 1.0, -1.0, 0.2, -0.2}},
                        {"S", {1, 1, 1, 1, 0, 0}},
                        {"A", {1, 0, 1, 0, 0, 0}},
                        {"Y", {3.0, 1.0, 5.0, 2.0, 0, 0}}},
                       {{"S", ColumnRole::TrialIndicator},
                        {"A", ColumnRole::Treatment},
                        {"Y", ColumnRole::Outcome}});
}

}  // namespace

TEST_CASE("generalize weights: arithmetic and support") {
  Dataset ds = four_row_trial();
  std::vector<double> ps = {0.25, 0.25, 0.25, 0.25, 0.2, 0.2};
  std::vector<double> e_a = {0.5, 0.5, 0.5, 0.5, 0, 0};
  auto w = compute_weights(ds, ps, e_a, WeightScheme::Generalize);
  CHECK(w[0] == doctest::Approx(8.0));
  CHECK(w[4] == 0.0);
  CHECK(w[5] == 0.0);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    bool trial = ds.column("S").values[i] == 1.0;
    CHECK((w[i] > 0) == trial);
  }
}

TEST_CASE("transport weights are one when the PS is flat at the sampling fraction") {
  Dataset ds = four_row_trial();
  // P(S=1) = 4/6
  std::vector<double> ps(6, 4.0 / 6.0);
  auto w = compute_weights(ds, ps, {}, WeightScheme::Transport);
  for (std::size_t i = 0; i < 4; ++i) CHECK(w[i] == doctest::Approx(1.0));
  CHECK(w[4] == 0.0);
}

TEST_CASE("degenerate propensity scores on trial rows are an error") {
  Dataset ds = four_row_trial();
  std::vector<double> ps = {1.0, 0.25, 0.25, 0.25, 0.2, 0.2};
  std::vector<double> e_a(6, 0.5);
  CHECK_THROWS_AS(compute_weights(ds, ps, e_a, WeightScheme::Generalize), PipelineError);
}

TEST_CASE("treatment_prob marginal mode uses arm fractions") {
  std::vector<double> s(500, 1.0), a(500, 0.0), y(500, 0.0);
  for (std::size_t i = 0; i < 250; ++i) a[i] = 1.0;
  Dataset ds = build_dataset({{"X1", std::vector<double>(500, 0.1)},
                              {"S", s},
                              {"A", a},
                              {"Y", y}},
                             {{"S", ColumnRole::TrialIndicator},
                              {"A", ColumnRole::Treatment},
                              {"Y", ColumnRole::Outcome}});
  auto e = treatment_prob(ds, TreatProbMode::marginal);
  CHECK(e[0] == 0.5);
  CHECK(e[499] == 0.5);

  // 300/500 treated: a control row gets the complement 0.4
  std::vector<double> a2 = a;
  for (std::size_t i = 250; i < 300; ++i) a2[i] = 1.0;
  Dataset ds3 = build_dataset({{"X1", std::vector<double>(500, 0.1)},
                               {"S", s},
                               {"A", a2},
                               {"Y", y}},
                              {{"S", ColumnRole::TrialIndicator},
                               {"A", ColumnRole::Treatment},
                               {"Y", ColumnRole::Outcome}});
  auto e3 = treatment_prob(ds3, TreatProbMode::marginal);
  CHECK(e3[499] == doctest::Approx(0.4));  // an A=0 row
  CHECK(e3[0] == doctest::Approx(0.6));
}

TEST_CASE("logistic treatment probabilities agree with marginal under randomization") {
  Superpopulation pop = main_scenario(62);
  auto marginal = treatment_prob(pop.data, TreatProbMode::marginal);
  auto logistic = treatment_prob(pop.data, TreatProbMode::logistic);
  const auto& s = pop.data.column("S").values;
  double n1 = 0;
  for (double v : s) n1 += v;
  double se = std::sqrt(0.25 / n1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != 1.0) continue;
    CHECK(std::abs(logistic[i] - marginal[i]) < 4 * se + 0.05);
  }
}

TEST_CASE("single-arm trial is an explicit error") {
  Dataset ds = build_dataset({{"X1", {0.1, 0.2, 0.3}},
                              {"S", {1, 1, 0}},
                              {"A", {1, 1, 0}},
                              {"Y", {1, 2, 0}}},
                             {{"S", ColumnRole::TrialIndicator},
                              {"A", ColumnRole::Treatment},
                              {"Y", ColumnRole::Outcome}});
  CHECK_THROWS_AS(treatment_prob(ds, TreatProbMode::marginal), PipelineError);
}

TEST_CASE("estimate_pate reduces to the arm-mean difference under flat weights") {
  Dataset ds = four_row_trial();
  std::vector<double> w = {2, 2, 2, 2, 0, 0};
  EstimateResult res = estimate_pate(ds, w);
  // arm means: (3+5)/2 - (1+2)/2 = 4 - 1.5
  CHECK(res.estimate == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(res.n_used == 4);
}

TEST_CASE("estimate_pate equals the weighted arm-mean difference in closed form") {
  Dataset ds = four_row_trial();
  std::vector<double> w = {3.0, 1.5, 0.5, 2.0, 0, 0};
  EstimateResult res = estimate_pate(ds, w);
  double m1 = (3.0 * 3.0 + 0.5 * 5.0) / 3.5;
  double m0 = (1.5 * 1.0 + 2.0 * 2.0) / 3.5;
  CHECK(res.estimate == doctest::Approx(m1 - m0).epsilon(1e-12));
}

TEST_CASE("weight scale invariance of the effect estimate") {
  Dataset ds = four_row_trial();
  std::vector<double> w = {3.0, 1.5, 0.5, 2.0, 0, 0};
  EstimateResult a = estimate_pate(ds, w);
  for (auto& v : w) v *= 123.0;
  EstimateResult b = estimate_pate(ds, w);
  CHECK(a.estimate == doctest::Approx(b.estimate).epsilon(1e-12));
}

TEST_CASE("degenerate arms after weighting are an error") {
  Dataset ds = four_row_trial();
  std::vector<double> w = {1.0, 0.0, 1.0, 0.0, 0, 0};  // no weight on controls
  CHECK_THROWS_AS(estimate_pate(ds, w), PipelineError);
}

TEST_CASE("estimate_ps recovers the selection coefficients on the main scenario") {
  Superpopulation pop = main_scenario(63);
  GlmFit fit = estimate_ps_fit(pop.data, {"X1", "X2", "X3"});
  std::vector<double> truth = {-4.10, 1.0, 1.0, 1.0};
  for (int j = 0; j < 4; ++j)
    CHECK(std::abs(fit.coef[j] - truth[static_cast<std::size_t>(j)]) < 4 * fit.se(j));
}

TEST_CASE("null selection gives flat fitted propensities") {
  RngStream rng(64);
  const std::size_t n = 4000;
  std::vector<double> x(n), s(n);
  double n1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    s[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    n1 += s[i];
  }
  Dataset ds = build_dataset({{"X1", x}, {"S", s}}, {{"S", ColumnRole::TrialIndicator}});
  auto ps = estimate_ps(ds, {"X1"});
  double target = n1 / n;
  for (std::size_t i = 0; i < n; i += 97) CHECK(std::abs(ps[i] - target) < 0.05);
}

TEST_CASE("single-class trial indicator is an error") {
  Dataset ds = build_dataset({{"X1", {1, 2, 3}}, {"S", {1, 1, 1}}},
                             {{"S", ColumnRole::TrialIndicator}});
  CHECK_THROWS_AS(estimate_ps(ds, {"X1"}), NumericError);
}

TEST_CASE("Horvitz-Thompson identity: generalize weight sums reconstruct N_T") {
  // Per-arm sums are heavy-tailed (observed mean |deviation| ~ 14% per
  // replicate), so the per-replicate check uses the combined trial sum
  // (arms anti-correlate) and the per-arm check averages over replicates.
  const int reps = 12;
  double mean1 = 0, mean0 = 0;
  for (int r = 0; r < reps; ++r) {
    Superpopulation pop = main_scenario(650 + static_cast<std::uint64_t>(r));
    auto ps = estimate_ps(pop.data, {"X1", "X2", "X3"});
    auto e_a = treatment_prob(pop.data, TreatProbMode::marginal);
    auto w = compute_weights(pop.data, ps, e_a, WeightScheme::Generalize);
    const auto& s = pop.data.column("S").values;
    const auto& a = pop.data.column("A").values;
    double sum1 = 0, sum0 = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (s[i] != 1.0) continue;
      (a[i] == 1.0 ? sum1 : sum0) += w[i];
    }
    double n = static_cast<double>(pop.data.n_rows());
    CHECK(std::abs(sum1 + sum0 - 2 * n) / (2 * n) < 0.25);
    mean1 += sum1 / n;
    mean0 += sum0 / n;
  }
  CHECK(std::abs(mean1 / reps - 1.0) < 0.15);
  CHECK(std::abs(mean0 / reps - 1.0) < 0.15);
}

TEST_CASE("rubin pooling formula arithmetic") {
  PooledEstimate pooled = pool_estimates({1.0, 2.0}, {0.25, 0.25});
  CHECK(pooled.estimate == doctest::Approx(1.5));
  CHECK(pooled.within_var == doctest::Approx(0.25));
  CHECK(pooled.between_var == doctest::Approx(0.5));
  CHECK(pooled.total_var == doctest::Approx(0.25 + 1.5 * 0.5));  // = 1.0
  CHECK(pooled.total_var >= pooled.within_var);
}

TEST_CASE("psi_within over identical datasets has zero between-variance") {
  Superpopulation pop = main_scenario(66);
  ImputedSet fake;
  fake.datasets = {pop.data, pop.data, pop.data};
  PipelineParams params;
  params.covariates = {"X1", "X2", "X3"};
  PooledEstimate pooled = psi_within(fake, params);
  CHECK(pooled.between_var == doctest::Approx(0.0).epsilon(1e-14));
  EstimateResult single = ipsw_pipeline(pop.data, params);
  CHECK(pooled.estimate == doctest::Approx(single.estimate).epsilon(1e-12));
  CHECK(pooled.total_var == doctest::Approx(single.robust_se * single.robust_se).epsilon(1e-10));
}

TEST_CASE("complete_case equals the full pipeline when nothing is missing") {
  Superpopulation pop = main_scenario(67);
  PipelineParams params;
  params.covariates = {"X1", "X2", "X3"};
  EstimateResult full = ipsw_pipeline(pop.data, params);
  EstimateResult cc = complete_case(pop.data, params);
  CHECK(cc.estimate == doctest::Approx(full.estimate).epsilon(1e-12));
  CHECK(cc.n_used == full.n_used);
}

TEST_CASE("complete_case drops rows with missing analysis values") {
  Superpopulation pop = main_scenario(68);
  MarSpec mar;
  mar.frac_trial = 0.10;
  Dataset masked = induce_mar(pop.data, mar);
  PipelineParams params;
  params.covariates = {"X1", "X2", "X3"};
  EstimateResult cc = complete_case(masked, params);
  // trial rows with masked X1 are excluded from the weighted fit
  std::size_t n_trial_complete = 0;
  const auto& s = masked.column("S").values;
  const auto& x1 = masked.column("X1");
  for (std::size_t i = 0; i < masked.n_rows(); ++i)
    if (s[i] == 1.0 && x1.observed[i]) ++n_trial_complete;
  CHECK(cc.n_used == n_trial_complete);
}

TEST_CASE("complete_case with an emptied stratum is an error") {
  Dataset ds = build_dataset({{"X1", {std::nan(""), std::nan(""), 0.3, 0.4}},
                              {"S", {1, 1, 0, 0}},
                              {"A", {1, 0, 0, 0}},
                              {"Y", {1, 2, 0, 0}}},
                             {{"S", ColumnRole::TrialIndicator},
                              {"A", ColumnRole::Treatment},
                              {"Y", ColumnRole::Outcome}});
  PipelineParams params;
  params.covariates = {"X1"};
  CHECK_THROWS_AS(complete_case(ds, params), PipelineError);
}

TEST_CASE("bootstrap of a constant pipeline is exactly zero") {
  Dataset ds = four_row_trial();
  RngStream rng(7);
  double se = bootstrap_se(ds, [](const Dataset&, RngStream&) { return 3.14; }, 50, rng);
  CHECK(se == 0.0);
}

TEST_CASE("bootstrap SE of a mean matches s/sqrt(n)") {
  RngStream gen(71);
  const std::size_t n = 400;
  std::vector<double> y = gen.normals(n, 0.0, 2.0);
  std::vector<double> s(n, 1.0);
  Dataset ds = build_dataset({{"V", y}, {"S", s}}, {{"S", ColumnRole::TrialIndicator}});

  auto mean_stat = [](const Dataset& d, RngStream&) {
    const auto& v = d.column("V").values;
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  RngStream rng(72);
  double se = bootstrap_se(ds, mean_stat, 2000, rng);

  double m = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss = 0;
  for (double v : y) ss += (v - m) * (v - m);
  double classical = std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(se - classical) / classical < 0.10);
}

TEST_CASE("bootstrap is stable across master seeds") {
  RngStream gen(73);
  const std::size_t n = 300;
  std::vector<double> y = gen.normals(n);
  std::vector<double> s(n, 1.0);
  Dataset ds = build_dataset({{"V", y}, {"S", s}}, {{"S", ColumnRole::TrialIndicator}});
  auto mean_stat = [](const Dataset& d, RngStream&) {
    const auto& v = d.column("V").values;
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  RngStream r1(1), r2(2);
  double a = bootstrap_se(ds, mean_stat, 2000, r1);
  double b = bootstrap_se(ds, mean_stat, 2000, r2);
  CHECK(std::abs(a - b) / a < 0.05);
}

TEST_CASE("bootstrap resamples within strata and is worker invariant") {
  Superpopulation pop = main_scenario(74);
  PipelineParams params;
  params.covariates = {"X1", "X2", "X3"};
  auto pipeline = [&](const Dataset& d, RngStream&) {
    // stratified resampling preserves the trial size exactly
    const auto& s = d.column("S").values;
    double n1 = 0;
    for (double v : s) n1 += v;
    CHECK(n1 == static_cast<double>(pop.n_trial));
    return ipsw_pipeline(d, params).estimate;
  };
  RngStream r1(5), r2(5);
  double a = bootstrap_se(pop.data, pipeline, 20, r1, 1);
  double b = bootstrap_se(pop.data, pipeline, 20, r2, 2);
  CHECK(a == b);
}

TEST_CASE("transport null case: matched populations leave the estimate unchanged") {
  // trial and target drawn from one covariate distribution
  RngStream gen(75);
  const std::size_t n1 = 400, n0 = 1600;
  std::vector<double> x(n1 + n0), s(n1 + n0, 0.0), a(n1 + n0, 0.0), y(n1 + n0, 0.0);
  std::vector<double> weights_unit(n1 + n0, 0.0);
  for (std::size_t i = 0; i < n1 + n0; ++i) {
    x[i] = gen.normal();
    if (i < n1) {
      s[i] = 1.0;
      a[i] = gen.bernoulli(0.5) ? 1.0 : 0.0;
      y[i] = 1.5 * a[i] + x[i] + gen.normal();
      weights_unit[i] = 1.0;
    }
  }
  Dataset ds = build_dataset({{"X1", x}, {"S", s}, {"A", a}, {"Y", y}},
                             {{"S", ColumnRole::TrialIndicator},
                              {"A", ColumnRole::Treatment},
                              {"Y", ColumnRole::Outcome}});
  auto ps = estimate_ps(ds, {"X1"});
  auto w = compute_weights(ds, ps, {}, WeightScheme::Transport);
  EstimateResult weighted = estimate_pate(ds, w);
  EstimateResult unweighted = estimate_pate(ds, weights_unit);
  CHECK(std::abs(weighted.estimate - unweighted.estimate) <
        3 * std::hypot(weighted.robust_se, unweighted.robust_se));
}
