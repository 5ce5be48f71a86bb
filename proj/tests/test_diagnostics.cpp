#include <cmath>

#include "doctest.h"

#include "ipswlab/datagen.hpp"
#include "ipswlab/diagnostics.hpp"
#include "ipswlab/error.hpp"
#include "ipswlab/ipsw.hpp"

using namespace ipswlab;

TEST_CASE("asd is near zero for identical distributions") {
  RngStream gen(81);
  const std::size_t n = 10000;
  std::vector<double> x(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = gen.normal();
    s[i] = i < n / 4 ? 1.0 : 0.0;
  }
  Dataset ds = build_dataset({{"X", x}, {"S", s}}, {{"S", ColumnRole::TrialIndicator}});
  CHECK(asd(ds, "X") < 0.05);
}

TEST_CASE("asd of unit-separated unit-variance groups is one") {
  // population SD 1 on both sides: {-1, 1} and {0, 2}
  Dataset ds = build_dataset({{"X", {-1, 1, 0, 2}}, {"S", {1, 1, 0, 0}}},
                             {{"S", ColumnRole::TrialIndicator}});
  CHECK(asd(ds, "X") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("weighted asd matches a hand computation on six rows") {
  Dataset ds = build_dataset({{"X", {1.0, 2.0, 3.0, 1.5, 2.5, 3.5}},
                              {"S", {1, 1, 1, 0, 0, 0}}},
                             {{"S", ColumnRole::TrialIndicator}});
  std::vector<double> w = {1.0, 2.0, 1.0, 0, 0, 0};

  // trial: weighted mean and population-form weighted variance
  double m1 = (1.0 * 1.0 + 2.0 * 2.0 + 1.0 * 3.0) / 4.0;  // = 2.0
  double v1 = (1.0 * 1.0 + 2.0 * 0.0 + 1.0 * 1.0) / 4.0;  // = 0.5
  // target: plain population moments of {1.5, 2.5, 3.5}
  double m0 = 2.5;
  double v0 = (1.0 + 0.0 + 1.0) / 3.0;
  double expected = std::abs(m1 - m0) / std::sqrt((v1 + v0) / 2.0);

  CHECK(asd(ds, "X", w) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("binary covariates use p(1-p) variances") {
  Dataset ds = build_dataset({{"B", {1, 1, 0, 0, 1, 0, 0, 0}},
                              {"S", {1, 1, 1, 1, 0, 0, 0, 0}}},
                             {{"S", ColumnRole::TrialIndicator}});
  double p1 = 0.5, p0 = 0.25;
  double expected = std::abs(p1 - p0) /
                    std::sqrt((p1 * (1 - p1) + p0 * (1 - p0)) / 2.0);
  CHECK(asd(ds, "B") == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("asd with zero pooled variance is an error") {
  Dataset ds = build_dataset({{"X", {2, 2, 2, 2}}, {"S", {1, 1, 0, 0}}},
                             {{"S", ColumnRole::TrialIndicator}});
  CHECK_THROWS_WITH_AS(asd(ds, "X"), doctest::Contains("zero pooled variance"), ConfigError);
}

TEST_CASE("tipton index endpoints are exact") {
  std::vector<double> a = {0.05, 0.22, 0.41, 0.63, 0.88, 0.88, 0.12};
  CHECK(tipton_index(a, a) == 1.0);

  std::vector<double> lo = {0.05, 0.1, 0.2, 0.3};
  std::vector<double> hi = {0.7, 0.8, 0.9, 0.95};
  CHECK(tipton_index(lo, hi) == 0.0);
}

TEST_CASE("tipton index of two known discrete histograms") {
  // 3 bins over [0,1]: f = (.5, .5, 0), g = (0, .5, .5)
  std::vector<double> f = {0.1, 0.5};
  std::vector<double> g = {0.5, 0.9};
  CHECK(tipton_index(f, g, 3) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("tipton index is symmetric") {
  RngStream gen(83);
  std::vector<double> a(200), b(300);
  for (auto& v : a) v = gen.uniform() * 0.6;
  for (auto& v : b) v = 0.2 + gen.uniform() * 0.7;
  CHECK(tipton_index(a, b) == doctest::Approx(tipton_index(b, a)).epsilon(1e-15));
}

TEST_CASE("tipton index is stable in the bin count on smooth samples") {
  RngStream gen(84);
  std::vector<double> a(20000), b(20000);
  for (auto& v : a) v = expit(gen.normal(-0.5, 0.7));
  for (auto& v : b) v = expit(gen.normal(0.0, 0.7));
  double i20 = tipton_index(a, b, 20);
  double i50 = tipton_index(a, b, 50);
  CHECK(std::abs(i20 - i50) < 0.02);
}

TEST_CASE("ess basics") {
  CHECK(ess({2, 2, 2, 2, 2}) == doctest::Approx(5.0));
  CHECK(ess({0, 0, 7.5, 0}) == doctest::Approx(1.0));
  CHECK(ess({1, 1, 2}) == doctest::Approx(16.0 / 6.0));
  CHECK_THROWS_AS(ess({0, 0, 0}), ConfigError);
}

TEST_CASE("ess is scale invariant") {
  std::vector<double> w = {0.5, 1.5, 2.5, 0.1};
  std::vector<double> cw = w;
  for (auto& v : cw) v *= 42.0;
  CHECK(ess(w) == doctest::Approx(ess(cw)).epsilon(1e-12));
}

TEST_CASE("IPSW weighting improves covariate balance on main-scenario replicates") {
  int improved = 0, total = 0;
  for (int rep = 0; rep < 20; ++rep) {
    ScenarioConfig cfg;
    cfg.seed = 900 + static_cast<std::uint64_t>(rep);
    Superpopulation pop = make_superpopulation(cfg);
    auto ps = estimate_ps(pop.data, {"X1", "X2", "X3"});
    auto e_a = treatment_prob(pop.data, TreatProbMode::marginal);
    auto w = compute_weights(pop.data, ps, e_a, WeightScheme::Generalize);
    for (const auto& name : {"X1", "X2", "X3"}) {
      ++total;
      if (asd(pop.data, name, w) < asd(pop.data, name)) ++improved;
    }
  }
  CHECK(improved * 100 >= total * 95);
}

TEST_CASE("balance_report bundles asd, overlap, and ess") {
  ScenarioConfig cfg;
  cfg.seed = 85;
  Superpopulation pop = make_superpopulation(cfg);
  auto ps = estimate_ps(pop.data, {"X1", "X2", "X3"});
  auto e_a = treatment_prob(pop.data, TreatProbMode::marginal);
  auto w = compute_weights(pop.data, ps, e_a, WeightScheme::Generalize);
  BalanceReport report = balance_report(pop.data, {"X1", "X2", "X3"}, ps, w);
  CHECK(report.covariates.size() == 3);
  CHECK(report.tipton_index >= 0.0);
  CHECK(report.tipton_index <= 1.0);
  CHECK(report.ess_trial <= static_cast<double>(pop.n_trial));
  CHECK(report.ess_trial > 0.0);
  for (const auto& cb : report.covariates) CHECK(cb.asd_unweighted > cb.asd_weighted);
}
