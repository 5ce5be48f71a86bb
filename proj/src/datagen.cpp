#include "ipswlab/datagen.hpp"

#include <cmath>

#include "ipswlab/error.hpp"
#include "ipswlab/glm.hpp"

namespace ipswlab {

namespace {
constexpr int kMaxRetries = 100;
}

void ScenarioConfig::validate() const {
  if (n_target < 2) throw ConfigError("n_target must be at least 2");
  if (noise_sd < 0) throw ConfigError("noise_sd must be non-negative");
  if (!(treat_prob > 0.0 && treat_prob < 1.0))
    throw ConfigError("treat_prob must lie in (0, 1)");
}

std::vector<std::vector<double>> gen_covariates(std::size_t n, RngStream& rng) {
  if (n < 1) throw ConfigError("need at least one row");
  std::vector<std::vector<double>> X(3);
  for (auto& col : X) col = rng.normals(n);
  return X;
}

std::vector<double> gen_trial_indicator(const std::vector<std::vector<double>>& X,
                                        const std::array<double, 4>& alpha,
                                        RngStream& rng) {
  const std::size_t n = X.at(0).size();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = alpha[0] + alpha[1] * X[0][i] + alpha[2] * X[1][i] + alpha[3] * X[2][i];
    s[i] = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
  }
  return s;
}

std::pair<std::vector<double>, std::vector<std::uint8_t>> gen_treatment(
    const std::vector<double>& s, double treat_prob, RngStream& rng) {
  if (!(treat_prob > 0.0 && treat_prob <= 1.0))
    throw ConfigError("treat_prob must lie in (0, 1]");
  std::vector<double> a(s.size(), 0.0);
  std::vector<std::uint8_t> observed(s.size(), 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == 1.0) {
      a[i] = rng.bernoulli(treat_prob) ? 1.0 : 0.0;
      observed[i] = 1;
    }
  }
  return {std::move(a), std::move(observed)};
}

std::pair<std::vector<double>, std::vector<double>> gen_potential_outcomes(
    const std::vector<std::vector<double>>& X, const std::array<double, 4>& beta1,
    const std::array<double, 4>& beta0, double noise_sd, RngStream& rng) {
  const std::size_t n = X.at(0).size();
  std::vector<double> y1(n), y0(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m1 = beta1[0] + beta1[1] * X[0][i] + beta1[2] * X[1][i] + beta1[3] * X[2][i];
    double m0 = beta0[0] + beta0[1] * X[0][i] + beta0[2] * X[1][i] + beta0[3] * X[2][i];
    y1[i] = m1 + (noise_sd > 0 ? rng.normal(0.0, noise_sd) : 0.0);
    y0[i] = m0 + (noise_sd > 0 ? rng.normal(0.0, noise_sd) : 0.0);
  }
  return {std::move(y1), std::move(y0)};
}

Superpopulation make_superpopulation(const ScenarioConfig& cfg) {
  return make_superpopulation(cfg, RngStream(cfg.seed));
}

Superpopulation make_superpopulation(const ScenarioConfig& cfg, RngStream rng) {
  cfg.validate();
  const std::size_t n = cfg.n_target;

  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    RngStream attempt_rng = rng.substream(static_cast<std::uint64_t>(attempt));
    RngStream rng_x = attempt_rng.substream(0);
    RngStream rng_s = attempt_rng.substream(1);
    RngStream rng_a = attempt_rng.substream(2);
    RngStream rng_y = attempt_rng.substream(3);

    auto X = gen_covariates(n, rng_x);
    auto s = gen_trial_indicator(X, cfg.alpha, rng_s);
    auto [a, a_obs] = gen_treatment(s, cfg.treat_prob, rng_a);
    auto [y1, y0] = gen_potential_outcomes(X, cfg.beta1, cfg.beta0, cfg.noise_sd, rng_y);

    std::size_t n_trial = 0, n_arm1 = 0, n_s0 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (s[i] == 1.0) {
        ++n_trial;
        if (a[i] == 1.0) ++n_arm1;
      } else {
        ++n_s0;
      }
    }
    if (n_s0 == 0)
      throw GenerationError("empty S=0 stratum: every row selected into the trial");
    if (n_trial < 2 || n_arm1 == 0 || n_arm1 == n_trial)
      continue;  // degenerate trial, retry with the next substream

    std::vector<double> y(n, 0.0);
    std::vector<std::uint8_t> y_obs(n, 0);
    double sum1 = 0.0, sum0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (s[i] != 1.0) continue;
      y[i] = a[i] == 1.0 ? y1[i] : y0[i];
      y_obs[i] = 1;
      (a[i] == 1.0 ? sum1 : sum0) += y[i];
    }

    Superpopulation pop;
    {
      Dataset ds;
      auto add = [&ds, n](const std::string& name, ColumnRole role,
                          std::vector<double> values, std::vector<std::uint8_t> observed) {
        Column col;
        col.name = name;
        col.role = role;
        col.values = std::move(values);
        col.observed = std::move(observed);
        if (col.observed.empty()) col.observed.assign(n, 1);
        ds.add_column(std::move(col));
      };
      add("X1", ColumnRole::Covariate, std::move(X[0]), {});
      add("X2", ColumnRole::Covariate, std::move(X[1]), {});
      add("X3", ColumnRole::Covariate, std::move(X[2]), {});
      add("S", ColumnRole::TrialIndicator, std::move(s), {});
      add("A", ColumnRole::Treatment, std::move(a), std::move(a_obs));
      add("Y", ColumnRole::Outcome, std::move(y), std::move(y_obs));
      pop.data = std::move(ds);
    }
    pop.y1 = std::move(y1);
    pop.y0 = std::move(y0);
    pop.n_trial = n_trial;

    const auto& s_col = pop.data.column("S").values;
    double diff_s0 = 0.0, diff_all = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = pop.y1[i] - pop.y0[i];
      diff_all += d;
      if (s_col[i] == 0.0) diff_s0 += d;
    }
    pop.true_pate_s0 = diff_s0 / static_cast<double>(n_s0);
    pop.true_pate_all = diff_all / static_cast<double>(n);
    pop.realized_tate = sum1 / static_cast<double>(n_arm1) -
                        sum0 / static_cast<double>(n_trial - n_arm1);
    return pop;
  }
  throw GenerationError("degenerate trial after " + std::to_string(kMaxRetries) +
                        " regeneration attempts");
}

}  // namespace ipswlab
