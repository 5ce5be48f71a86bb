#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipswlab/datagen.hpp"
#include "ipswlab/ipsw.hpp"
#include "ipswlab/mice.hpp"
#include "ipswlab/missingness.hpp"

namespace ipswlab {

enum class Method { FullData, CC, M1A, M1B, M2, M3A, M3B };
std::string method_name(Method method);
Method parse_method(const std::string& name);

enum class TruthKind { pate_s0, pate_all };

/// Replicated Monte Carlo study: per replicate, generate a
/// superpopulation, induce MAR at each trial-missing level, and produce
/// one estimate per requested method.
struct StudyConfig {
  ScenarioConfig scenario;
  MarSpec mar;  // frac_trial is taken from trial_fracs below
  std::vector<double> trial_fracs = {0.0, 0.1, 0.3};
  std::vector<Method> methods = {Method::FullData, Method::CC,     Method::M1A,
                                 Method::M1B,      Method::M2,     Method::M3A,
                                 Method::M3B};
  int n_sim = 1000;
  TruthKind truth = TruthKind::pate_s0;
  std::uint64_t master_seed = 0;
  MRule m_rule = MRule::paper();
  // Covariates whose treatment interactions M3A/M3B model; the scenario's
  // effect modifiers by default.
  std::vector<std::string> interactions = {"X1", "X2"};

  void validate() const;
};

struct MetricRecord {
  double bias = 0.0;
  double bias_mcse = 0.0;
  double emp_se = 0.0;
  double emp_se_mcse = 0.0;
  double avg_robust_se = 0.0;
  double mse = 0.0;
  double mse_mcse = 0.0;
  std::size_t n = 0;
};

/// bias = mean(est) - truth, emp_se = SD(est), mse = mean((est - truth)^2),
/// each with its Monte Carlo SE.
MetricRecord performance_metrics(const std::vector<double>& estimates, double truth,
                                 const std::vector<double>& robust_ses);

struct StudyCell {
  Method method = Method::FullData;
  std::optional<double> trial_missing;  // empty for FullData
  MetricRecord metrics;
  std::size_t n_failed = 0;
};

struct ReplicateEstimate {
  std::size_t replicate = 0;
  Method method = Method::FullData;
  std::optional<double> trial_missing;
  double estimate = 0.0;
  double se = 0.0;
};

struct ReplicateTruth {
  std::size_t replicate = 0;
  double true_pate_s0 = 0.0;
  double true_pate_all = 0.0;
  double realized_tate = 0.0;
};

struct StudyResult {
  std::vector<StudyCell> cells;
  int n_sim = 0;
  double truth_value = 0.0;  // scalar truth the metrics are measured against
  double mean_true_pate_s0 = 0.0;
  double mean_true_pate_all = 0.0;
  double mean_realized_tate = 0.0;
  double sd_realized_tate = 0.0;
  std::vector<ReplicateEstimate> estimates;  // audit trail
  std::vector<ReplicateTruth> truths;

  const StudyCell* find(Method method, std::optional<double> trial_missing) const;
  std::string results_csv() const;
  std::string estimates_csv() const;
  std::string truths_csv() const;
};

StudyResult run_study(const StudyConfig& cfg, int workers = 1);

}  // namespace ipswlab
