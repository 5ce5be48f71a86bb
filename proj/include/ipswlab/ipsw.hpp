#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ipswlab/glm.hpp"
#include "ipswlab/mice.hpp"
#include "ipswlab/rng.hpp"
#include "ipswlab/tabular.hpp"

namespace ipswlab {

/// Generalize: w = 1 / (p(X) e_a(X)) on trial rows -- the trial is part of
/// the target. Transport: inverse odds of sampling times the marginal
/// sampling odds. Both schemes give non-trial rows weight zero.
enum class WeightScheme { Generalize, Transport };
std::string weight_scheme_name(WeightScheme scheme);
WeightScheme parse_weight_scheme(const std::string& name);

enum class TreatProbMode { marginal, logistic };

struct WeightsSummary {
  double min = 0.0, max = 0.0, sum = 0.0, ess = 0.0;  // over positive weights
};

struct EstimateResult {
  double estimate = 0.0;  // coefficient on the treatment column
  double robust_se = 0.0;
  double model_se = 0.0;
  std::size_t n_used = 0;
  WeightsSummary weights;
};

/// Rubin's rules pooled estimate over m imputed analyses.
struct PooledEstimate {
  double estimate = 0.0;
  double within_var = 0.0;
  double between_var = 0.0;
  double total_var = 0.0;  // within + (1 + 1/m) between
  int m = 0;

  double se() const { return std::sqrt(total_var); }
};

/// Fitted P(S=1 | X) per row, via logistic regression of the trial
/// indicator on the covariates.
std::vector<double> estimate_ps(const Dataset& ds, const std::vector<std::string>& covariates);
GlmFit estimate_ps_fit(const Dataset& ds, const std::vector<std::string>& covariates);

/// Per-row probability of the row's own treatment arm among trial rows
/// (zero elsewhere). Marginal mode uses arm fractions; logistic mode fits
/// A on the covariates within the trial.
std::vector<double> treatment_prob(const Dataset& ds, TreatProbMode mode,
                                   const std::vector<std::string>& covariates = {});

std::vector<double> compute_weights(const Dataset& ds, const std::vector<double>& ps,
                                    const std::vector<double>& e_a, WeightScheme scheme);

/// Weighted linear regression of the outcome on intercept + treatment over
/// trial rows; the treatment coefficient is the effect estimate, with HC0
/// robust and classical model SEs.
EstimateResult estimate_pate(const Dataset& ds, const std::vector<double>& w);

struct PipelineParams {
  std::vector<std::string> covariates;
  WeightScheme scheme = WeightScheme::Generalize;
  TreatProbMode treat_prob_mode = TreatProbMode::marginal;
};

/// Full IPSW pipeline on one complete dataset.
EstimateResult ipsw_pipeline(const Dataset& ds, const PipelineParams& params);

/// Rubin's rules over per-imputation estimates and their variances.
PooledEstimate pool_estimates(const std::vector<double>& estimates,
                              const std::vector<double>& variances);

/// PSI-within: the complete IPSW analysis inside each imputed dataset,
/// pooled with Rubin's rules over the robust SEs.
PooledEstimate psi_within(const ImputedSet& imputed, const PipelineParams& params);

/// Complete-case comparator: drops every row with a genuinely missing
/// analysis variable (structurally masked treatment/outcome off-trial rows
/// are kept), then runs the full pipeline.
EstimateResult complete_case(const Dataset& ds, const PipelineParams& params);

/// Stratified bootstrap SE: rows are resampled independently within the
/// S=1 and S=0 strata and the whole pipeline is re-run per resample.
/// Failed resamples are skipped and counted; more than 1% failures is an
/// error.
using BootstrapPipeline = std::function<double(const Dataset&, RngStream&)>;
double bootstrap_se(const Dataset& ds, const BootstrapPipeline& pipeline, int B,
                    RngStream& rng, int workers = 1);

}  // namespace ipswlab
