#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ipswlab/glm.hpp"
#include "ipswlab/rng.hpp"
#include "ipswlab/tabular.hpp"

namespace ipswlab {

enum class ImputeMethod { pmm, logistic };

struct ColumnModel {
  std::string target;
  std::vector<std::string> predictors;
  ImputeMethod method = ImputeMethod::pmm;
  int donor_k = 5;  // pmm only
};

enum class RowScope { nontrial_only, superpopulation };
enum class DerivedMode { active, passive };

struct DerivedColumnSpec {
  std::string source_a;
  std::string source_b;
  std::string out;
  DerivedMode mode = DerivedMode::passive;
};

enum class ModelKind { M1A, M1B, M2, M3A, M3B };
std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// m-selection: the paper-style percentage rule (m = rounded percentage of
/// incomplete rows among the analysis variables, minimum 2) or an explicit
/// count.
struct MRule {
  bool paper_percent = true;
  int explicit_m = 5;
  static MRule paper() { return MRule{true, 0}; }
  static MRule explicit_count(int k) { return MRule{false, k}; }
};

/// Declarative description of one chained-equations run. `variables`
/// names the analysis columns the imputation concerns; structurally
/// missing cells outside that set (e.g. treatment/outcome off-trial under
/// a covariates-only model) are left untouched.
struct ImputationSpec {
  RowScope row_scope = RowScope::superpopulation;
  std::vector<ColumnModel> column_models;  // in visit order
  std::vector<DerivedColumnSpec> derived;
  std::vector<std::string> variables;
  int m = 5;
  int maxit = 5;
  std::uint64_t seed = 0;
};

struct ChainLogEntry {
  int chain = 0;
  int iteration = 0;
  std::string column;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n_imputed = 0;
};

struct ImputedSet {
  std::vector<Dataset> datasets;
  ImputationSpec spec;
  std::vector<ChainLogEntry> chain_log;

  std::string chain_log_csv() const;
};

/// Builds the paper's five imputation models against a role-annotated
/// dataset. `interactions` names the covariates whose treatment
/// interactions M3A/M3B carry (the scenario's effect modifiers); empty
/// means every covariate.
ImputationSpec build_spec(ModelKind kind, const Dataset& ds, MRule m_rule,
                          const std::vector<std::string>& interactions = {});

/// Chained-equations multiple imputation. Masked entries start as random
/// draws from the observed marginal; each sweep refits every column model
/// on rows with the target observed (predictors carry current
/// imputations) with a posterior coefficient draw, then re-imputes.
/// Passive derived columns are recomputed whenever a source changes.
/// Chains are mutually independent given substreams of spec.seed and may
/// run on several workers; the result is identical for any worker count.
ImputedSet impute(const Dataset& ds, const ImputationSpec& spec, int workers = 1);

struct PmmOptions {
  bool bayes_draw = true;  // false pins the coefficient draw at the MLE
};

/// Predictive mean matching for one column (type-1 matching: donors are
/// ranked on the non-drawn fit, the masked row on the drawn fit). Masked
/// entries of `target` are filled from donors; observed entries returned
/// unchanged.
std::vector<double> pmm_impute(const std::vector<double>& target,
                               const DesignMatrix& predictors,
                               const std::vector<std::uint8_t>& observed, int donor_k,
                               RngStream& rng, const PmmOptions& options = {});

/// Bayesian logistic imputation for a binary column.
std::vector<double> logistic_impute(const std::vector<double>& target,
                                    const DesignMatrix& predictors,
                                    const std::vector<std::uint8_t>& observed,
                                    RngStream& rng);

}  // namespace ipswlab
