#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ipswlab/rng.hpp"
#include "ipswlab/tabular.hpp"

namespace ipswlab {

enum class GlmFamily { logistic, linear };

/// Design matrix with an implicit leading intercept column.
struct DesignMatrix {
  std::vector<std::string> names;  // predictor names, excluding the intercept
  Eigen::MatrixXd X;               // n x (p+1); column 0 is all ones
};

/// Builds a design from dataset columns over the given rows. Masked
/// entries are an error: callers subset to complete rows (or impute)
/// first.
DesignMatrix make_design(const Dataset& ds, const std::vector<std::string>& predictors,
                         const std::vector<std::size_t>& rows);

struct GlmFit {
  GlmFamily family = GlmFamily::linear;
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov_model;   // model-based covariance of coef
  Eigen::MatrixXd cov_robust;  // HC0 sandwich, weights treated as fixed
  int iterations = 0;
  bool converged = false;
  bool ridged = false;  // singular information matrix patched with 1e-8 ridge

  // Pieces kept for sandwich_cov / draw_coef.
  Eigen::MatrixXd xtwx_inv;  // (X'WX)^-1, unscaled
  Eigen::VectorXd residuals;  // y - mu
  Eigen::VectorXd weights_used;
  Eigen::MatrixXd design;
  double dispersion = 1.0;  // linear: weighted RSS / df
  double rss = 0.0;         // linear: weighted RSS
  long df_resid = 0;

  double se(std::size_t j) const { return std::sqrt(cov_model(j, j)); }
  double robust_se(std::size_t j) const { return std::sqrt(cov_robust(j, j)); }
};

/// Logistic MLE by iteratively reweighted least squares. Converged when
/// max |score| < 1e-8 or the relative deviance change < 1e-10, within 50
/// iterations. Complete separation (|coef| > 30 with a non-converged
/// score) raises SeparationError.
GlmFit fit_logistic(const DesignMatrix& X, const Eigen::VectorXd& y,
                    const std::optional<Eigen::VectorXd>& w = std::nullopt);

/// Weighted least squares; cov_model is the classical WLS covariance and
/// cov_robust the HC0 sandwich.
GlmFit fit_wls(const DesignMatrix& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w);

/// expit(X coef) for a logistic fit; checks predictor names.
std::vector<double> predict_proba(const GlmFit& fit, const DesignMatrix& X);

Eigen::VectorXd linear_predictor(const DesignMatrix& X, const Eigen::VectorXd& coef);

/// HC0 sandwich bread^-1 * meat * bread^-1 with meat = sum_i x_i x_i'
/// (w_i e_i)^2, recomputed from the stored fit.
Eigen::MatrixXd sandwich_cov(const GlmFit& fit);

struct CoefDraw {
  Eigen::VectorXd coef;
  bool clipped = false;   // non-PSD covariance clipped at 0
  double sigma2 = 0.0;    // linear family: drawn residual variance
};

/// Approximate-posterior coefficient draw for proper imputation: logistic
/// draws from N(coef, cov_model); linear first draws the residual variance
/// from its scaled inverse-chi-square posterior and rescales the
/// covariance accordingly.
CoefDraw draw_coef(const GlmFit& fit, RngStream& rng);

inline double expit(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace ipswlab
