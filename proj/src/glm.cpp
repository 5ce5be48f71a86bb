#include "ipswlab/glm.hpp"

#include <cmath>

#include "ipswlab/error.hpp"

namespace ipswlab {

namespace {

constexpr double kScoreTol = 1e-8;
constexpr double kDevianceTol = 1e-10;
constexpr int kMaxIter = 50;
constexpr double kSeparationCoef = 30.0;
constexpr double kRidge = 1e-8;

// Rank detection on the p x p cross-product: with p <= ~10 and columns on
// data scale this is orders of magnitude cheaper than a pivoted QR of X.
void check_rank_xtx(const Eigen::MatrixXd& xtx) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xtx);
  double emax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (emax <= 0.0 || es.eigenvalues().minCoeff() < 1e-10 * emax)
    throw NumericError("rank-deficient design matrix");
}

// Solve M x = b for symmetric M; falls back to a small ridge when M is
// numerically singular and reports it through `ridged`.
Eigen::MatrixXd invert_info(Eigen::MatrixXd M, bool& ridged) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
      ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
    return ldlt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
  }
  ridged = true;
  M.diagonal().array() += kRidge;
  return M.ldlt().solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
}

Eigen::MatrixXd hc0(const Eigen::MatrixXd& X, const Eigen::VectorXd& resid,
                    const Eigen::VectorXd& w, const Eigen::MatrixXd& bread_inv) {
  const Eigen::ArrayXd u = w.array() * resid.array();  // score residual weight
  Eigen::MatrixXd meat = X.transpose() * (X.array().colwise() * (u * u)).matrix();
  return bread_inv * meat * bread_inv;
}

}  // namespace

DesignMatrix make_design(const Dataset& ds, const std::vector<std::string>& predictors,
                         const std::vector<std::size_t>& rows) {
  DesignMatrix d;
  d.names = predictors;
  d.X.resize(rows.size(), predictors.size() + 1);
  d.X.col(0).setOnes();
  for (std::size_t j = 0; j < predictors.size(); ++j) {
    const Column& col = ds.column(predictors[j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!col.observed[rows[i]])
        throw NumericError("masked entry in design column '" + predictors[j] +
                           "' at row " + std::to_string(rows[i]));
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) =
          col.values[rows[i]];
    }
  }
  return d;
}

GlmFit fit_logistic(const DesignMatrix& design, const Eigen::VectorXd& y,
                    const std::optional<Eigen::VectorXd>& w_opt) {
  const Eigen::MatrixXd& X = design.X;
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n) throw ConfigError("response length does not match design");
  bool has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] == 0.0) has0 = true;
    else if (y[i] == 1.0) has1 = true;
    else throw ConfigError("logistic response must be 0/1");
  }
  if (!has0 || !has1)
    throw NumericError("single-class response: logistic fit needs both classes");

  Eigen::VectorXd w = w_opt ? *w_opt : Eigen::VectorXd::Ones(n);
  if (w.size() != n) throw ConfigError("weight length does not match design");
  check_rank_xtx(X.transpose() * X);

  GlmFit fit;
  fit.family = GlmFamily::logistic;
  fit.names = design.names;
  fit.coef = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd mu(n), irls_w(n), score(p);
  double deviance = std::numeric_limits<double>::infinity();
  double max_score = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd info(p, p);

  for (int iter = 1; iter <= kMaxIter; ++iter) {
    Eigen::VectorXd eta = X * fit.coef;
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = expit(eta[i]);
      // log-likelihood contribution, stable at extreme eta
      double ll = y[i] * eta[i] - (eta[i] > 0 ? eta[i] + std::log1p(std::exp(-eta[i]))
                                              : std::log1p(std::exp(eta[i])));
      dev -= 2.0 * w[i] * ll;
      irls_w[i] = std::max(w[i] * mu[i] * (1.0 - mu[i]), 1e-12);
    }
    score = X.transpose() * (w.array() * (y - mu).array()).matrix();
    max_score = score.cwiseAbs().maxCoeff();
    fit.iterations = iter;

    double rel_dev = std::abs(deviance - dev) / (std::abs(dev) + 0.1);
    if (max_score < kScoreTol || (iter > 1 && rel_dev < kDevianceTol)) {
      fit.converged = true;
      deviance = dev;
      break;
    }
    deviance = dev;

    info = X.transpose() * (X.array().colwise() * irls_w.array()).matrix();
    Eigen::MatrixXd info_inv = invert_info(info, fit.ridged);
    fit.coef += info_inv * score;

    if (fit.coef.cwiseAbs().maxCoeff() > kSeparationCoef)
      throw SeparationError("complete separation detected (|coef| > 30 with "
                            "non-converged score)");
  }
  if (!fit.converged) {
    if (fit.coef.cwiseAbs().maxCoeff() > kSeparationCoef)
      throw SeparationError("complete separation detected (|coef| > 30 with "
                            "non-converged score)");
    throw NumericError("IRLS failed to converge in " + std::to_string(kMaxIter) +
                       " iterations (max |score| = " + std::to_string(max_score) + ")");
  }

  // Complete separation also shows up as a "converged" score with every
  // observation classified on the correct side at an extreme probability;
  // the minimal classification margin is then unbounded in truth.
  {
    Eigen::VectorXd eta = X * fit.coef;
    double min_margin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i)
      min_margin = std::min(min_margin, (2.0 * y[i] - 1.0) * eta[i]);
    if (min_margin > 7.0)
      throw SeparationError("complete separation detected (all fitted "
                            "probabilities are numerically 0 or 1 on the "
                            "correct side)");
  }

  // final quantities at the solution
  Eigen::VectorXd eta = X * fit.coef;
  for (Eigen::Index i = 0; i < n; ++i) {
    mu[i] = expit(eta[i]);
    irls_w[i] = std::max(w[i] * mu[i] * (1.0 - mu[i]), 1e-12);
  }
  info = X.transpose() * (X.array().colwise() * irls_w.array()).matrix();
  fit.xtwx_inv = invert_info(info, fit.ridged);
  fit.cov_model = fit.xtwx_inv;
  fit.residuals = y - mu;
  fit.weights_used = w;
  fit.design = X;
  fit.df_resid = static_cast<long>(n - p);
  fit.cov_robust = hc0(X, fit.residuals, w, fit.xtwx_inv);
  return fit;
}

GlmFit fit_wls(const DesignMatrix& design, const Eigen::VectorXd& y,
               const Eigen::VectorXd& w) {
  const Eigen::MatrixXd& X = design.X;
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n || w.size() != n)
    throw ConfigError("response/weight length does not match design");
  double wsum = 0.0;
  Eigen::Index n_support = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] < 0) throw ConfigError("negative weight at row " + std::to_string(i));
    if (w[i] > 0) ++n_support;
    wsum += w[i];
  }
  if (wsum <= 0) throw ConfigError("all weights are zero");

  GlmFit fit;
  fit.family = GlmFamily::linear;
  fit.names = design.names;

  // the weighted cross-product doubles as the rank check on supported rows
  Eigen::MatrixXd info = X.transpose() * (X.array().colwise() * w.array()).matrix();
  try {
    check_rank_xtx(info);
  } catch (const NumericError&) {
    throw NumericError("rank-deficient design on weight-supported rows");
  }
  fit.xtwx_inv = invert_info(info, fit.ridged);
  fit.coef = fit.xtwx_inv * (X.transpose() * (w.array() * y.array()).matrix());
  fit.converged = true;
  fit.iterations = 1;

  fit.residuals = y - X * fit.coef;
  fit.rss = (w.array() * fit.residuals.array().square()).sum();
  fit.df_resid = static_cast<long>(n_support - p);
  fit.dispersion = fit.rss / std::max<long>(fit.df_resid, 1);
  fit.cov_model = fit.dispersion * fit.xtwx_inv;
  fit.weights_used = w;
  fit.design = X;
  fit.cov_robust = hc0(X, fit.residuals, w, fit.xtwx_inv);
  return fit;
}

Eigen::VectorXd linear_predictor(const DesignMatrix& X, const Eigen::VectorXd& coef) {
  return X.X * coef;
}

std::vector<double> predict_proba(const GlmFit& fit, const DesignMatrix& X) {
  if (fit.family != GlmFamily::logistic)
    throw ConfigError("predict_proba requires a logistic fit");
  if (X.names != fit.names)
    throw ConfigError("predictor names do not match the fitted model");
  Eigen::VectorXd eta = X.X * fit.coef;
  std::vector<double> out(static_cast<std::size_t>(eta.size()));
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = expit(eta[i]);
  return out;
}

Eigen::MatrixXd sandwich_cov(const GlmFit& fit) {
  if (fit.design.rows() == 0)
    throw ConfigError("fit does not carry stored design/residuals");
  Eigen::VectorXd bread_w = fit.weights_used;
  if (fit.family == GlmFamily::logistic) {
    // bread uses the information weights w * mu * (1 - mu)
    Eigen::VectorXd eta = fit.design * fit.coef;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      double mu = expit(eta[i]);
      bread_w[i] = fit.weights_used[i] * mu * (1.0 - mu);
    }
  }
  Eigen::MatrixXd info =
      fit.design.transpose() * (fit.design.array().colwise() * bread_w.array()).matrix();
  bool ridged = false;
  Eigen::MatrixXd bread_inv = invert_info(info, ridged);
  return hc0(fit.design, fit.residuals, fit.weights_used, bread_inv);
}

CoefDraw draw_coef(const GlmFit& fit, RngStream& rng) {
  if (!fit.converged) throw NumericError("draw_coef requires a converged fit");
  CoefDraw draw;

  Eigen::MatrixXd cov = fit.xtwx_inv;
  double scale;
  if (fit.family == GlmFamily::linear) {
    long df = std::max<long>(fit.df_resid, 1);
    double chi2 = rng.chi_squared(static_cast<double>(df));
    if (chi2 <= 0) chi2 = 1e-12;
    draw.sigma2 = fit.rss / chi2;  // scaled inverse-chi-square posterior
    scale = draw.sigma2;
  } else {
    cov = fit.cov_model;
    scale = 1.0;
  }

  // PSD square root with eigenvalue clipping at 0
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd evals = es.eigenvalues();
  double emax = std::max(evals.maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    if (evals[i] < 0) {
      if (evals[i] < -1e-10 * std::max(emax, 1.0)) draw.clipped = true;
      evals[i] = 0.0;
    }
  }
  Eigen::MatrixXd root =
      es.eigenvectors() * evals.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();

  Eigen::VectorXd z(fit.coef.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  draw.coef = fit.coef + std::sqrt(scale) * (root * z);
  return draw;
}

}  // namespace ipswlab
