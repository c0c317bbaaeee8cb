#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "iatc/core.hpp"
#include "iatc/numeric.hpp"

namespace iatc::glm {

inline constexpr double kMeanFloor = 1e-10;
inline constexpr double kMinRidge = 1e-8;

/// Inverse link mu(eta) for a Poisson GLM. Both kinds are strictly positive
/// and strictly increasing.
struct InverseLink {
  enum class Kind { scaled_softplus, exponential };
  Kind kind = Kind::exponential;
  double scale = 1.0;  // c in mu = c * softplus(eta); unused for exponential

  static InverseLink softplus(double c) {
    if (!(c > 0.0)) throw DomainError("softplus link scale must be positive");
    return {Kind::scaled_softplus, c};
  }
  static InverseLink exponential() { return {Kind::exponential, 1.0}; }

  double mu(double eta) const {
    if (kind == Kind::exponential) return std::exp(std::min(eta, 700.0));
    return scale * iatc::softplus(eta);
  }
  double dmu(double eta) const {
    if (kind == Kind::exponential) return std::exp(std::min(eta, 700.0));
    return scale * sigmoid(eta);
  }
  /// eta with mu(eta) = m.
  double inverse(double m) const {
    if (kind == Kind::exponential) return std::log(m);
    return stable_softplus_inverse(m / scale);
  }
  std::string name() const { return kind == Kind::exponential ? "exponential" : "scaled_softplus"; }
};

struct GlmOptions {
  double ridge_penalty = kMinRidge;
  int max_iter = 100;
  double tol = 1e-8;
};

struct GlmFit {
  double intercept = 0.0;
  Vector weights;
  double ridge_penalty = kMinRidge;  // effective penalty used in the solve
  std::vector<double> deviance_trace;  // penalized deviance, one entry per accepted iterate
  int iterations = 0;
  bool converged = false;
};

/// Poisson deviance 2 * sum[y log(y/mu) - (y - mu)], with 0 log 0 = 0.
inline double poisson_deviance(const Vector& y, const Vector& mu) {
  double d = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double m = std::max(mu(i), 1e-300);
    d += (y(i) > 0.0 ? y(i) * std::log(y(i) / m) : 0.0) - (y(i) - m);
  }
  return 2.0 * d;
}

namespace detail {

inline Vector linear_predictor(const Matrix& X, const Vector& w, double b) {
  Vector eta = X * w;
  eta.array() += b;
  return eta;
}

inline Vector means(const InverseLink& link, const Vector& eta) {
  Vector mu(eta.size());
  for (Index i = 0; i < eta.size(); ++i) mu(i) = link.mu(eta(i));
  return mu;
}

inline double objective(const Vector& y, const Vector& mu, const Vector& w, double ridge) {
  return poisson_deviance(y, mu) + 2.0 * ridge * w.squaredNorm();
}

}  // namespace detail

/// Fisher-scoring IRLS for a Poisson GLM with an unpenalized intercept.
///
/// Each iteration solves the weighted ridge system
///   (X1' W X1 + 2 * ridge * I') theta = X1' W z
/// with w = (dmu/deta)^2 / mu and z = eta + (y - mu) / (dmu/deta), where X1 is
/// X with a leading column of ones and I' leaves the intercept unpenalized.
/// A step that increases the penalized deviance is halved up to 10 times.
/// Convergence: |dev_k - dev_{k-1}| / (|dev_k| + 0.1) < tol. Once that holds,
/// iteration continues while the parameter step is still non-negligible, so
/// the score equations are met to near working precision.
inline GlmFit irls_fit(const Matrix& X, const Vector& y, const InverseLink& link,
                       const GlmOptions& opt = {}) {
  const Index n = X.rows();
  const Index p = X.cols();
  if (y.size() != n) throw DataError("irls_fit: response length does not match design rows");
  for (Index i = 0; i < n; ++i)
    if (!(y(i) >= 0.0)) throw DomainError("irls_fit: responses must be nonnegative (row " + std::to_string(i) + ")");
  const double ridge = std::max(opt.ridge_penalty, kMinRidge);

  GlmFit fit;
  fit.ridge_penalty = ridge;
  fit.weights = Vector::Zero(p);
  fit.intercept = link.inverse(std::max(y.mean(), 1e-6));

  Vector eta = detail::linear_predictor(X, fit.weights, fit.intercept);
  Vector mu = detail::means(link, eta);
  double obj = detail::objective(y, mu, fit.weights, ridge);
  fit.deviance_trace.push_back(obj);

  Matrix Xw(n, p + 1);
  Matrix H(p + 1, p + 1);
  Vector rhs(p + 1);
  Vector sw(n), z(n);
  bool deviance_met = false;

  for (int it = 1; it <= opt.max_iter; ++it) {
    for (Index i = 0; i < n; ++i) {
      const double d = link.dmu(eta(i));
      const double wi = d * d / std::max(mu(i), kMeanFloor);
      sw(i) = std::sqrt(wi);
      z(i) = eta(i) + (y(i) - mu(i)) / std::max(d, 1e-300);
    }
    Xw.col(0) = sw;
    Xw.rightCols(p) = X.array().colwise() * sw.array();
    H.setZero();
    H.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
    H.diagonal().tail(p).array() += 2.0 * ridge;
    rhs = Xw.transpose() * (sw.array() * z.array()).matrix();
    Eigen::LDLT<Matrix> solver(H.selfadjointView<Eigen::Lower>());
    Vector theta = solver.solve(rhs);
    if (!theta.allFinite()) throw ConvergenceError("irls_fit: singular weighted system", fit.deviance_trace);

    double new_b = theta(0);
    Vector new_w = theta.tail(p);
    Vector new_eta = detail::linear_predictor(X, new_w, new_b);
    Vector new_mu = detail::means(link, new_eta);
    double new_obj = detail::objective(y, new_mu, new_w, ridge);
    // Increases at the level of rounding in the objective still count as descent.
    const double slack = 1e-13 * (std::abs(obj) + 1.0);
    int halvings = 0;
    while (!(new_obj <= obj + slack) && halvings < 10) {
      new_b = 0.5 * (new_b + fit.intercept);
      new_w = 0.5 * (new_w + fit.weights);
      new_eta = detail::linear_predictor(X, new_w, new_b);
      new_mu = detail::means(link, new_eta);
      new_obj = detail::objective(y, new_mu, new_w, ridge);
      ++halvings;
    }
    fit.iterations = it;
    if (!(new_obj <= obj + slack)) {
      // No descent direction left at working precision: the previous iterate
      // is the optimum unless the objective was still moving.
      const double rel = std::abs(new_obj - obj) / (std::abs(obj) + 0.1);
      if (std::isfinite(new_obj) && rel < std::sqrt(opt.tol)) {
        fit.converged = true;
        return fit;
      }
      throw ConvergenceError("irls_fit: step-halving failed to reduce the deviance", fit.deviance_trace);
    }
    const double change = std::abs(new_obj - obj) / (std::abs(new_obj) + 0.1);
    const double step = std::max(std::abs(new_b - fit.intercept), p ? (new_w - fit.weights).cwiseAbs().maxCoeff() : 0.0);
    const double size = 1.0 + std::max(std::abs(new_b), p ? new_w.cwiseAbs().maxCoeff() : 0.0);
    fit.intercept = new_b;
    fit.weights = std::move(new_w);
    eta = std::move(new_eta);
    mu = std::move(new_mu);
    obj = new_obj;
    fit.deviance_trace.push_back(obj);
    deviance_met = deviance_met || change < opt.tol;
    if (deviance_met && step <= 1e-10 * size) {
      fit.converged = true;
      return fit;
    }
  }
  if (deviance_met) {
    fit.converged = true;
    return fit;
  }
  throw ConvergenceError("irls_fit: no convergence after " + std::to_string(opt.max_iter) +
                             " iterations",
                         fit.deviance_trace);
}

inline Vector glm_predict(const GlmFit& fit, const Matrix& X, const InverseLink& link) {
  if (X.cols() != fit.weights.size())
    throw DataError("glm_predict: design has " + std::to_string(X.cols()) + " columns, fit expects " +
                    std::to_string(fit.weights.size()));
  return detail::means(link, detail::linear_predictor(X, fit.weights, fit.intercept));
}

/// Penalized score X1'((y - mu) mu' / mu) - 2 * ridge * theta' (intercept
/// unpenalized), as a vector with the intercept first. Zero at the optimum.
inline Vector score_residual(const GlmFit& fit, const Matrix& X, const Vector& y,
                             const InverseLink& link) {
  const Vector eta = detail::linear_predictor(X, fit.weights, fit.intercept);
  Vector r(eta.size());
  for (Index i = 0; i < eta.size(); ++i) {
    const double m = link.mu(eta(i));
    r(i) = (y(i) - m) * link.dmu(eta(i)) / m;
  }
  Vector g(X.cols() + 1);
  g(0) = r.sum();
  g.tail(X.cols()) = X.transpose() * r - 2.0 * fit.ridge_penalty * fit.weights;
  return g;
}

/// Standard errors from the inverse expected information at the fit,
/// intercept first.
inline Vector standard_errors(const GlmFit& fit, const Matrix& X, const InverseLink& link) {
  const Index p = X.cols();
  const Vector eta = detail::linear_predictor(X, fit.weights, fit.intercept);
  Matrix X1(X.rows(), p + 1);
  X1.col(0).setOnes();
  X1.rightCols(p) = X;
  Vector w(eta.size());
  for (Index i = 0; i < eta.size(); ++i) {
    const double d = link.dmu(eta(i));
    w(i) = d * d / std::max(link.mu(eta(i)), kMeanFloor);
  }
  Matrix info = X1.transpose() * w.asDiagonal() * X1;
  info.diagonal().tail(p).array() += 2.0 * fit.ridge_penalty;
  return info.inverse().diagonal().cwiseSqrt();
}

}  // namespace iatc::glm
