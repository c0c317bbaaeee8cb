#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "iatc/core.hpp"
#include "iatc/numeric.hpp"

namespace iatc::transforms {

struct SoftMatchingOptions {
  double epsilon = 0.01;  // entropic regularization, relative to max(C) - min(C)
  int max_iter = 20000;
  double tol = 1e-9;      // L1 marginal violation, rows plus columns
};

struct TransportPlan {
  Matrix plan;         // source x target, rows sum to 1/N_X, columns to 1/N_Y
  Matrix correlation;  // train-set Pearson correlations
  Vector source_mean, source_std, target_mean, target_std;
};

struct SoftMatchingFit {
  TransportPlan transport;
  double score = 0.0;  // sum_ij T_ij C_ij
  int iterations = 0;
};

namespace detail {

inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline void column_stats(const Matrix& x, Vector& mu, Vector& sd) {
  mu = x.colwise().mean();
  sd.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) sd(j) = std::sqrt((x.col(j).array() - mu(j)).square().mean());
}

}  // namespace detail

namespace detail {

struct DualState {
  Vector f, g;  // log-domain potentials
};

inline double marginal_violation(const Matrix& k, const DualState& d, double a, double b, Vector* rows = nullptr,
                                 Vector* cols = nullptr) {
  const Matrix p = ((k.colwise() + d.f).rowwise() + d.g.transpose()).array().exp().matrix();
  const Vector r = p.rowwise().sum().array() - a;
  const Vector c = p.colwise().sum().transpose().array() - b;
  if (rows) *rows = r;
  if (cols) *cols = c;
  const double v = r.cwiseAbs().sum() + c.cwiseAbs().sum();
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

// One Newton step on the marginal equations in (f, g), with the last entry of
// g held fixed to remove the gauge freedom, followed by backtracking on the
// violation. Returns false when no step improves it.
inline bool newton_step(const Matrix& k, DualState& d, double a, double b, double& violation) {
  const Index nx = k.rows(), ny = k.cols();
  const Matrix p = ((k.colwise() + d.f).rowwise() + d.g.transpose()).array().exp().matrix();
  Vector residual(nx + ny - 1);
  residual.head(nx) = p.rowwise().sum().array() - a;
  residual.tail(ny - 1) = (p.colwise().sum().transpose().array() - b).head(ny - 1);
  Matrix jac = Matrix::Zero(nx + ny - 1, nx + ny - 1);
  jac.topLeftCorner(nx, nx).diagonal() = p.rowwise().sum();
  jac.bottomRightCorner(ny - 1, ny - 1).diagonal() = p.colwise().sum().transpose().head(ny - 1);
  jac.topRightCorner(nx, ny - 1) = p.leftCols(ny - 1);
  jac.bottomLeftCorner(ny - 1, nx) = p.leftCols(ny - 1).transpose();
  const Eigen::LDLT<Matrix> ldlt(jac);
  if (ldlt.info() != Eigen::Success) return false;
  const Vector step = ldlt.solve(residual);
  if (!step.allFinite()) return false;
  for (double t = 1.0; t > 1e-4; t *= 0.5) {
    DualState trial = d;
    trial.f -= t * step.head(nx);
    trial.g.head(ny - 1) -= t * step.tail(ny - 1);
    const double v = marginal_violation(k, trial, a, b);
    if (v < violation) {
      d = std::move(trial);
      violation = v;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Entropic transport maximizing sum T_ij C_ij with uniform marginals.
/// Log-domain scaling iterations bring the plan near feasibility; Newton steps
/// on the marginal equations then finish the solve, falling back to scaling
/// iterations whenever a Newton step fails to reduce the violation. Returns
/// the (not yet rounded) plan; `iterations` receives the count used.
inline Matrix entropic_transport(const Matrix& cost_gain, double eps, int max_iter, double tol, int& iterations) {
  const Index nx = cost_gain.rows(), ny = cost_gain.cols();
  const double a = 1.0 / static_cast<double>(nx), b = 1.0 / static_cast<double>(ny);
  const double log_a = std::log(a), log_b = std::log(b);
  const Matrix k = cost_gain / eps;
  detail::DualState d{Vector::Zero(nx), Vector::Zero(ny)};
  double violation = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  constexpr double newton_threshold = 1e-3;
  for (iterations = 1; iterations <= max_iter; ++iterations) {
    bool advanced = false;
    if (violation < newton_threshold && nx + ny > 2) advanced = detail::newton_step(k, d, a, b, violation);
    if (!advanced) {
      for (Index i = 0; i < nx; ++i) d.f(i) = log_a - detail::log_sum_exp(k.row(i).transpose() + d.g);
      for (Index j = 0; j < ny; ++j) d.g(j) = log_b - detail::log_sum_exp(k.col(j) + d.f);
      violation = detail::marginal_violation(k, d, a, b);
    }
    trace.push_back(violation);
    if (violation < tol) break;
  }
  if (!(violation < tol)) {
    throw ConvergenceError("soft matching: scaling iterations did not converge (marginal violation " +
                               std::to_string(violation) + ")",
                           trace);
  }
  return ((k.colwise() + d.f).rowwise() + d.g.transpose()).array().exp().matrix();
}

/// Projects a nearly-feasible plan onto the exact transport polytope with
/// uniform marginals (rescale rows and columns down, then add the rank-one
/// correction of the remaining deficits).
inline Matrix round_to_marginals(Matrix plan) {
  const Index nx = plan.rows(), ny = plan.cols();
  const double a = 1.0 / static_cast<double>(nx), b = 1.0 / static_cast<double>(ny);
  for (Index i = 0; i < nx; ++i) {
    const double r = plan.row(i).sum();
    if (r > a) plan.row(i) *= a / r;
  }
  for (Index j = 0; j < ny; ++j) {
    const double c = plan.col(j).sum();
    if (c > b) plan.col(j) *= b / c;
  }
  const Vector err_r = (Vector::Constant(nx, a) - plan.rowwise().sum()).cwiseMax(0.0);
  const Vector err_c = (Vector::Constant(ny, b) - plan.colwise().sum().transpose()).cwiseMax(0.0);
  const double mass = err_r.sum();
  if (mass > 0.0) plan += err_r * err_c.transpose() / mass;
  return plan;
}

inline SoftMatchingFit fit_soft_matching(const Matrix& x, const Matrix& y, const SoftMatchingOptions& opt = {}) {
  if (x.rows() < 3) throw DataError("soft matching needs at least 3 training stimuli");
  if (x.rows() != y.rows()) throw DataError("soft matching: stimulus count mismatch");
  SoftMatchingFit fit;
  auto& tp = fit.transport;
  detail::column_stats(x, tp.source_mean, tp.source_std);
  detail::column_stats(y, tp.target_mean, tp.target_std);
  for (Index i = 0; i < x.cols(); ++i)
    if (!(tp.source_std(i) > 0.0)) throw DataError("soft matching: source neuron " + std::to_string(i) + " has zero variance");
  for (Index j = 0; j < y.cols(); ++j)
    if (!(tp.target_std(j) > 0.0)) throw DataError("soft matching: target neuron " + std::to_string(j) + " has zero variance");

  const double n = static_cast<double>(x.rows());
  const Matrix zx = ((x.rowwise() - tp.source_mean.transpose()).array().rowwise() / tp.source_std.transpose().array()).matrix();
  const Matrix zy = ((y.rowwise() - tp.target_mean.transpose()).array().rowwise() / tp.target_std.transpose().array()).matrix();
  tp.correlation = zx.transpose() * zy / n;

  const double range = tp.correlation.maxCoeff() - tp.correlation.minCoeff();
  if (range > 0.0) {
    const double eps = opt.epsilon * range;
    // Shift so the largest gain is 0; the optimum is unchanged.
    const Matrix gain = tp.correlation.array() - tp.correlation.maxCoeff();
    tp.plan = round_to_marginals(entropic_transport(gain, eps, opt.max_iter, opt.tol, fit.iterations));
  } else {
    tp.plan = Matrix::Constant(x.cols(), y.cols(), 1.0 / static_cast<double>(x.cols() * y.cols()));
  }
  fit.score = (tp.plan.array() * tp.correlation.array()).sum();
  return fit;
}

/// Y_j = N_Y * sd(Y_j) * sum_i z(X_i) T_ij C_ij + mean(Y_j), with z the
/// train-set standardization.
inline Matrix predict_soft_matching(const TransportPlan& tp, const Matrix& x) {
  if (x.cols() != tp.plan.rows())
    throw DataError("soft matching expects " + std::to_string(tp.plan.rows()) + " source neurons, got " +
                    std::to_string(x.cols()));
  const double ny = static_cast<double>(tp.plan.cols());
  const Matrix zx = ((x.rowwise() - tp.source_mean.transpose()).array().rowwise() / tp.source_std.transpose().array()).matrix();
  const Matrix weights = tp.plan.cwiseProduct(tp.correlation);
  Matrix out = (zx * weights) * ny;
  out = (out.array().rowwise() * tp.target_std.transpose().array()).matrix();
  out.rowwise() += tp.target_mean.transpose();
  return out;
}

}  // namespace iatc::transforms
