#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "iatc/core.hpp"
#include "iatc/dataset.hpp"
#include "iatc/numeric.hpp"

namespace iatc::transforms {

/// Affine map Y = X W + b.
struct LinearMap {
  Matrix weights;    // source neurons x target neurons
  Vector intercept;  // per target neuron

  Matrix predict(const Matrix& x) const {
    if (x.cols() != weights.rows())
      throw DataError("linear map expects " + std::to_string(weights.rows()) + " source neurons, got " +
                      std::to_string(x.cols()));
    Matrix y = x * weights;
    y.rowwise() += intercept.transpose();
    return y;
  }
};

struct CvResult {
  std::size_t best = 0;             // index into the grid
  std::vector<double> mean_scores;  // mean over folds of mean R^2 over targets
};

/// K-fold selection of one shared regularization value. `fit_path` fits the
/// whole grid on a training subset and returns one map per grid value.
inline CvResult cross_validate(
    const Matrix& x, const Matrix& y, std::size_t grid_size, int folds, std::uint64_t seed,
    const std::function<std::vector<LinearMap>(const Matrix&, const Matrix&)>& fit_path) {
  const auto fold_sets = kfold(x.rows(), folds, seed);
  CvResult cv;
  cv.mean_scores.assign(grid_size, 0.0);
  for (const auto& val : fold_sets) {
    const IndexList train = complement(x.rows(), val);
    const Matrix xt = take_rows(x, train), yt = take_rows(y, train);
    const Matrix xv = take_rows(x, val), yv = take_rows(y, val);
    const auto path = fit_path(xt, yt);
    for (std::size_t g = 0; g < grid_size; ++g) {
      // Constant validation targets give NaN and are skipped.
      std::vector<double> finite;
      for (double v : r2_per_column(yv, path[g].predict(xv)))
        if (std::isfinite(v)) finite.push_back(v);
      if (finite.empty()) throw DataError("degenerate fold: every target neuron is constant on a validation fold");
      cv.mean_scores[g] += mean(finite) / static_cast<double>(fold_sets.size());
    }
  }
  for (std::size_t g = 1; g < grid_size; ++g)
    if (cv.mean_scores[g] > cv.mean_scores[cv.best]) cv.best = g;
  return cv;
}

// ---------------------------------------------------------------------------
// Ridge

struct RidgeOptions {
  std::vector<double> lambda_grid = logspace(1e-4, 1e4, 9);
  int folds = 5;
};

struct RidgeFit {
  LinearMap map;
  double lambda = 0.0;
  std::vector<double> cv_scores;
};

/// Ridge solutions for every lambda from one SVD of the centered design.
/// Objective per target: ||y_c - X_c w||^2 + lambda ||w||^2, intercept free.
inline std::vector<LinearMap> ridge_path(const Matrix& x, const Matrix& y, const std::vector<double>& lambdas) {
  const Vector mx = x.colwise().mean();
  const Vector my = y.colwise().mean();
  const Matrix xc = x.rowwise() - mx.transpose();
  const Matrix yc = y.rowwise() - my.transpose();
  Eigen::BDCSVD<Matrix> svd(xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double tol = s.size() ? s(0) * 1e-12 * static_cast<double>(std::max(x.rows(), x.cols())) : 0.0;
  if (s.size() == 0 || !(s(0) > 0.0)) throw DataError("ridge: rank-0 design (every source neuron is constant)");
  const Matrix uty = svd.matrixU().transpose() * yc;
  std::vector<LinearMap> out;
  for (double lambda : lambdas) {
    Vector shrink(s.size());
    for (Index i = 0; i < s.size(); ++i) shrink(i) = s(i) > tol ? s(i) / (s(i) * s(i) + lambda) : 0.0;
    LinearMap m;
    m.weights = svd.matrixV() * (shrink.asDiagonal() * uty);
    m.intercept = my - m.weights.transpose() * mx;
    out.push_back(std::move(m));
  }
  return out;
}

inline RidgeFit fit_ridge(const Matrix& x, const Matrix& y, const RidgeOptions& opt, std::uint64_t seed) {
  if (opt.lambda_grid.empty()) throw ConfigError("ridge: empty lambda grid");
  for (double l : opt.lambda_grid)
    if (!(l > 0.0)) throw ConfigError("ridge: lambda values must be positive");
  if (x.rows() < 2 * opt.folds) throw DataError("ridge: too few training stimuli for cross-validation");
  const auto path = [&opt](const Matrix& a, const Matrix& b) { return ridge_path(a, b, opt.lambda_grid); };
  RidgeFit fit;
  if (opt.lambda_grid.size() == 1) {
    fit.lambda = opt.lambda_grid.front();
  } else {
    const CvResult cv = cross_validate(x, y, opt.lambda_grid.size(), opt.folds, seed, path);
    fit.lambda = opt.lambda_grid[cv.best];
    fit.cv_scores = cv.mean_scores;
  }
  fit.map = std::move(ridge_path(x, y, {fit.lambda}).front());
  return fit;
}

// ---------------------------------------------------------------------------
// Lasso

struct LassoOptions {
  std::vector<double> alpha_grid = logspace(1e-4, 1e4, 9);
  int folds = 5;
  bool nonnegative = false;
  int max_sweeps = 10000;
  double tol = 1e-7;  // duality gap relative to ||y_c||^2 / (2n)
};

struct LassoFit {
  LinearMap map;
  double alpha = 0.0;
  std::vector<double> cv_scores;
  int max_sweeps_used = 0;
};

namespace detail {

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Duality gap of 1/(2n)||r||^2 + alpha ||w||_1 (with w >= 0 when
/// `nonnegative`), r = y - X w.
inline double lasso_gap(const Matrix& x, const Vector& y, const Vector& w, const Vector& r, double alpha,
                        bool nonnegative) {
  const double n = static_cast<double>(x.rows());
  const Vector xtr = x.transpose() * r / n;
  const double dual_norm = nonnegative ? std::max(xtr.maxCoeff(), 0.0) : xtr.cwiseAbs().maxCoeff();
  const double s = dual_norm > alpha ? alpha / dual_norm : 1.0;
  const double primal = 0.5 / n * r.squaredNorm() + alpha * w.lpNorm<1>();
  const double dual = 0.5 / n * (y.squaredNorm() - (y - s * r).squaredNorm());
  return primal - dual;
}

}  // namespace detail

/// Coordinate descent for one centered target column. `w` is the warm start
/// and receives the solution. Returns sweeps used.
inline int lasso_coordinate_descent(const Matrix& x, const Vector& y, double alpha, bool nonnegative,
                                    int max_sweeps, double tol, Vector& w) {
  const double n = static_cast<double>(x.rows());
  const Vector col_sq = x.colwise().squaredNorm() / n;
  Vector r = y - x * w;
  const double scale = std::max(y.squaredNorm() / (2.0 * n), 1e-300);
  double gap = std::numeric_limits<double>::infinity();
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_step = 0.0, max_w = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (col_sq(j) <= 0.0) {
        w(j) = 0.0;
        continue;
      }
      const double old = w(j);
      const double rho = x.col(j).dot(r) / n + col_sq(j) * old;
      double next = detail::soft_threshold(rho, alpha) / col_sq(j);
      if (nonnegative && next < 0.0) next = 0.0;
      if (next != old) {
        r -= (next - old) * x.col(j);
        w(j) = next;
      }
      max_step = std::max(max_step, std::abs(next - old));
      max_w = std::max(max_w, std::abs(next));
    }
    if (max_w == 0.0 || max_step <= 1e-4 * max_w || sweep == max_sweeps) {
      gap = detail::lasso_gap(x, y, w, r, alpha, nonnegative);
      if (gap <= tol * scale) return sweep;
    }
  }
  throw ConvergenceError("lasso: no convergence after " + std::to_string(max_sweeps) +
                             " sweeps (duality gap " + std::to_string(gap) + ")",
                         {gap});
}

/// Lasso solutions along a grid (warm-started from large to small alpha).
inline std::vector<LinearMap> lasso_path(const Matrix& x, const Matrix& y, const std::vector<double>& alphas,
                                         const LassoOptions& opt, int* sweeps_used = nullptr) {
  const Vector mx = x.colwise().mean();
  const Vector my = y.colwise().mean();
  const Matrix xc = x.rowwise() - mx.transpose();
  const Matrix yc = y.rowwise() - my.transpose();
  if (!(xc.cwiseAbs().maxCoeff() > 0.0)) throw DataError("lasso: rank-0 design (every source neuron is constant)");
  std::vector<std::size_t> order(alphas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alphas[a] > alphas[b]; });
  std::vector<LinearMap> out(alphas.size());
  for (auto& m : out) m.weights = Matrix::Zero(x.cols(), y.cols());
  for (Index t = 0; t < y.cols(); ++t) {
    Vector w = Vector::Zero(x.cols());
    const Vector yt = yc.col(t);
    for (std::size_t k : order) {
      const int used = lasso_coordinate_descent(xc, yt, alphas[k], opt.nonnegative, opt.max_sweeps, opt.tol, w);
      if (sweeps_used) *sweeps_used = std::max(*sweeps_used, used);
      out[k].weights.col(t) = w;
    }
  }
  for (auto& m : out) m.intercept = my - m.weights.transpose() * mx;
  return out;
}

inline LassoFit fit_lasso(const Matrix& x, const Matrix& y, const LassoOptions& opt, std::uint64_t seed) {
  if (opt.alpha_grid.empty()) throw ConfigError("lasso: empty alpha grid");
  for (double a : opt.alpha_grid)
    if (!(a > 0.0)) throw ConfigError("lasso: alpha values must be positive");
  LassoFit fit;
  if (opt.alpha_grid.size() == 1) {
    fit.alpha = opt.alpha_grid.front();
  } else {
    if (x.rows() < 2 * opt.folds) throw DataError("lasso: too few training stimuli for cross-validation");
    const auto path = [&opt](const Matrix& a, const Matrix& b) { return lasso_path(a, b, opt.alpha_grid, opt); };
    const CvResult cv = cross_validate(x, y, opt.alpha_grid.size(), opt.folds, seed, path);
    fit.alpha = opt.alpha_grid[cv.best];
    fit.cv_scores = cv.mean_scores;
  }
  fit.map = std::move(lasso_path(x, y, {fit.alpha}, opt, &fit.max_sweeps_used).front());
  return fit;
}

}  // namespace iatc::transforms
