#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "iatc/core.hpp"

namespace iatc {

struct YeoJohnsonParams {
  double lambda = 1.0;
  double post_mean = 0.0;
  double post_std = 1.0;
};

/// Raw Yeo-Johnson transform (no standardization). The lambda = 0 and
/// lambda = 2 cases are the logarithmic limits; nearby lambdas go through
/// expm1/log1p so the transform is continuous in lambda.
inline double yeo_johnson(double x, double lambda) {
  constexpr double eps = 1e-12;
  if (x >= 0.0) {
    const double l = std::log1p(x);
    if (std::abs(lambda) < eps) return l;
    return std::expm1(lambda * l) / lambda;
  }
  const double l = std::log1p(-x);
  const double m = 2.0 - lambda;
  if (std::abs(m) < eps) return -l;
  return -std::expm1(m * l) / m;
}

/// Profile log-likelihood of lambda under a Gaussian model of the
/// transformed samples, including the Jacobian term.
inline double yeo_johnson_loglik(const Vector& x, double lambda) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (Index i = 0; i < x.size(); ++i) mean += yeo_johnson(x(i), lambda);
  mean /= n;
  double var = 0.0, jac = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double t = yeo_johnson(x(i), lambda) - mean;
    var += t * t;
    jac += std::copysign(std::log1p(std::abs(x(i))), x(i));
  }
  var /= n;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jac;
}

namespace detail {

/// Golden-section maximization of f on [lo, hi].
inline double golden_max(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Maximum-likelihood lambda on [-5, 5] plus standardization statistics of
/// the transformed training samples.
inline YeoJohnsonParams yj_fit(const Vector& x) {
  if (x.size() < 10) throw DataError("yj_fit needs at least 10 samples");
  if (!x.allFinite()) throw DataError("yj_fit: non-finite sample");
  const double m = x.mean();
  if (!((x.array() - m).abs().maxCoeff() > 0.0)) throw DataError("yj_fit: zero-variance input");

  constexpr double lo = -5.0, hi = 5.0, tol = 1e-6;
  constexpr int grid = 101;
  const auto f = [&x](double l) { return yeo_johnson_loglik(x, l); };
  std::vector<double> values(grid);
  int best = 0;
  for (int i = 0; i < grid; ++i) {
    values[static_cast<std::size_t>(i)] = f(lo + (hi - lo) * i / (grid - 1));
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  // Unimodal on the grid: rises to `best`, falls afterwards.
  bool unimodal = true;
  for (int i = 1; i <= best; ++i)
    if (values[static_cast<std::size_t>(i)] < values[static_cast<std::size_t>(i - 1)]) unimodal = false;
  for (int i = best + 1; i < grid; ++i)
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(i - 1)]) unimodal = false;

  double a = lo, b = hi;
  if (!unimodal) {
    const double step = (hi - lo) / (grid - 1);
    a = std::max(lo, lo + step * (best - 1));
    b = std::min(hi, lo + step * (best + 1));
  }
  YeoJohnsonParams p;
  p.lambda = detail::golden_max(f, a, b, tol);
  if (f(p.lambda) < values[static_cast<std::size_t>(best)]) p.lambda = lo + (hi - lo) * best / (grid - 1);

  Vector t(x.size());
  for (Index i = 0; i < x.size(); ++i) t(i) = yeo_johnson(x(i), p.lambda);
  p.post_mean = t.mean();
  p.post_std = std::sqrt((t.array() - p.post_mean).square().mean());
  if (!(p.post_std > 0.0)) throw DataError("yj_fit: transformed samples have zero variance");
  return p;
}

inline double yj_apply(const YeoJohnsonParams& p, double x) {
  return (yeo_johnson(x, p.lambda) - p.post_mean) / p.post_std;
}

inline Vector yj_apply(const YeoJohnsonParams& p, const Vector& x) {
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) out(i) = yj_apply(p, x(i));
  return out;
}

/// Column-wise power transform of a stimuli x features matrix.
struct PowerTransform {
  std::vector<YeoJohnsonParams> params;

  static PowerTransform fit(const Matrix& x) {
    PowerTransform pt;
    for (Index j = 0; j < x.cols(); ++j) {
      try {
        pt.params.push_back(yj_fit(x.col(j)));
      } catch (const DataError& e) {
        throw DataError("feature " + std::to_string(j) + ": " + e.what());
      }
    }
    return pt;
  }

  Matrix apply(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != params.size())
      throw DataError("power transform: feature count mismatch");
    Matrix out(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = yj_apply(params[static_cast<std::size_t>(j)], Vector(x.col(j)));
    return out;
  }
};

}  // namespace iatc
