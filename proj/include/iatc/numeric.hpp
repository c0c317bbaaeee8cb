#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "iatc/core.hpp"

namespace iatc {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// ln(e^y - 1) without cancellation. Small y goes through expm1, large y
/// through y + log1p(-e^-y).
inline double stable_softplus_inverse(double y) {
  if (!(y > 0.0)) throw DomainError("softplus inverse needs y > 0, got " + std::to_string(y));
  if (y < 1.0) return std::log(std::expm1(y));
  return y + std::log1p(-std::exp(-y));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Median ignoring NaN entries. NaN when nothing is left.
inline double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

template <typename A, typename B>
double pearson(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const Index n = a.size();
  if (n != b.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double ma = a.mean();
  const double mb = b.mean();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double da = a(i) - ma;
    const double db = b(i) - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

/// Per-column coefficient of determination, 1 - SSE/SS_tot, unclipped.
/// A constant target column yields NaN unless predicted exactly (then 1).
inline std::vector<double> r2_per_column(const Matrix& truth, const Matrix& pred) {
  std::vector<double> out(static_cast<std::size_t>(truth.cols()));
  for (Index j = 0; j < truth.cols(); ++j) {
    const double m = truth.col(j).mean();
    const double sst = (truth.col(j).array() - m).square().sum();
    const double sse = (truth.col(j) - pred.col(j)).squaredNorm();
    if (sst > 0.0)
      out[static_cast<std::size_t>(j)] = 1.0 - sse / sst;
    else
      out[static_cast<std::size_t>(j)] = sse == 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

inline std::vector<double> pearson_per_column(const Matrix& a, const Matrix& b) {
  std::vector<double> out(static_cast<std::size_t>(a.cols()));
  for (Index j = 0; j < a.cols(); ++j) out[static_cast<std::size_t>(j)] = pearson(a.col(j), b.col(j));
  return out;
}

/// Population standard deviation (divide by n).
template <typename A>
double stddev(const Eigen::MatrixBase<A>& a) {
  const double m = a.mean();
  return std::sqrt((a.array() - m).square().mean());
}

/// Sample skewness g1 (population moments).
inline double skewness(const Vector& x) {
  const double m = x.mean();
  const double m2 = (x.array() - m).square().mean();
  const double m3 = (x.array() - m).cube().mean();
  return m3 / std::pow(m2, 1.5);
}

inline std::vector<double> logspace(double lo, double hi, int count) {
  std::vector<double> out;
  if (count == 1) return {lo};
  for (int i = 0; i < count; ++i)
    out.push_back(std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (count - 1)));
  return out;
}

}  // namespace iatc
