#pragma once

#include <cmath>
#include <string>

#include "iatc/core.hpp"
#include "iatc/numeric.hpp"

namespace iatc::transforms {

/// Representational dissimilarity matrix: 1 - Pearson correlation between the
/// response patterns (rows) of every stimulus pair.
inline Matrix rdm(const Matrix& responses) {
  const Index s = responses.rows();
  Matrix z = responses;
  for (Index i = 0; i < s; ++i) {
    const double m = z.row(i).mean();
    z.row(i).array() -= m;
    const double norm = z.row(i).norm();
    if (!(norm > 0.0))
      throw DataError("rsa: stimulus " + std::to_string(i) + " has a zero-variance response pattern");
    z.row(i) /= norm;
  }
  Matrix d = Matrix::Ones(s, s) - z * z.transpose();
  d.diagonal().setZero();
  return d;
}

/// Pearson correlation between the upper triangles of both RDMs, optionally
/// squared. A scoring benchmark only; there is no predictive map.
inline double rsa_score(const Matrix& a, const Matrix& b, bool squared = false) {
  if (a.rows() != b.rows()) throw DataError("rsa: stimulus count mismatch");
  const Matrix da = rdm(a), db = rdm(b);
  const Index s = a.rows();
  Vector ua(s * (s - 1) / 2), ub(s * (s - 1) / 2);
  Index k = 0;
  for (Index i = 0; i < s; ++i)
    for (Index j = i + 1; j < s; ++j, ++k) {
      ua(k) = da(i, j);
      ub(k) = db(i, j);
    }
  const double r = pearson(ua, ub);
  if (!std::isfinite(r)) throw DataError("rsa: zero-variance RDM");
  return squared ? r * r : r;
}

}  // namespace iatc::transforms
