#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "iatc/core.hpp"
#include "iatc/dataset.hpp"
#include "iatc/numeric.hpp"
#include "iatc/rng.hpp"
#include "iatc/transforms.hpp"

namespace iatc::metrics {

// ---------------------------------------------------------------------------
// Predictivity

struct Predictivity {
  double median_r2 = 0.0;
  std::vector<double> per_neuron;
};

/// Fit on the train stimuli, score test-set R^2 per target neuron, report
/// the median across target neurons.
inline Predictivity predictivity(const Matrix& source, const Matrix& target, const MappingMethod& method,
                                 const Split& split, std::uint64_t seed) {
  const FittedMap map = fit(method, take_rows(source, split.train), take_rows(target, split.train), seed);
  Predictivity p;
  p.per_neuron = r2_per_column(take_rows(target, split.test), predict(map, take_rows(source, split.test)));
  p.median_r2 = median(p.per_neuron);
  return p;
}

struct Bidirectional {
  double forward = 0.0;   // a -> b
  double backward = 0.0;  // b -> a
  double mean() const { return 0.5 * (forward + backward); }
};

inline Bidirectional bidirectional_score(const Matrix& a, const Matrix& b, const MappingMethod& method,
                                         const Split& split, std::uint64_t seed) {
  return {predictivity(a, b, method, split, derive_seed(seed, std::uint64_t{1})).median_r2,
          predictivity(b, a, method, split, derive_seed(seed, std::uint64_t{2})).median_r2};
}

// ---------------------------------------------------------------------------
// Dissimilarity and specificity

struct DissimilarityMatrix {
  std::vector<std::string> labels;
  Matrix values;  // symmetric, zero diagonal

  Index size() const { return values.rows(); }
};

/// Dissimilarity 1 - min(score, 1) from a symmetric pair score.
inline double dissimilarity_from_score(double score) { return 1.0 - std::min(score, 1.0); }

/// Builds the matrix from a pair scorer called once per unordered pair i < j.
inline DissimilarityMatrix dissimilarity_matrix(const std::vector<std::string>& labels,
                                                const std::function<double(Index, Index)>& pair_score) {
  if (labels.size() < 2) throw DataError("dissimilarity matrix needs at least 2 profiles");
  DissimilarityMatrix d;
  d.labels = labels;
  const auto k = static_cast<Index>(labels.size());
  d.values = Matrix::Zero(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = i + 1; j < k; ++j) d.values(i, j) = d.values(j, i) = dissimilarity_from_score(pair_score(i, j));
  return d;
}

/// Bidirectional-score dissimilarities over a set of profiles.
inline DissimilarityMatrix dissimilarity_matrix(const std::vector<const ResponseProfile*>& profiles,
                                                const MappingMethod& method, const Split& split, std::uint64_t seed) {
  std::vector<std::string> labels;
  for (const auto* p : profiles) labels.push_back(p->label());
  return dissimilarity_matrix(labels, [&](Index i, Index j) {
    const auto& a = *profiles[static_cast<std::size_t>(i)];
    const auto& b = *profiles[static_cast<std::size_t>(j)];
    return bidirectional_score(a.matrix.values, b.matrix.values, method, split,
                               derive_seed(seed, a.label() + "|" + b.label()))
        .mean();
  });
}

struct SpecificityReport {
  double silhouette_mean = 0.0;
  std::vector<double> per_profile;
  std::optional<double> hierarchy_correlation;
};

/// s(i) = (b - a) / max(a, b); a: mean dissimilarity to other profiles of the
/// same area, b: mean dissimilarity to profiles of every other area.
inline SpecificityReport silhouette_specificity(const DissimilarityMatrix& d, const std::vector<std::string>& area_of) {
  const Index k = d.size();
  if (static_cast<Index>(area_of.size()) != k) throw DataError("silhouette: label count does not match matrix");
  std::map<std::string, int> counts;
  for (const auto& a : area_of) ++counts[a];
  if (counts.size() < 2) throw DataError("silhouette needs at least 2 areas");
  std::string singles;
  for (const auto& [area, n] : counts)
    if (n < 2) singles += (singles.empty() ? "" : ", ") + area;
  if (!singles.empty()) throw DataError("silhouette: areas with a single profile: " + singles);

  SpecificityReport r;
  for (Index i = 0; i < k; ++i) {
    double same = 0.0, other = 0.0;
    int ns = 0, no = 0;
    for (Index j = 0; j < k; ++j) {
      if (j == i) continue;
      if (area_of[static_cast<std::size_t>(j)] == area_of[static_cast<std::size_t>(i)]) {
        same += d.values(i, j);
        ++ns;
      } else {
        other += d.values(i, j);
        ++no;
      }
    }
    const double a = same / ns, b = other / no;
    const double denom = std::max(a, b);
    r.per_profile.push_back(denom > 0.0 ? (b - a) / denom : 0.0);
  }
  r.silhouette_mean = mean(r.per_profile);
  return r;
}

/// Pearson correlation over unordered profile pairs between dissimilarity
/// and |level_i - level_j|.
inline double hierarchy_correlation(const DissimilarityMatrix& d, const std::vector<double>& level_of) {
  const Index k = d.size();
  if (static_cast<Index>(level_of.size()) != k) throw DataError("hierarchy correlation: label count mismatch");
  const Index pairs = k * (k - 1) / 2;
  if (pairs < 3) throw DataError("hierarchy correlation needs at least 3 profile pairs");
  Vector diss(pairs), dist(pairs);
  Index at = 0;
  for (Index i = 0; i < k; ++i)
    for (Index j = i + 1; j < k; ++j, ++at) {
      diss(at) = d.values(i, j);
      dist(at) = std::abs(level_of[static_cast<std::size_t>(i)] - level_of[static_cast<std::size_t>(j)]);
    }
  const double r = pearson(diss, dist);
  if (!std::isfinite(r)) throw DataError("hierarchy correlation: zero variance in dissimilarities or level distances");
  return r;
}

// ---------------------------------------------------------------------------
// MDS

struct MdsResult {
  Matrix coordinates;  // profiles x dims
  double stress = 0.0;
  std::vector<double> stress_trace;  // raw stress after each iteration, initial first
};

namespace detail {

inline double raw_stress(const Matrix& delta, const Matrix& x) {
  double s = 0.0;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = i + 1; j < x.rows(); ++j) {
      const double r = delta(i, j) - (x.row(i) - x.row(j)).norm();
      s += r * r;
    }
  return s;
}

}  // namespace detail

/// Metric SMACOF (unit weights) from a seeded Gaussian start: repeated
/// Guttman transforms X <- B(X) X / n until the relative stress decrease
/// drops below `tol` or `max_iter` is reached.
inline MdsResult mds_embed(const DissimilarityMatrix& d, int dims = 2, std::uint64_t seed = 0, int max_iter = 300,
                           double tol = 1e-9) {
  const Index n = d.size();
  const Matrix& delta = d.values;
  Rng rng(derive_seed(seed, std::uint64_t{0x3D5}));
  std::normal_distribution<double> normal(0.0, 1.0);
  MdsResult r;
  r.coordinates.resize(n, dims);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < dims; ++c) r.coordinates(i, c) = normal(rng);
  r.stress = detail::raw_stress(delta, r.coordinates);
  r.stress_trace.push_back(r.stress);
  Matrix b(n, n);
  for (int it = 0; it < max_iter && r.stress > 0.0; ++it) {
    b.setZero();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double dist = (r.coordinates.row(i) - r.coordinates.row(j)).norm();
        b(i, j) = dist > 0.0 ? -delta(i, j) / dist : 0.0;
      }
    for (Index i = 0; i < n; ++i) b(i, i) = -b.row(i).sum();
    r.coordinates = b * r.coordinates / static_cast<double>(n);
    const double next = detail::raw_stress(delta, r.coordinates);
    r.stress_trace.push_back(next);
    const double change = (r.stress - next) / std::max(r.stress, 1e-300);
    r.stress = next;
    if (change < tol) break;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Model separation

/// Mean over model pairs and layers of |score(m1, l) - score(m2, l)|.
/// `scores[m][l]` is model m's brain similarity at layer l.
inline double model_separation(const std::vector<std::vector<double>>& scores) {
  if (scores.size() < 2) throw DataError("model separation needs at least 2 models");
  const std::size_t layers = scores.front().size();
  for (const auto& s : scores)
    if (s.size() != layers) throw DataError("model separation: models have different layer counts");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < scores.size(); ++a)
    for (std::size_t b = a + 1; b < scores.size(); ++b)
      for (std::size_t l = 0; l < layers; ++l) {
        total += std::abs(scores[a][l] - scores[b][l]);
        ++count;
      }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace iatc::metrics
