#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "iatc/core.hpp"
#include "iatc/dataset.hpp"
#include "iatc/numeric.hpp"
#include "iatc/rng.hpp"
#include "iatc/transforms.hpp"

namespace iatc::noise {

/// Reliability of a full-length measure from a split-half correlation r.
inline double spearman_brown(double r) {
  if (!(r > -1.0 && r <= 1.0)) throw DomainError("spearman_brown: r must lie in (-1, 1], got " + std::to_string(r));
  return 2.0 * r / (1.0 + r);
}

struct SplitHalf {
  IndexList half1, half2;  // trial indices, sizes differ by at most one
};

inline SplitHalf split_trials(Index trials, Rng& rng) {
  IndexList order(static_cast<std::size_t>(trials));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  SplitHalf s;
  const auto mid = order.begin() + static_cast<std::ptrdiff_t>(trials / 2);
  s.half1.assign(order.begin(), mid);
  s.half2.assign(mid, order.end());
  return s;
}

struct BootstrapOptions {
  int n_boot = 100;
  int n_splits = 10;
  double train_fraction = 0.8;

  static BootstrapOptions fast() { return {16, 1, 0.8}; }
};

struct CorrectedScore {
  double corrected = 0.0;  // mean over samples of the per-neuron median ratio
  double raw = 0.0;        // same aggregation of the uncorrected numerator
  long excluded = 0;       // neuron-samples dropped for nonpositive denominators
  long above_one = 0;      // neuron-samples whose ratio exceeded 1
  int samples = 0;
  std::vector<double> sample_scores;  // per-sample median ratio
};

/// Split-half noise-corrected predictivity of model responses for a target
/// with repeated trials. For each split and bootstrap sample, trials are
/// divided into two halves; per target neuron
///
///   Corr(M(s1)_test, s2_test) / sqrt(SB(Corr(M(s1)_test, M(s2)_test)) * SB(Corr(s1_test, s2_test)))
///
/// where M(s) is `method` fitted from model to half-s training responses and
/// SB is the Spearman-Brown correction. Medians over neurons are averaged
/// over samples.
inline CorrectedScore corrected_predictivity_bootstrap(const Matrix& model, const TrialTensor& target,
                                                       const MappingMethod& method, const BootstrapOptions& opt,
                                                       std::uint64_t seed) {
  if (target.trial_count() < 2) throw DataError("noise correction needs at least 2 target trials");
  if (model.rows() != target.stimuli()) throw DataError("noise correction: stimulus count mismatch");
  CorrectedScore out;
  double corrected_sum = 0.0, raw_sum = 0.0;
  for (int split_index = 0; split_index < opt.n_splits; ++split_index) {
    const Split split = split_stimuli(model.rows(), {opt.train_fraction, derive_seed(seed, static_cast<std::uint64_t>(split_index)), 5});
    const Matrix model_train = take_rows(model, split.train);
    const Matrix model_test = take_rows(model, split.test);
    for (int b = 0; b < opt.n_boot; ++b) {
      const std::uint64_t sample_seed = derive_seed(seed, "split" + std::to_string(split_index) + "/boot" + std::to_string(b));
      Rng rng(sample_seed);
      const SplitHalf halves = split_trials(target.trial_count(), rng);
      const Matrix s1 = target.mean(halves.half1), s2 = target.mean(halves.half2);
      const Matrix s1_test = take_rows(s1, split.test), s2_test = take_rows(s2, split.test);
      const FittedMap m1 = fit(method, model_train, take_rows(s1, split.train), derive_seed(sample_seed, std::uint64_t{1}));
      const FittedMap m2 = fit(method, model_train, take_rows(s2, split.train), derive_seed(sample_seed, std::uint64_t{2}));
      const Matrix p1 = predict(m1, model_test), p2 = predict(m2, model_test);
      std::vector<double> ratios, numerators;
      for (Index j = 0; j < target.neurons(); ++j) {
        const double num = pearson(p1.col(j), s2_test.col(j));
        numerators.push_back(num);
        const double rp = pearson(p1.col(j), p2.col(j));
        const double rt = pearson(s1_test.col(j), s2_test.col(j));
        const double sbp = std::isfinite(rp) && rp > -1.0 ? spearman_brown(rp) : std::numeric_limits<double>::quiet_NaN();
        const double sbt = std::isfinite(rt) && rt > -1.0 ? spearman_brown(rt) : std::numeric_limits<double>::quiet_NaN();
        if (!(sbp > 0.0) || !(sbt > 0.0) || !std::isfinite(num)) {
          ++out.excluded;
          continue;
        }
        const double ratio = num / std::sqrt(sbp * sbt);
        if (ratio > 1.0) ++out.above_one;
        ratios.push_back(ratio);
      }
      const double med = median(ratios);
      if (std::isfinite(med)) {
        corrected_sum += med;
        out.sample_scores.push_back(med);
        raw_sum += median(numerators);
        ++out.samples;
      }
    }
  }
  if (out.samples == 0) throw DataError("noise correction: every neuron was excluded in every sample");
  out.corrected = corrected_sum / out.samples;
  out.raw = raw_sum / out.samples;
  return out;
}

/// NC = ncsnr^2 / (ncsnr^2 + 1/n) per neuron.
inline std::vector<double> nc_ceiling(const std::vector<double>& ncsnr, int n_trials) {
  if (n_trials < 1) throw DomainError("nc_ceiling: need at least one trial");
  std::vector<double> nc;
  nc.reserve(ncsnr.size());
  for (double s : ncsnr) {
    if (std::isinf(s)) {
      nc.push_back(1.0);
      continue;
    }
    const double s2 = s * s;
    nc.push_back(s2 / (s2 + 1.0 / n_trials));
  }
  return nc;
}

struct NcCorrected {
  std::vector<double> values;  // NaN where the ceiling is 0 (undefined)
  long undefined = 0;
  long above_one = 0;
};

/// raw / NC elementwise. Neurons with NC = 0 are undefined and excluded from
/// medians; values above 1 are kept as-is.
inline NcCorrected nc_corrected_r2(const std::vector<double>& raw, const std::vector<double>& ceiling) {
  if (raw.size() != ceiling.size()) throw DataError("nc_corrected_r2: length mismatch");
  NcCorrected out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(ceiling[i] > 0.0)) {
      out.values.push_back(std::numeric_limits<double>::quiet_NaN());
      ++out.undefined;
      continue;
    }
    const double v = raw[i] / ceiling[i];
    if (v > 1.0) ++out.above_one;
    out.values.push_back(v);
  }
  return out;
}

}  // namespace iatc::noise
