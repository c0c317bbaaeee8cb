#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "iatc/core.hpp"
#include "iatc/dataset.hpp"
#include "iatc/numeric.hpp"
#include "iatc/rng.hpp"

namespace iatc::sim {

// ---------------------------------------------------------------------------
// Noisy spiking neuron

struct SpikingConfig {
  double mu = 0.0;
  double sigma = 1.0;
  double threshold = 0.0;
  double refractory_ms = 1.0;
  double window_ms = 100.0;
  int trials = 100;
  std::uint64_t seed = 0;

  int bins() const {
    const double r = window_ms / refractory_ms;
    const double rounded = std::round(r);
    if (!(refractory_ms > 0.0) || rounded < 1.0 || std::abs(r - rounded) > 1e-9)
      throw ConfigError("spiking: window_ms / refractory_ms must be a positive integer");
    return static_cast<int>(rounded);
  }
};

struct SpikeCounts {
  std::vector<double> counts;  // one per trial
  double mean = 0.0;
};

/// Expected count (window / refractory) * Phi((mu - T) / sigma).
inline double analytic_mean_count(const SpikingConfig& cfg) {
  return cfg.bins() * normal_cdf((cfg.mu - cfg.threshold) / cfg.sigma);
}

/// Per refractory bin the input is X ~ N(mu, sigma^2) and the neuron fires
/// once iff X > T; counts are summed over the window.
inline SpikeCounts simulate_spike_counts(const SpikingConfig& cfg) {
  if (!(cfg.sigma > 0.0)) throw DomainError("spiking: sigma must be positive");
  if (cfg.trials < 1) throw ConfigError("spiking: trials must be positive");
  const int bins = cfg.bins();
  Rng rng(cfg.seed);
  std::normal_distribution<double> input(cfg.mu, cfg.sigma);
  SpikeCounts out;
  out.counts.reserve(static_cast<std::size_t>(cfg.trials));
  for (int t = 0; t < cfg.trials; ++t) {
    int spikes = 0;
    for (int b = 0; b < bins; ++b) spikes += input(rng) > cfg.threshold ? 1 : 0;
    out.counts.push_back(spikes);
  }
  out.mean = mean(out.counts);
  return out;
}

// ---------------------------------------------------------------------------
// Activation candidates

enum class Activation { softplus, relu, exponential };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::softplus: return "softplus";
    case Activation::relu: return "relu";
    case Activation::exponential: return "exponential";
  }
  return "?";
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::softplus: return softplus(x);
    case Activation::relu: return std::max(x, 0.0);
    case Activation::exponential: return std::exp(std::min(x, 700.0));
  }
  return x;
}

/// y ~ amplitude * f(gain * (mu - shift)) + offset
struct CandidateFit {
  Activation activation = Activation::softplus;
  double amplitude = 0.0, gain = 1.0, shift = 0.0, offset = 0.0;
  double residual = 0.0;  // sum of squared residuals

  double operator()(double mu) const { return amplitude * activate(activation, gain * (mu - shift)) + offset; }
};

namespace detail {

// Best (amplitude, offset) for fixed (gain, shift) by linear least squares.
inline CandidateFit project_linear(Activation a, double gain, double shift, const std::vector<double>& mu,
                                   const std::vector<double>& y) {
  const auto n = static_cast<double>(mu.size());
  double sf = 0, sff = 0, sy = 0, sfy = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double f = activate(a, gain * (mu[i] - shift));
    sf += f;
    sff += f * f;
    sy += y[i];
    sfy += f * y[i];
  }
  CandidateFit c{a, 0.0, gain, shift, sy / n, 0.0};
  const double var_f = sff - sf * sf / n;
  if (var_f > 1e-12 * std::max(sff, 1e-300) && std::isfinite(var_f)) {
    c.amplitude = (sfy - sf * sy / n) / var_f;
    c.offset = (sy - c.amplitude * sf) / n;
  }
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double r = y[i] - c(mu[i]);
    c.residual += r * r;
  }
  if (!std::isfinite(c.residual)) c.residual = std::numeric_limits<double>::infinity();
  return c;
}

}  // namespace detail

/// Least-squares fit of a scaled, translated activation to (mu, y). The
/// linear parameters are projected out; gain and shift come from a grid
/// search followed by pattern-search refinement.
inline CandidateFit fit_activation(Activation a, const std::vector<double>& mu, const std::vector<double>& y) {
  const auto [lo_it, hi_it] = std::minmax_element(mu.begin(), mu.end());
  const double lo = *lo_it, hi = *hi_it, span = hi - lo;
  const double mid = 0.5 * (lo + hi);
  auto eval = [&](double log_gain, double shift_units) {
    return detail::project_linear(a, std::exp(log_gain) / span, mid + shift_units * span, mu, y);
  };
  CandidateFit best;
  best.residual = std::numeric_limits<double>::infinity();
  double best_lg = 0.0, best_s = 0.0;
  for (int gi = 0; gi <= 40; ++gi) {
    const double lg = std::log(1e-2) + gi * (std::log(1e3) - std::log(1e-2)) / 40.0;
    for (int si = 0; si <= 60; ++si) {
      const double s = -1.5 + si * 3.0 / 60.0;
      const CandidateFit c = eval(lg, s);
      if (c.residual < best.residual) {
        best = c;
        best_lg = lg;
        best_s = s;
      }
    }
  }
  double step_g = 0.1, step_s = 0.025;
  while (step_g > 1e-12 || step_s > 1e-12) {
    bool improved = false;
    const double moves[4][2] = {{step_g, 0}, {-step_g, 0}, {0, step_s}, {0, -step_s}};
    for (const auto& m : moves) {
      const CandidateFit c = eval(best_lg + m[0], best_s + m[1]);
      if (c.residual < best.residual) {
        best = c;
        best_lg += m[0];
        best_s += m[1];
        improved = true;
      }
    }
    if (!improved) {
      step_g *= 0.5;
      step_s *= 0.5;
    }
  }
  return best;
}

/// Fits softplus, ReLU and exponential to trial-mean counts over a mu grid.
inline std::vector<CandidateFit> fit_activation_candidates(const std::vector<double>& mu_grid,
                                                           const std::vector<double>& counts) {
  if (mu_grid.size() != counts.size()) throw DataError("activation fit: grid and counts differ in length");
  if (mu_grid.size() < 4) throw DataError("activation fit: degenerate grid (need at least 4 points)");
  const auto [lo, hi] = std::minmax_element(mu_grid.begin(), mu_grid.end());
  if (!(*hi > *lo)) throw DataError("activation fit: degenerate grid (zero range)");
  std::vector<CandidateFit> out;
  for (Activation a : {Activation::softplus, Activation::relu, Activation::exponential})
    out.push_back(fit_activation(a, mu_grid, counts));
  return out;
}

// ---------------------------------------------------------------------------
// Noisy softplus responses

struct NoisySample {
  Matrix rates;        // c * softplus(pre)
  TrialTensor counts;  // Gamma(shape = rate, scale = 1) per trial
};

inline double gamma_draw(Rng& rng, double shape) {
  if (!(shape > 0.0)) return 0.0;
  std::gamma_distribution<double> g(shape, 1.0);
  return g(rng);
}

inline NoisySample sample_noisy_softplus(const Matrix& pre, double c, int trials, std::uint64_t seed) {
  if (!(c > 0.0)) throw DomainError("noisy softplus: c must be positive");
  if (trials < 1) throw ConfigError("noisy softplus: trials must be positive");
  if (!pre.allFinite()) throw DataError("noisy softplus: non-finite pre-activation");
  NoisySample s;
  s.rates = pre.unaryExpr([c](double v) { return c * softplus(v); });
  Rng rng(seed);
  s.counts.trials.assign(static_cast<std::size_t>(trials), Matrix(pre.rows(), pre.cols()));
  for (auto& t : s.counts.trials)
    for (Index j = 0; j < pre.cols(); ++j)
      for (Index i = 0; i < pre.rows(); ++i) t(i, j) = gamma_draw(rng, s.rates(i, j));
  return s;
}

/// Per-neuron noise-ceiling SNR from repeated trials: sqrt of the signal
/// variance (variance of trial means less the noise share) over the noise SD.
inline std::vector<double> estimate_ncsnr(const TrialTensor& t) {
  const Index n = t.trial_count();
  if (n < 2) throw DataError("ncsnr needs at least 2 trials");
  const Matrix m = t.mean();
  std::vector<double> out;
  for (Index j = 0; j < t.neurons(); ++j) {
    double noise_var = 0.0;
    for (Index i = 0; i < t.stimuli(); ++i) {
      double ss = 0.0;
      for (const auto& tr : t.trials) ss += (tr(i, j) - m(i, j)) * (tr(i, j) - m(i, j));
      noise_var += ss / static_cast<double>(n - 1);
    }
    noise_var /= static_cast<double>(t.stimuli());
    const double total = (m.col(j).array() - m.col(j).mean()).square().sum() / static_cast<double>(t.stimuli() - 1);
    const double signal = std::max(0.0, total - noise_var / static_cast<double>(n));
    // roundoff in the trial mean leaves a tiny residual on noiseless data
    const double floor = 1e-24 * m.col(j).squaredNorm() / static_cast<double>(t.stimuli());
    out.push_back(noise_var > floor ? std::sqrt(signal / noise_var) : std::numeric_limits<double>::infinity());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layered population

struct PopulationConfig {
  int layers = 3;
  std::vector<int> latent_dims = {40, 40, 40};  // one per layer
  int neurons = 60;                             // per subject per layer
  int subjects = 4;
  int stimuli = 2000;
  std::uint64_t teacher_seed = 1;
  std::vector<std::uint64_t> subject_seeds;  // derived from teacher_seed when empty
  double c = 100.0;
  int trials = 50;
  double kappa_max = 30.0;
  double mixing_gain = 2.0;
  double bias_sd = 0.5;
  double teacher_gain = 2.0;
  bool keep_trials = false;

  std::uint64_t subject_seed(int s) const {
    if (!subject_seeds.empty()) return subject_seeds.at(static_cast<std::size_t>(s));
    return derive_seed(teacher_seed, "subject" + std::to_string(s + 1));
  }

  void validate() const {
    if (layers < 1) throw ConfigError("population: layers must be positive");
    if (static_cast<int>(latent_dims.size()) != layers)
      throw ConfigError("population: latent_dims needs one entry per layer");
    for (int d : latent_dims) {
      if (d < 1) throw ConfigError("population: latent dims must be positive");
      if (d > neurons) throw ConfigError("population: latent dims may not exceed the neuron count");
    }
    if (subjects < 1) throw ConfigError("population: subjects must be positive");
    if (stimuli < 4) throw ConfigError("population: need at least 4 stimuli");
    if (!subject_seeds.empty() && static_cast<int>(subject_seeds.size()) != subjects)
      throw ConfigError("population: subject_seeds needs one entry per subject");
    if (!(c > 0.0)) throw ConfigError("population: c must be positive");
    if (trials < 1) throw ConfigError("population: trials must be positive");
    if (!(kappa_max >= 1.0)) throw ConfigError("population: kappa_max must be at least 1");
  }
};

namespace detail {

inline Matrix gaussian(Index rows, Index cols, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline void standardize_columns(Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    const double mu = m.col(j).mean();
    m.col(j).array() -= mu;
    const double sd = std::sqrt(m.col(j).squaredNorm() / static_cast<double>(m.rows()));
    if (sd > 0.0) m.col(j) /= sd;
  }
}

inline double condition_number(const Matrix& a) {
  const Vector sv = Eigen::JacobiSVD<Matrix>(a).singularValues();
  return sv(0) / sv(sv.size() - 1);
}

}  // namespace detail

/// Shared teacher latents, one S x d matrix per layer (columns standardized).
inline std::vector<Matrix> teacher_latents(const PopulationConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.teacher_seed, "teacher"));
  std::vector<Matrix> z;
  z.push_back(detail::gaussian(cfg.stimuli, cfg.latent_dims[0], 1.0, rng));
  detail::standardize_columns(z.back());
  for (int l = 1; l < cfg.layers; ++l) {
    const int d_in = cfg.latent_dims[static_cast<std::size_t>(l - 1)];
    const Matrix w = detail::gaussian(d_in, cfg.latent_dims[static_cast<std::size_t>(l)],
                                      cfg.teacher_gain / std::sqrt(static_cast<double>(d_in)), rng);
    Matrix next = (z.back() * w).unaryExpr([](double v) { return softplus(v); });
    detail::standardize_columns(next);
    z.push_back(std::move(next));
  }
  return z;
}

/// Pre-activation responses z * A + b for one subject and layer, with A
/// resampled until its condition number is at most kappa_max.
inline Matrix subject_pre_activation(const PopulationConfig& cfg, const Matrix& latent, std::uint64_t seed) {
  Rng rng(seed);
  const auto d = latent.cols();
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Matrix a = detail::gaussian(d, cfg.neurons, cfg.mixing_gain / std::sqrt(static_cast<double>(d)), rng);
    if (detail::condition_number(a) > cfg.kappa_max) continue;
    const Vector b = detail::gaussian(cfg.neurons, 1, cfg.bias_sd, rng);
    Matrix pre = latent * a;
    pre.rowwise() += b.transpose();
    return pre;
  }
  throw ConfigError("population: no mixing matrix with condition number <= " + std::to_string(cfg.kappa_max) +
                    " after 100 attempts");
}

inline std::string layer_area(int l) { return "layer" + std::to_string(l + 1); }

inline std::vector<std::string> numbered_ids(const std::string& prefix, Index count) {
  std::vector<std::string> ids;
  for (Index i = 0; i < count; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

struct GeneratedPopulation {
  PopulationDataset dataset;
  // Per post_nl profile (same order as they appear in the dataset), when
  // cfg.keep_trials is set.
  std::vector<TrialTensor> trials;
};

/// Builds pre_nl and post_nl profiles for every subject and layer. post_nl
/// values are trial-averaged Gamma counts on the c scale; c is recorded in the
/// metadata as "softplus_scale".
inline GeneratedPopulation generate_population(const PopulationConfig& cfg) {
  const std::vector<Matrix> z = teacher_latents(cfg);
  GeneratedPopulation out;
  PopulationDataset& ds = out.dataset;
  ds.stimulus_ids = numbered_ids("s", cfg.stimuli);
  json seeds = json::array();
  for (int s = 0; s < cfg.subjects; ++s) seeds.push_back(cfg.subject_seed(s));
  ds.metadata = {{"generator", "iatc layered population"},
                 {"softplus_scale", cfg.c},
                 {"post_nl_units", "trial-averaged counts (c scale)"},
                 {"teacher_seed", cfg.teacher_seed},
                 {"subject_seeds", seeds},
                 {"layers", cfg.layers},
                 {"latent_dims", cfg.latent_dims},
                 {"neurons", cfg.neurons},
                 {"trials", cfg.trials},
                 {"kappa_max", cfg.kappa_max}};
  for (int s = 0; s < cfg.subjects; ++s) {
    const std::string subject = "subject" + std::to_string(s + 1);
    const std::uint64_t seed = cfg.subject_seed(s);
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string area = layer_area(l);
      Matrix pre = subject_pre_activation(cfg, z[static_cast<std::size_t>(l)], derive_seed(seed, "mix/" + area));
      NoisySample noisy = sample_noisy_softplus(pre, cfg.c, cfg.trials, derive_seed(seed, "noise/" + area));
      ResponseProfile p;
      p.subject_id = subject;
      p.area_id = area;
      p.hierarchy_level = l + 1;
      p.matrix.stimulus_ids = ds.stimulus_ids;
      p.matrix.neuron_ids = numbered_ids("n", cfg.neurons);
      p.stage = Stage::pre_nl;
      p.matrix.values = std::move(pre);
      ds.profiles.push_back(p);
      p.stage = Stage::post_nl;
      p.matrix.values = noisy.counts.mean();
      if (cfg.trials >= 2) p.ncsnr = estimate_ncsnr(noisy.counts);
      ds.profiles.push_back(std::move(p));
      if (cfg.keep_trials) out.trials.push_back(std::move(noisy.counts));
    }
  }
  ds.validate();
  return out;
}

/// Noise-free post-activation rates c * softplus(z A + b) of a fresh
/// "subject" drawn from the generator, one profile per layer. This is the
/// ground-truth model of the population.
inline std::vector<ResponseProfile> generator_model(const PopulationConfig& cfg, std::uint64_t seed, int neurons,
                                                    const std::string& name = "model") {
  PopulationConfig mcfg = cfg;
  mcfg.neurons = neurons;
  for (int d : cfg.latent_dims)
    if (d > neurons) throw ConfigError("generator model: fewer neurons than latent dims");
  const std::vector<Matrix> z = teacher_latents(cfg);
  std::vector<ResponseProfile> out;
  for (int l = 0; l < cfg.layers; ++l) {
    ResponseProfile p;
    p.subject_id = name;
    p.area_id = layer_area(l);
    p.hierarchy_level = l + 1;
    p.stage = Stage::post_nl;
    const Matrix pre = subject_pre_activation(mcfg, z[static_cast<std::size_t>(l)], derive_seed(seed, "mix/" + p.area_id));
    p.matrix.values = pre.unaryExpr([&](double v) { return cfg.c * softplus(v); });
    p.matrix.stimulus_ids = numbered_ids("s", cfg.stimuli);
    p.matrix.neuron_ids = numbered_ids("n", neurons);
    out.push_back(std::move(p));
  }
  return out;
}

/// Copy of `profile` with `extra_noise_neurons` appended columns of
/// independent Gaussian noise, scaled to the median column SD of the profile.
inline ResponseProfile spurious_model_variant(const ResponseProfile& profile, int extra_noise_neurons,
                                              std::uint64_t seed) {
  if (extra_noise_neurons < 0) throw ConfigError("spurious variant: extra_noise_neurons must be nonnegative");
  ResponseProfile out = profile;
  if (extra_noise_neurons == 0) return out;
  std::vector<double> sds;
  for (Index j = 0; j < profile.matrix.neurons(); ++j) sds.push_back(stddev(profile.matrix.values.col(j)));
  double sd = median(sds);
  if (!(sd > 0.0)) sd = 1.0;
  Rng rng(seed);
  const Matrix noise = detail::gaussian(profile.matrix.stimuli(), extra_noise_neurons, sd, rng);
  const Index n = profile.matrix.neurons();
  out.matrix.values.conservativeResize(Eigen::NoChange, n + extra_noise_neurons);
  out.matrix.values.rightCols(extra_noise_neurons) = noise;
  for (int k = 0; k < extra_noise_neurons; ++k) out.matrix.neuron_ids.push_back("noise" + std::to_string(k));
  out.subject_id = profile.subject_id + "+noise";
  out.ncsnr.clear();
  return out;
}

}  // namespace iatc::sim
