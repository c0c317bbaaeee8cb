#include <gtest/gtest.h>

#include "iatc/metrics.hpp"
#include "iatc/simulator.hpp"
#include "test_support.hpp"

using namespace iatc;
using namespace iatc::sim;

namespace {

PopulationConfig small_population() {
  PopulationConfig cfg;
  cfg.layers = 3;
  cfg.latent_dims = {10, 10, 10};
  cfg.neurons = 20;
  cfg.subjects = 3;
  cfg.stimuli = 600;
  cfg.trials = 30;
  cfg.teacher_seed = 5;
  return cfg;
}

double pair_score(const PopulationDataset& ds, const std::string& a, const std::string& b, const std::string& area,
                  Stage stage, const MappingMethod& method) {
  const Split split = split_stimuli(ds.stimuli(), {0.8, 3, 5});
  return metrics::predictivity(ds.find(a, area, stage).matrix.values, ds.find(b, area, stage).matrix.values, method,
                               split, 1)
      .median_r2;
}

double residual_of(const std::vector<CandidateFit>& fits, Activation a) {
  for (const auto& f : fits)
    if (f.activation == a) return f.residual;
  return std::nan("");
}

}  // namespace

// ---------------------------------------------------------------------------
// spiking neuron

TEST(Spiking, AtThresholdMeanIsHalfTheBins) {
  SpikingConfig cfg;
  cfg.mu = 0.0;
  cfg.threshold = 0.0;
  cfg.trials = 400;
  cfg.seed = 3;
  EXPECT_DOUBLE_EQ(analytic_mean_count(cfg), 50.0);
  const SpikeCounts c = simulate_spike_counts(cfg);
  const double se = std::sqrt(100 * 0.25 / cfg.trials);
  EXPECT_LT(std::abs(c.mean - 50.0), 3.0 * se);
}

TEST(Spiking, Limits) {
  SpikingConfig cfg;
  cfg.mu = 20.0;
  EXPECT_DOUBLE_EQ(simulate_spike_counts(cfg).mean, 100.0);
  cfg.mu = -20.0;
  EXPECT_DOUBLE_EQ(simulate_spike_counts(cfg).mean, 0.0);
}

TEST(Spiking, AnalyticMatchesEmpiricalAcrossGrid) {
  for (double d = -3.0; d <= 1.0; d += 0.25) {
    SpikingConfig cfg;
    cfg.mu = d;
    cfg.trials = 200;
    cfg.seed = derive_seed(11, std::uint64_t(std::lround((d + 3.0) * 4)));
    const double p = normal_cdf(d);
    const double se = std::sqrt(100.0 * p * (1.0 - p) / cfg.trials);
    EXPECT_LE(std::abs(simulate_spike_counts(cfg).mean - analytic_mean_count(cfg)), std::max(3.0 * se, 1e-12))
        << "mu-T=" << d;
  }
}

TEST(Spiking, Errors) {
  SpikingConfig cfg;
  cfg.sigma = 0.0;
  EXPECT_THROW(simulate_spike_counts(cfg), DomainError);
  cfg.sigma = 1.0;
  cfg.window_ms = 10.5;
  EXPECT_THROW(cfg.bins(), ConfigError);
}

// ---------------------------------------------------------------------------
// activation candidates

TEST(Activation, SoftplusWinsBelowThreshold) {
  std::vector<double> grid, counts;
  for (int k = 0; k <= 40; ++k) {
    SpikingConfig cfg;
    cfg.mu = -3.0 + 4.0 * k / 40.0;
    cfg.trials = 100;
    cfg.seed = derive_seed(21, static_cast<std::uint64_t>(k));
    grid.push_back(cfg.mu);
    counts.push_back(simulate_spike_counts(cfg).mean);
  }
  const auto fits = fit_activation_candidates(grid, counts);
  EXPECT_LT(residual_of(fits, Activation::softplus), residual_of(fits, Activation::relu));
  EXPECT_LT(residual_of(fits, Activation::softplus), residual_of(fits, Activation::exponential));
}

TEST(Activation, ExactSoftplusFitsToZero) {
  std::vector<double> grid, counts;
  for (int k = 0; k < 30; ++k) {
    grid.push_back(-2.0 + 0.1 * k);
    counts.push_back(7.0 * softplus(1.7 * (grid.back() - 0.3)) + 0.5);
  }
  const auto fits = fit_activation_candidates(grid, counts);
  double total = 0.0;
  for (double c : counts) total += c * c;
  EXPECT_LT(residual_of(fits, Activation::softplus), 1e-10 * total);
  const CandidateFit& f = fits[0];
  ASSERT_EQ(f.activation, Activation::softplus);
  EXPECT_NEAR(f(0.0), 7.0 * softplus(-0.51) + 0.5, 1e-5);
}

TEST(Activation, ConstantCountsFitEqually) {
  const std::vector<double> grid = {0, 1, 2, 3, 4, 5}, counts(6, 4.0);
  for (const auto& f : fit_activation_candidates(grid, counts)) {
    EXPECT_LT(f.residual, 1e-20);
    EXPECT_NEAR(f(2.5), 4.0, 1e-9);
  }
}

TEST(Activation, DegenerateGrid) {
  EXPECT_THROW(fit_activation_candidates({1, 2, 3}, {1, 2, 3}), DataError);
  EXPECT_THROW(fit_activation_candidates({1, 1, 1, 1}, {1, 2, 3, 4}), DataError);
  EXPECT_THROW(fit_activation_candidates({1, 2, 3, 4}, {1, 2, 3}), DataError);
}

// ---------------------------------------------------------------------------
// Gamma-as-Poisson sampling

TEST(NoisySoftplus, MomentsOverManyTrials) {
  Matrix pre(2, 3);
  pre << -2.0, -0.5, 0.0, 0.5, 1.0, 2.5;
  const NoisySample s = sample_noisy_softplus(pre, 100.0, 10000, 4);
  const Matrix m = s.counts.mean();
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) {
      const double lambda = s.rates(i, j);
      EXPECT_NEAR(lambda, 100.0 * softplus(pre(i, j)), 1e-12);
      EXPECT_LT(std::abs(m(i, j) - lambda) / lambda, 0.02);
      double var = 0.0;
      for (const auto& t : s.counts.trials) var += (t(i, j) - m(i, j)) * (t(i, j) - m(i, j));
      var /= 9999.0;
      EXPECT_NEAR(var / m(i, j), 1.0, 0.05) << "cell " << i << "," << j;
    }
}

TEST(NoisySoftplus, VeryNegativeInputNearZero) {
  const NoisySample s = sample_noisy_softplus(Matrix::Constant(3, 3, -40.0), 100.0, 100, 5);
  EXPECT_LT(s.counts.mean().maxCoeff(), 1e-10);
  for (const auto& t : s.counts.trials) EXPECT_GE(t.minCoeff(), 0.0);
}

TEST(NoisySoftplus, Errors) {
  EXPECT_THROW(sample_noisy_softplus(Matrix::Zero(2, 2), 0.0, 5, 1), DomainError);
  Matrix bad = Matrix::Zero(2, 2);
  bad(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sample_noisy_softplus(bad, 1.0, 5, 1), DataError);
}

TEST(Ncsnr, NoiselessIsInfinite) {
  TrialTensor t;
  t.trials.assign(3, test::gaussian(20, 2, 6));
  for (double v : estimate_ncsnr(t)) EXPECT_TRUE(std::isinf(v));
}

// ---------------------------------------------------------------------------
// layered population

TEST(Population, BitwiseDeterministic) {
  PopulationConfig cfg = small_population();
  cfg.stimuli = 100;
  const auto a = generate_population(cfg), b = generate_population(cfg);
  ASSERT_EQ(a.dataset.profiles.size(), 18u);
  for (std::size_t i = 0; i < a.dataset.profiles.size(); ++i)
    EXPECT_EQ(a.dataset.profiles[i].matrix.values, b.dataset.profiles[i].matrix.values);
  cfg.teacher_seed = 6;
  EXPECT_NE(generate_population(cfg).dataset.profiles[0].matrix.values, a.dataset.profiles[0].matrix.values);
}

TEST(Population, LayoutAndMetadata) {
  PopulationConfig cfg = small_population();
  cfg.stimuli = 50;
  const auto pop = generate_population(cfg);
  EXPECT_EQ(pop.dataset.metadata.at("softplus_scale").get<double>(), 100.0);
  const ResponseProfile& p = pop.dataset.find("subject2", "layer3", Stage::post_nl);
  EXPECT_EQ(p.hierarchy_level, 3.0);
  EXPECT_EQ(p.ncsnr.size(), 20u);
  EXPECT_GT(p.matrix.values.minCoeff(), 0.0);
}

TEST(Population, ZipperingOrdering) {
  const auto pop = generate_population(small_population());
  const MappingMethod ridge = MappingMethod::make(MethodKind::ridge);
  const MappingMethod exact = MappingMethod::make(MethodKind::exact_zippering);
  for (int l = 0; l < 3; ++l) {
    const std::string area = layer_area(l);
    const double pre = pair_score(pop.dataset, "subject1", "subject2", area, Stage::pre_nl, ridge);
    const double post = pair_score(pop.dataset, "subject1", "subject2", area, Stage::post_nl, ridge);
    const double zip = pair_score(pop.dataset, "subject1", "subject2", area, Stage::post_nl, exact);
    EXPECT_GE(pre, 0.98) << area;
    EXPECT_LT(post, pre) << area;
    EXPECT_GE(zip, 0.95) << area;
    EXPECT_GT(zip, post) << area;
  }
}

TEST(Population, CrossLayerBelowSameLayer) {
  const auto pop = generate_population(small_population());
  const MappingMethod ridge = MappingMethod::make(MethodKind::ridge);
  const Split split = split_stimuli(600, {0.8, 3, 5});
  const auto& ds = pop.dataset;
  for (Stage stage : {Stage::pre_nl, Stage::post_nl}) {
    const double same = metrics::predictivity(ds.find("subject1", "layer2", stage).matrix.values,
                                              ds.find("subject3", "layer2", stage).matrix.values, ridge, split, 1)
                            .median_r2;
    const double cross = metrics::predictivity(ds.find("subject1", "layer1", stage).matrix.values,
                                               ds.find("subject3", "layer3", stage).matrix.values, ridge, split, 1)
                             .median_r2;
    EXPECT_LT(cross, same);
  }
}

TEST(Population, MixingConditionBound) {
  const PopulationConfig cfg = small_population();
  const auto z = teacher_latents(cfg);
  const Matrix pre = subject_pre_activation(cfg, z[0], 77);
  // pre = z A + b with z of full column rank; A is recovered by least squares.
  Matrix z1(z[0].rows(), z[0].cols() + 1);
  z1 << z[0], Vector::Ones(z[0].rows());
  const Matrix coef = z1.colPivHouseholderQr().solve(pre);
  EXPECT_LE(iatc::sim::detail::condition_number(coef.topRows(z[0].cols())), cfg.kappa_max * (1.0 + 1e-9));
}

TEST(Population, ConfigValidation) {
  PopulationConfig cfg = small_population();
  cfg.latent_dims = {10, 30, 10};
  EXPECT_THROW(generate_population(cfg), ConfigError);
  cfg = small_population();
  cfg.latent_dims = {10, 10};
  EXPECT_THROW(generate_population(cfg), ConfigError);
  cfg = small_population();
  cfg.kappa_max = 1.0;
  EXPECT_THROW(generate_population(cfg), ConfigError);
}

// ---------------------------------------------------------------------------
// spurious model variant

TEST(Spurious, ZeroExtraIsIdentical) {
  ResponseProfile p;
  p.matrix.values = test::gaussian(10, 3, 1);
  p.matrix.neuron_ids = {"a", "b", "c"};
  const ResponseProfile q = spurious_model_variant(p, 0, 2);
  EXPECT_EQ(q.matrix.values, p.matrix.values);
  EXPECT_EQ(q.matrix.neuron_ids, p.matrix.neuron_ids);
}

TEST(Spurious, SeparatesOnlyTheBrainToModelDirection) {
  PopulationConfig cfg = small_population();
  cfg.stimuli = 1000;
  const auto pop = generate_population(cfg);
  const ResponseProfile model = generator_model(cfg, 99, 20, "truth")[1];
  const ResponseProfile spurious = spurious_model_variant(model, 50, 3);
  EXPECT_EQ(spurious.matrix.neurons(), 70);
  const Matrix& brain = pop.dataset.find("subject1", "layer2", Stage::post_nl).matrix.values;
  const MappingMethod ridge = MappingMethod::make(MethodKind::ridge);
  const Split split = split_stimuli(1000, {0.8, 8, 5});
  const auto score = [&](const Matrix& a, const Matrix& b) {
    return metrics::predictivity(a, b, ridge, split, 4).median_r2;
  };
  EXPECT_LT(std::abs(score(spurious.matrix.values, brain) - score(model.matrix.values, brain)), 0.02);
  EXPECT_GE(score(brain, model.matrix.values) - score(brain, spurious.matrix.values), 0.1);
}
