// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <optional>
#include <sstream>

#include "iatc/iatc.hpp"

using namespace iatc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix gaussian(Index rows, Index cols, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

// ---------------------------------------------------------------------------
// shared synthetic population (criteria 1, 2, 9)

sim::PopulationConfig acceptance_population() {
  sim::PopulationConfig cfg;
  cfg.layers = 3;
  cfg.latent_dims = {40, 40, 40};
  cfg.neurons = 60;
  cfg.subjects = 4;
  cfg.stimuli = 2000;
  cfg.trials = 50;
  cfg.teacher_seed = 2024;
  return cfg;
}

const sim::GeneratedPopulation& population() {
  static const sim::GeneratedPopulation pop = sim::generate_population(acceptance_population());
  return pop;
}

pipeline::ExperimentConfig eval_config(const std::string& stage, std::vector<MappingMethod> methods, bool spec) {
  pipeline::ExperimentConfig c;
  c.stage = stage;
  c.methods = std::move(methods);
  c.metrics.silhouette = spec;
  c.metrics.hierarchy = spec;
  c.metrics.mds = false;
  c.metrics.ci_resamples = 50;
  c.seed = 17;
  return c;
}

double median_score(const pipeline::EvaluationReport& r, const std::string& method) {
  std::vector<double> v;
  for (const auto& s : r.scores)
    if (s.method == method && s.score) v.push_back(*s.score);
  if (v.empty()) throw DataError("no scores for " + method);
  return median(v);
}

const pipeline::EvaluationReport& post_nl_report() {
  static const pipeline::EvaluationReport r = pipeline::run_population_eval(
      eval_config("post_nl",
                  {MappingMethod::make(MethodKind::ridge), MappingMethod::make(MethodKind::soft_matching),
                   MappingMethod::make(MethodKind::exact_zippering)},
                  true),
      population().dataset);
  return r;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto pre = pipeline::run_population_eval(eval_config("pre_nl", {MappingMethod::make(MethodKind::ridge)}, false),
                                                 population().dataset);
  const double r_pre = median_score(pre, "ridge");
  const double r_post = median_score(post_nl_report(), "ridge");
  const double r_zip = median_score(post_nl_report(), "exact_zippering");
  const bool ok = r_pre >= 0.95 && r_pre - r_post >= 0.05 && r_zip >= r_post + 0.05 && r_zip >= 0.9;
  return {ok, fmt("pre-NL ridge %.4f, post-NL ridge %.4f, post-NL exact zippering %.4f", r_pre, r_post, r_zip)};
}

Outcome criterion2() {
  std::map<std::string, const pipeline::MethodSpecificity*> by;
  for (const auto& s : *post_nl_report().specificity) by[s.method] = &s;
  const auto sil = [&](const char* m) {
    const auto& s = *by.at(m);
    if (!s.silhouette) throw DataError(std::string("no silhouette for ") + m);
    return *s.silhouette;
  };
  const double zip = sil("exact_zippering"), ridge = sil("ridge"), soft = sil("soft_matching");
  const auto& h = by.at("ridge")->hierarchy_correlation;
  const double hier = h ? *h : std::nan("");
  const bool ok = zip - ridge >= 0.02 && ridge - soft >= 0.02 && hier > 0.5;
  return {ok, fmt("silhouette exact zippering %.4f > ridge %.4f > soft matching %.4f; hierarchy(ridge) %.4f", zip,
                  ridge, soft, hier)};
}

double permutation_lp_optimum(const Matrix& c) {
  std::vector<Index> perm(static_cast<std::size_t>(c.rows()));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = -1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += c(static_cast<Index>(i), perm[i]);
    best = std::max(best, s / static_cast<double>(perm.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Outcome criterion3() {
  double worst_gap = 0.0, worst_r2 = 1.0;
  for (Index n = 2; n <= 6; ++n) {
    const Matrix x = gaussian(400, n, 300 + static_cast<std::uint64_t>(n));
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), Rng(derive_seed(3, static_cast<std::uint64_t>(n))));
    Matrix y(x.rows(), n);
    for (Index j = 0; j < n; ++j) y.col(j) = 2.0 * x.col(perm[static_cast<std::size_t>(j)]).array() + 1.0;
    const auto fit = transforms::fit_soft_matching(x, y);
    worst_gap = std::max(worst_gap, std::abs(fit.score - permutation_lp_optimum(fit.transport.correlation)));
    const auto r2 = r2_per_column(y, transforms::predict_soft_matching(fit.transport, x));
    worst_r2 = std::min(worst_r2, *std::min_element(r2.begin(), r2.end()));
  }
  return {worst_gap < 1e-3 && worst_r2 >= 0.99,
          fmt("N=2..6: max |entropic - LP| %.2e, min per-neuron train R2 %.6f", worst_gap, worst_r2)};
}

Outcome criterion4() {
  // exponential link, S = 2000
  const Matrix x = gaussian(2000, 4, 41, 0.5);
  Vector theta(5);
  theta << 0.7, 0.4, -0.3, 0.25, 0.1;
  Rng rng(42);
  Vector y(2000);
  for (Index i = 0; i < 2000; ++i)
    y(i) = std::poisson_distribution<int>(std::exp(theta(0) + x.row(i).dot(theta.tail(4))))(rng);
  const auto exp_link = glm::InverseLink::exponential();
  const auto fit = glm::irls_fit(x, y, exp_link, {0.0, 100, 1e-12});
  const Vector se = glm::standard_errors(fit, x, exp_link);
  double worst_z = 0.0;
  for (Index k = 0; k < 5; ++k) {
    const double est = k == 0 ? fit.intercept : fit.weights(k - 1);
    worst_z = std::max(worst_z, std::abs(est - theta(k)) / se(k));
  }
  const double stat_exp = glm::score_residual(fit, x, y, exp_link).cwiseAbs().maxCoeff();

  // noiseless scaled softplus
  const Matrix xs = gaussian(500, 3, 43);
  Vector ts(4);
  ts << -0.5, 1.2, -0.8, 0.4;
  Vector ys(500);
  for (Index i = 0; i < 500; ++i) ys(i) = 100.0 * softplus(ts(0) + xs.row(i).dot(ts.tail(3)));
  const auto sp_link = glm::InverseLink::softplus(100.0);
  const auto sfit = glm::irls_fit(xs, ys, sp_link, {1e-8, 100, 1e-14});
  double worst_abs = std::abs(sfit.intercept - ts(0));
  for (Index k = 0; k < 3; ++k) worst_abs = std::max(worst_abs, std::abs(sfit.weights(k) - ts(k + 1)));
  const auto rfit = glm::irls_fit(x, y, sp_link, {1e-3, 200, 1e-14});
  const double stat_sp = glm::score_residual(rfit, x, y, sp_link).cwiseAbs().maxCoeff();

  const bool ok = fit.converged && rfit.converged && worst_z < 3.0 && worst_abs < 1e-4 && stat_exp < 1e-6 &&
                  stat_sp < 1e-6;
  return {ok, fmt("max |error|/SE %.3f, noiseless softplus max error %.2e, stationarity %.2e / %.2e", worst_z,
                  worst_abs, stat_exp, stat_sp)};
}

Outcome criterion5() {
  const Matrix z = gaussian(24, 4, 51), t = gaussian(24, 3, 52);
  transforms::MlpNet net = transforms::init_mlp(4, 3, {6, 5}, 53);
  double worst = 0.0;
  for (int point = 0; point < 5; ++point) {
    const Vector theta =
        gaussian(static_cast<Index>(net.parameter_count()), 1, 54 + static_cast<std::uint64_t>(point), 0.7).col(0);
    net.unflatten(theta);
    Vector grad;
    transforms::mlp_loss_gradient(net, z, t, &grad);
    for (Index k = 0; k < theta.size(); ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(theta(k)));
      Vector tp = theta, tm = theta;
      tp(k) += h;
      tm(k) -= h;
      transforms::MlpNet a = net, b = net;
      a.unflatten(tp);
      b.unflatten(tm);
      const double fd =
          (transforms::mlp_loss_gradient(a, z, t, nullptr) - transforms::mlp_loss_gradient(b, z, t, nullptr)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad(k)) / std::max(std::abs(fd) + std::abs(grad(k)), 1e-8));
    }
  }
  return {worst < 1e-5, fmt("5 points, max relative error %.2e", worst)};
}

Outcome criterion6() {
  const MappingMethod ridge = MappingMethod::make(MethodKind::ridge);
  const Matrix pre = gaussian(500, 8, 61) * gaussian(8, 30, 62, 0.5);
  const sim::NoisySample s = sim::sample_noisy_softplus(pre, 3.0, 50, 63);
  const auto truth = noise::corrected_predictivity_bootstrap(s.rates, s.counts, ridge, {}, 64);
  const auto null = noise::corrected_predictivity_bootstrap(gaussian(500, 30, 65), s.counts, ridge, {}, 66);
  const double nc = noise::nc_ceiling({1.0}, 3).front();
  const bool ok = std::abs(truth.corrected - 1.0) <= 0.05 && truth.raw < truth.corrected &&
                  std::abs(null.corrected) <= 0.1 && nc == 0.75;
  return {ok, fmt("ground truth corrected %.4f (raw %.4f), pure noise %.4f, NC(ncsnr=1, n=3) %.17g", truth.corrected,
                  truth.raw, null.corrected, nc)};
}

Outcome criterion7() {
  std::vector<double> grid, counts;
  double worst_z = 0.0;
  for (int k = 0; k <= 40; ++k) {
    sim::SpikingConfig cfg;
    cfg.mu = -3.0 + 4.0 * k / 40.0;
    cfg.trials = 100;
    cfg.seed = derive_seed(71, static_cast<std::uint64_t>(k));
    const double mean = sim::simulate_spike_counts(cfg).mean;
    const double p = normal_cdf((cfg.mu - cfg.threshold) / cfg.sigma);
    const double se = std::sqrt(cfg.bins() * p * (1.0 - p) / cfg.trials);
    const double diff = std::abs(mean - sim::analytic_mean_count(cfg));
    worst_z = std::max(worst_z, se > 0 ? diff / se : (diff > 0 ? 1e300 : 0.0));
    grid.push_back(cfg.mu);
    counts.push_back(mean);
  }
  const auto fits = sim::fit_activation_candidates(grid, counts);
  std::map<sim::Activation, double> res;
  for (const auto& f : fits) res[f.activation] = f.residual;
  const double sp = res.at(sim::Activation::softplus), relu = res.at(sim::Activation::relu),
               ex = res.at(sim::Activation::exponential);
  return {sp < relu && sp < ex && worst_z < 3.0,
          fmt("residuals softplus %.4g, relu %.4g, exponential %.4g; max |empirical - analytic|/SE %.3f", sp, relu, ex,
              worst_z)};
}

Outcome criterion8() {
  Matrix pre(2, 3);
  pre << -2.0, -0.5, 0.0, 0.5, 1.0, 2.5;
  const auto s = sim::sample_noisy_softplus(pre, 100.0, 10000, 81);
  const Matrix m = s.counts.mean();
  double worst = 0.0;
  for (Index i = 0; i < pre.rows(); ++i)
    for (Index j = 0; j < pre.cols(); ++j) {
      double var = 0.0;
      for (const auto& t : s.counts.trials) var += (t(i, j) - m(i, j)) * (t(i, j) - m(i, j));
      var /= static_cast<double>(s.counts.trials.size() - 1);
      worst = std::max(worst, std::abs(var / m(i, j) - 1.0));
    }
  return {worst <= 0.05, fmt("10000 trials, 6 rates, max |var/mean - 1| %.4f", worst)};
}

Outcome criterion9() {
  const auto& pop = population();
  const sim::PopulationConfig cfg = acceptance_population();
  const auto truth = sim::generator_model(cfg, 901, cfg.neurons, "ground_truth");
  std::vector<ResponseProfile> spurious;
  for (std::size_t l = 0; l < truth.size(); ++l)
    spurious.push_back(sim::spurious_model_variant(truth[l], cfg.neurons, derive_seed(902, static_cast<std::uint64_t>(l))));
  const std::vector<pipeline::CandidateModel> models = {{"ground_truth", truth}, {"spurious", spurious}};
  const auto r = pipeline::run_model_comparison(
      eval_config("post_nl", {MappingMethod::make(MethodKind::ridge)}, false), models, pop.dataset,
      pipeline::Correction::none);
  // matched model layer and brain area, averaged over areas
  std::map<std::string, std::map<std::string, std::vector<double>>> v;
  for (const auto& a : r.aggregates)
    if (a.layer == a.area && a.mean) v[a.model][a.direction].push_back(*a.mean);
  const auto m = [&](const char* model, const char* view) { return mean(v.at(model).at(view)); };
  const double b2m = m("ground_truth", "brain_to_model") - m("spurious", "brain_to_model");
  const double m2b = std::abs(m("ground_truth", "model_to_brain") - m("spurious", "model_to_brain"));
  const double avg = m("ground_truth", "average") - m("spurious", "average");
  return {b2m >= 0.1 && m2b < 0.02 && avg >= 0.05,
          fmt("brain->model drop %.4f, model->brain change %.4f, bidirectional separation %.4f", b2m, m2b, avg)};
}

std::string report_bytes(const pipeline::EvaluationReport& r, const fs::path& dir) {
  pipeline::emit_report(r, dir, {"json"});
  std::ifstream in(dir / "report.json", std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion10() {
  sim::PopulationConfig pc = acceptance_population();
  pc.neurons = 20;
  pc.latent_dims = {12, 12, 12};
  pc.subjects = 3;
  pc.stimuli = 300;
  pc.trials = 10;
  const auto pop = sim::generate_population(pc);
  auto cfg = eval_config("auto",
                         {MappingMethod::make(MethodKind::ridge), MappingMethod::make(MethodKind::soft_matching),
                          MappingMethod::make(MethodKind::exact_zippering)},
                         true);
  cfg.metrics.mds = true;
  const fs::path root = fs::temp_directory_path() / "iatc_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::string> bytes;
  for (int jobs : {1, 1, 8}) {
    cfg.jobs = jobs;
    bytes.push_back(report_bytes(pipeline::run_population_eval(cfg, pop.dataset), root / std::to_string(bytes.size())));
  }
  fs::remove_all(root);
  const bool ok = bytes[0] == bytes[1] && bytes[0] == bytes[2] && !bytes[0].empty();
  return {ok, fmt("report.json %zu bytes; two --jobs 1 runs %s; --jobs 1 vs --jobs 8 %s", bytes[0].size(),
                  bytes[0] == bytes[1] ? "identical" : "differ", bytes[0] == bytes[2] ? "identical" : "differ")};
}

Outcome criterion11() {
  double worst_rt = 0.0;
  for (double y : logspace(1e-10, 700.0, 20000))
    worst_rt = std::max(worst_rt, std::abs(softplus(stable_softplus_inverse(y)) - y) / y);
  Rng rng(1101);
  std::uniform_real_distribution<double> lam(-5.0, 5.0), val(-50.0, 50.0), near(-1e-3, 1e-3);
  int mono_fail = 0;
  double worst_cont = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double l = lam(rng);
    double a = val(rng), b = val(rng);
    if (a > b) std::swap(a, b);
    if (a < b && !(yeo_johnson(a, l) < yeo_johnson(b, l))) ++mono_fail;
    // continuity across x = 0 and across the lambda = 0 / lambda = 2 branch switches
    const double l0 = (k % 2 ? 0.0 : 2.0) + near(rng) * 1e-6;
    const double x = val(rng) / 10.0;
    worst_cont = std::max(worst_cont, std::abs(yeo_johnson(1e-9, l) - yeo_johnson(-1e-9, l)));
    worst_cont = std::max(worst_cont, std::abs(yeo_johnson(x, l0) - yeo_johnson(x, std::round(l0))));
  }
  const bool ok = worst_rt < 1e-10 && mono_fail == 0 && worst_cont < 1e-6;
  return {ok, fmt("softplus inverse max relative round-trip error %.2e; Yeo-Johnson 10^4 cases: %d monotonicity "
                  "failures, max branch jump %.2e",
                  worst_rt, mono_fail, worst_cont)};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},   {5, criterion5},   {6, criterion6},
      {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}, {11, criterion11}};
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
