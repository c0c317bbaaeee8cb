// iatc: command-line front end for the toolkit.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iatc/iatc.hpp"

namespace {

using namespace iatc;
using pipeline::ExperimentConfig;

enum Exit { ok = 0, config_error = 1, data_error = 2, partial_failure = 3 };

struct CommonFlags {
  std::string config, dataset, out;
  std::vector<std::string> methods;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string correction;
  bool fast = false;
  bool pool_sources = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "TOML or JSON experiment config");
  app->add_option("--dataset", f.dataset, "dataset directory (overrides the config)");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--methods", f.methods, "comma-separated method kinds")->delimiter(',');
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--jobs", f.jobs, "worker threads");
  app->add_option("--correction", f.correction, "trial-noise correction")
      ->check(CLI::IsMember({"none", "bootstrap", "nc"}));
  app->add_flag("--fast", f.fast, "reduced split-half preset (16 bootstrap samples, 1 split)");
  app->add_flag("--pool-sources", f.pool_sources, "concatenate all other subjects as the source");
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : pipeline::load_config(f.config);
  if (!f.dataset.empty()) cfg.dataset = f.dataset;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.methods.empty()) {
    cfg.methods.clear();
    cfg.scale_explicit.clear();
    for (const auto& m : f.methods) {
      cfg.methods.push_back(MappingMethod::from_json(m));
      cfg.scale_explicit.push_back(false);
    }
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.jobs) {
    if (*f.jobs < 1) throw ConfigError("--jobs must be at least 1");
    cfg.jobs = *f.jobs;
  }
  if (!f.correction.empty()) cfg.correction = pipeline::correction_from_string(f.correction);
  if (f.fast) cfg.set_fast();
  if (f.pool_sources) cfg.pool_sources = true;
  if (cfg.dataset.empty()) throw ConfigError("no dataset given (--dataset or config 'dataset')");
  return cfg;
}

void print_summary(const pipeline::EvaluationReport& r) {
  for (const auto& a : r.aggregates) {
    if (!a.mean) continue;
    std::printf("%-14s %-18s %-16s%s%s mean %.4f  [%.4f, %.4f]  n=%d\n", a.area.c_str(), a.method.c_str(),
                a.direction.c_str(), a.model.empty() ? "" : (" " + a.model).c_str(),
                a.layer.empty() ? "" : (":" + a.layer).c_str(), *a.mean, *a.ci_low, *a.ci_high, a.pairs);
  }
  if (r.specificity)
    for (const auto& s : *r.specificity) {
      std::printf("%-18s silhouette %s  hierarchy %s\n", s.method.c_str(),
                  s.silhouette ? std::to_string(*s.silhouette).c_str() : "n/a",
                  s.hierarchy_correlation ? std::to_string(*s.hierarchy_correlation).c_str() : "n/a");
      for (const auto& note : s.notes) std::printf("  note: %s\n", note.c_str());
    }
  for (const auto& s : r.separation)
    if (s.value) std::printf("separation %-10s %-18s %-15s %.4f\n", s.area.c_str(), s.method.c_str(), s.view.c_str(), *s.value);
  std::printf("failed cells: %s of %s\n", r.provenance.value("failed_cells", json(0)).dump().c_str(),
              r.provenance.value("cells", json(0)).dump().c_str());
}

int finish(const pipeline::EvaluationReport& r, const ExperimentConfig& cfg) {
  pipeline::emit_report(r, cfg.out);
  print_summary(r);
  std::printf("wrote %s\n", (cfg.out / "report.json").string().c_str());
  if (pipeline::failures_exceed(r, cfg.failure_threshold)) {
    std::fprintf(stderr, "failed-cell fraction %.3f exceeds threshold %.3f\n",
                 r.provenance.value("failure_fraction", 0.0), cfg.failure_threshold);
    return partial_failure;
  }
  return ok;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
  pipeline::SimulationConfig sc;
  if (!config.empty()) sc = pipeline::simulation_from_json(pipeline::read_config_document(config));
  if (seed) {
    sc.population.teacher_seed = *seed;
    sc.population.subject_seeds.clear();
  }
  if (out.empty()) throw ConfigError("simulate needs --out");
  const fs::path dir(out);
  auto generated = sim::generate_population(sc.population);
  PopulationDataset& ds = generated.dataset;
  if (sc.write_trials) {
    fs::create_directories(dir / "trials");
    std::size_t t = 0;
    for (auto& p : ds.profiles) {
      if (p.stage != Stage::post_nl) continue;
      const TrialTensor& trials = generated.trials.at(t++);
      for (Index k = 0; k < trials.trial_count(); ++k) {
        const std::string file = "trials/" + p.subject_id + "__" + p.area_id + "__t" + std::to_string(k) + ".csv";
        write_csv(dir / file, p.matrix.neuron_ids, trials.trials[static_cast<std::size_t>(k)]);
        p.trial_files.push_back(file);
      }
    }
  }
  save_dataset(ds, dir);
  std::printf("wrote %zu profiles (%d subjects x %d layers x 2 stages, %d stimuli) to %s\n", ds.profiles.size(),
              sc.population.subjects, sc.population.layers, sc.population.stimuli, dir.string().c_str());
  if (sc.ground_truth_neurons > 0) {
    PopulationDataset model;
    model.stimulus_ids = ds.stimulus_ids;
    model.profiles = sim::generator_model(sc.population, sc.model_seed, sc.ground_truth_neurons, "ground_truth");
    model.metadata = {{"softplus_scale", sc.population.c}, {"model_seed", sc.model_seed}};
    save_dataset(model, dir / "models" / "ground_truth");
    std::printf("wrote ground-truth model to %s\n", (dir / "models" / "ground_truth").string().c_str());
    if (sc.spurious_noise_neurons > 0) {
      PopulationDataset spurious = model;
      for (std::size_t l = 0; l < spurious.profiles.size(); ++l) {
        spurious.profiles[l] = sim::spurious_model_variant(model.profiles[l], sc.spurious_noise_neurons,
                                                           derive_seed(sc.model_seed, "spurious/" + std::to_string(l)));
        spurious.profiles[l].subject_id = "spurious";
      }
      save_dataset(spurious, dir / "models" / "spurious");
      std::printf("wrote spurious-feature model to %s\n", (dir / "models" / "spurious").string().c_str());
    }
  }
  return ok;
}

const ResponseProfile& find_profile(const PopulationDataset& ds, const std::string& spec) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : spec) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() < 2 || parts.size() > 3) throw ConfigError("profile must be subject:area[:stage], got '" + spec + "'");
  if (parts.size() == 3) return ds.find(parts[0], parts[1], stage_from_string(parts[2]));
  const ResponseProfile* hit = nullptr;
  for (const auto& p : ds.profiles)
    if (p.subject_id == parts[0] && p.area_id == parts[1]) {
      if (hit) throw ConfigError("profile '" + spec + "' is ambiguous; add the stage");
      hit = &p;
    }
  if (!hit) throw DataError("no profile " + spec);
  return *hit;
}

int cmd_map(const CommonFlags& f, const std::string& source, const std::string& target, const std::string& dump) {
  ExperimentConfig cfg = build_config(f);
  const PopulationDataset ds = load_dataset(cfg.dataset);
  const ResponseProfile& src = find_profile(ds, source);
  const ResponseProfile& tgt = find_profile(ds, target);
  const auto methods = pipeline::resolve_methods(cfg, ds);
  const MappingMethod& method = methods.front();
  const Split split = split_stimuli(ds.stimuli(), cfg.effective_split());
  const pipeline::ScoringContext ctx{split, cfg.bootstrap, cfg.metrics.ci_resamples};
  const std::uint64_t seed = derive_seed(cfg.seed, method.name() + "|" + src.label() + "->" + tgt.label());
  const auto s = pipeline::score_direction(src.matrix.values, tgt, &ds, method, ctx, cfg.correction, seed);
  if (!s.error.empty()) throw DataError(s.error);
  std::printf("%s -> %s  method %s  correction %s\n", src.label().c_str(), tgt.label().c_str(), method.name().c_str(),
              pipeline::to_string(cfg.correction).c_str());
  std::printf("score %.6f  ci [%.6f, %.6f]\n", *s.score, *s.ci_low, *s.ci_high);
  if (!dump.empty()) {
    const FittedMap map = fit(method, take_rows(src.matrix.values, split.train), take_rows(tgt.matrix.values, split.train), seed);
    std::ofstream out(dump);
    if (!out) throw DataError("cannot write " + dump);
    out << to_json(map).dump(2) << '\n';
    std::printf("wrote fitted map to %s\n", dump.c_str());
  }
  return ok;
}

int cmd_evaluate(const CommonFlags& f) {
  const ExperimentConfig cfg = build_config(f);
  const PopulationDataset ds = load_dataset(cfg.dataset);
  return finish(pipeline::run_population_eval(cfg, ds), cfg);
}

int cmd_compare(const CommonFlags& f, const std::vector<std::string>& model_flags) {
  ExperimentConfig cfg = build_config(f);
  for (const auto& m : model_flags) {
    const auto eq = m.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--model expects NAME=PATH, got '" + m + "'");
    cfg.models.push_back({m.substr(0, eq), m.substr(eq + 1)});
  }
  if (cfg.models.empty()) throw ConfigError("compare-models needs at least one model (--model or config 'models')");
  const PopulationDataset population = load_dataset(cfg.dataset);
  std::vector<pipeline::CandidateModel> models;
  for (const auto& src : cfg.models) models.push_back(pipeline::load_candidate_model(src));
  return finish(pipeline::run_model_comparison(cfg, models, population, cfg.correction), cfg);
}

int cmd_spiking(const std::string& out, std::uint64_t seed, int trials, double sigma, double threshold, int points) {
  if (points < 4) throw ConfigError("--points must be at least 4");
  std::vector<double> grid, means;
  std::printf("%10s %12s %12s %10s\n", "mu-T", "empirical", "analytic", "binom_se");
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < points; ++i) {
    sim::SpikingConfig cfg;
    cfg.sigma = sigma;
    cfg.threshold = threshold;
    cfg.mu = threshold + sigma * (-3.0 + 4.0 * i / (points - 1));
    cfg.trials = trials;
    cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const auto counts = sim::simulate_spike_counts(cfg);
    const double analytic = sim::analytic_mean_count(cfg);
    const double p = analytic / cfg.bins();
    const double se = std::sqrt(cfg.bins() * p * (1 - p) / trials);
    std::printf("%10.4f %12.4f %12.4f %10.4f\n", cfg.mu - threshold, counts.mean, analytic, se);
    grid.push_back(cfg.mu);
    means.push_back(counts.mean);
    rows.push_back({cfg.mu, counts.mean, analytic, se});
  }
  const auto fits = sim::fit_activation_candidates(grid, means);
  for (const auto& c : fits)
    std::printf("%-12s residual %.6g  (amplitude %.4g, gain %.4g, shift %.4g, offset %.4g)\n",
                sim::to_string(c.activation).c_str(), c.residual, c.amplitude, c.gain, c.shift, c.offset);
  if (!out.empty()) {
    const fs::path dir(out);
    fs::create_directories(dir);
    Matrix table(static_cast<Index>(rows.size()), 4);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < 4; ++j) table(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    write_csv(dir / "spike_counts.csv", {"mu", "empirical_mean", "analytic_mean", "binomial_se"}, table);
    std::ofstream f(dir / "activation_fits.csv");
    f << "activation,residual,amplitude,gain,shift,offset\n";
    for (const auto& c : fits)
      f << sim::to_string(c.activation) << ',' << format_double(c.residual) << ',' << format_double(c.amplitude) << ','
        << format_double(c.gain) << ',' << format_double(c.shift) << ',' << format_double(c.offset) << '\n';
    std::printf("wrote %s\n", dir.string().c_str());
  }
  return ok;
}

int cmd_report(const std::string& input, const std::string& out) {
  const auto report = pipeline::load_report(input);
  const fs::path dir = out.empty() ? fs::path(input).parent_path() : fs::path(out);
  pipeline::emit_report(report, dir, {"csv"});
  print_summary(report);
  std::printf("wrote CSVs to %s\n", dir.string().c_str());
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inter-animal transform toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolkitVersion);

  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic layered population dataset");
  simulate->add_option("--config", sim_config, "TOML or JSON population config");
  simulate->add_option("--out", sim_out, "dataset directory to write")->required();
  simulate->add_option("--seed", sim_seed, "teacher seed (subject seeds are derived from it)");

  CommonFlags map_flags;
  std::string map_source, map_target, map_dump;
  auto* map = app.add_subcommand("map", "fit one mapping between two profiles and print its score");
  add_common(map, map_flags);
  map->add_option("--source", map_source, "subject:area[:stage]")->required();
  map->add_option("--target", map_target, "subject:area[:stage]")->required();
  map->add_option("--dump", map_dump, "write the fitted map as JSON");

  CommonFlags eval_flags;
  auto* evaluate = app.add_subcommand("evaluate", "cross-subject evaluation of a population");
  add_common(evaluate, eval_flags);

  CommonFlags cmp_flags;
  std::vector<std::string> cmp_models;
  auto* compare = app.add_subcommand("compare-models", "bidirectional model-vs-population comparison");
  add_common(compare, cmp_flags);
  compare->add_option("--model", cmp_models, "NAME=DATASET_DIR, repeatable");

  std::string spk_out;
  std::uint64_t spk_seed = 0;
  int spk_trials = 100, spk_points = 41;
  double spk_sigma = 1.0, spk_threshold = 0.0;
  auto* spiking = app.add_subcommand("spiking-demo", "noisy spiking neuron and activation-function fits");
  spiking->add_option("--out", spk_out, "directory for CSV output");
  spiking->add_option("--seed", spk_seed, "seed");
  spiking->add_option("--trials", spk_trials, "trials per input level");
  spiking->add_option("--sigma", spk_sigma, "input noise SD");
  spiking->add_option("--threshold", spk_threshold, "firing threshold");
  spiking->add_option("--points", spk_points, "mu grid size over [T - 3 sigma, T + sigma]");

  std::string rep_input, rep_out;
  auto* report = app.add_subcommand("report", "re-render CSV files from a report.json");
  report->add_option("input", rep_input, "report.json")->required();
  report->add_option("--out", rep_out, "output directory (defaults to the report's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*simulate) return cmd_simulate(sim_config, sim_out, sim_seed);
    if (*map) return cmd_map(map_flags, map_source, map_target, map_dump);
    if (*evaluate) return cmd_evaluate(eval_flags);
    if (*compare) return cmd_compare(cmp_flags, cmp_models);
    if (*spiking) return cmd_spiking(spk_out, spk_seed, spk_trials, spk_sigma, spk_threshold, spk_points);
    if (*report) return cmd_report(rep_input, rep_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return config_error;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return data_error;
  }
  return ok;
}
