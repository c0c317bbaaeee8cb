#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "iatc/core.hpp"
#include "iatc/dataset.hpp"
#include "iatc/noise_correction.hpp"
#include "iatc/rng.hpp"
#include "iatc/simulator.hpp"
#include "iatc/transforms.hpp"

namespace iatc::pipeline {

enum class Correction { none, bootstrap, nc };

inline std::string to_string(Correction c) {
  switch (c) {
    case Correction::none: return "none";
    case Correction::bootstrap: return "bootstrap";
    case Correction::nc: return "nc";
  }
  return "?";
}

inline Correction correction_from_string(const std::string& s) {
  if (s == "none") return Correction::none;
  if (s == "bootstrap") return Correction::bootstrap;
  if (s == "nc" || s == "nc_ceiling") return Correction::nc;
  throw ConfigError("unknown correction '" + s + "' (expected none, bootstrap or nc)");
}

struct MetricToggles {
  bool silhouette = true;
  bool hierarchy = true;
  bool mds = true;
  int ci_resamples = 1000;
};

struct ModelSource {
  std::string name;
  fs::path dataset;
};

struct ExperimentConfig {
  fs::path dataset;
  fs::path out = "iatc-out";
  std::vector<MappingMethod> methods = {MappingMethod::make(MethodKind::ridge)};
  std::vector<bool> scale_explicit;  // per method: exact-zippering scale set in the config
  std::vector<std::string> areas;  // empty: every area in the dataset
  std::string stage = "auto";      // pre_nl, post_nl, unspecified, or auto
  SplitSpec split;
  bool split_seed_set = false;
  MetricToggles metrics;
  Correction correction = Correction::none;
  noise::BootstrapOptions bootstrap;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool pool_sources = false;
  double failure_threshold = 0.0;  // tolerated fraction of failed cells
  std::vector<ModelSource> models;

  void set_fast() { bootstrap = noise::BootstrapOptions::fast(); }

  SplitSpec effective_split() const {
    SplitSpec s = split;
    if (!split_seed_set) s.seed = derive_seed(seed, "split");
    return s;
  }

  /// Canonical JSON, excluding settings that must not change results (jobs,
  /// output location).
  json canonical() const {
    json methods_json = json::array();
    for (const auto& m : methods) methods_json.push_back(m.to_json());
    json models_json = json::array();
    for (const auto& m : models) models_json.push_back({{"name", m.name}, {"dataset", m.dataset.generic_string()}});
    const SplitSpec s = effective_split();
    return {{"dataset", dataset.generic_string()},
            {"methods", methods_json},
            {"areas", areas},
            {"stage", stage},
            {"split", {{"train_fraction", s.train_fraction}, {"seed", s.seed}, {"folds", s.fold_count}}},
            {"metrics",
             {{"silhouette", metrics.silhouette},
              {"hierarchy", metrics.hierarchy},
              {"mds", metrics.mds},
              {"ci_resamples", metrics.ci_resamples}}},
            {"correction", to_string(correction)},
            {"noise", {{"n_boot", bootstrap.n_boot}, {"n_splits", bootstrap.n_splits}}},
            {"seed", seed},
            {"pool_sources", pool_sources},
            {"failure_threshold", failure_threshold},
            {"models", models_json}};
  }

  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(stable_hash(canonical().dump())));
    return buf;
  }
};

// ---------------------------------------------------------------------------
// Parsing

inline json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json j = json::object();
    for (const auto& [key, value] : *t) j[std::string(key.str())] = toml_to_json(value);
    return j;
  }
  if (const auto* a = node.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  std::ostringstream out;
  node.visit([&](const auto& v) { out << v; });
  return out.str();
}

/// Reads a TOML document, or JSON when the extension is .json.
inline json read_config_document(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  if (path.extension() == ".json") {
    std::ifstream in(path);
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  try {
    return toml_to_json(toml::parse_file(path.string()));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ConfigError(msg.str());
  }
}

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a table");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline MappingMethod parse_method(const json& j) {
  if (j.is_string()) return MappingMethod::from_json(j);
  check_keys(j, "method", {"kind", "hyperparameters"});
  return MappingMethod::from_json(j);
}

}  // namespace detail

/// Builds an ExperimentConfig from a parsed document. Relative paths are
/// resolved against `base`.
inline ExperimentConfig config_from_json(const json& j, const fs::path& base = {}) {
  ExperimentConfig c;
  detail::check_keys(j, "config",
                     {"dataset", "out", "methods", "areas", "stage", "split", "metrics", "correction", "noise", "jobs",
                      "seed", "pool_sources", "failure_threshold", "models", "population"});
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() || base.empty() ? fs::path(p) : base / p; };
  try {
    if (j.contains("dataset")) c.dataset = resolve(j.at("dataset").get<std::string>());
    if (j.contains("out")) c.out = resolve(j.at("out").get<std::string>());
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) {
        c.methods.push_back(detail::parse_method(m));
        c.scale_explicit.push_back(m.is_object() && m.contains("hyperparameters") &&
                                   m.at("hyperparameters").contains("scale"));
      }
      if (c.methods.empty()) throw ConfigError("config: methods list is empty");
    }
    if (j.contains("areas")) c.areas = j.at("areas").get<std::vector<std::string>>();
    if (j.contains("stage")) {
      c.stage = j.at("stage").get<std::string>();
      if (c.stage != "auto" && c.stage != "pre_nl" && c.stage != "post_nl" && c.stage != "unspecified")
        throw ConfigError("unknown stage '" + c.stage + "'");
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      detail::check_keys(s, "split", {"train_fraction", "seed", "folds"});
      c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
      if (s.contains("seed")) {
        c.split.seed = s.at("seed").get<std::uint64_t>();
        c.split_seed_set = true;
      }
      c.split.fold_count = s.value("folds", c.split.fold_count);
      if (!(c.split.train_fraction > 0.0 && c.split.train_fraction < 1.0))
        throw ConfigError("split.train_fraction must lie in (0, 1)");
    }
    if (j.contains("metrics")) {
      const json& m = j.at("metrics");
      detail::check_keys(m, "metrics", {"silhouette", "hierarchy", "mds", "ci_resamples"});
      c.metrics.silhouette = m.value("silhouette", c.metrics.silhouette);
      c.metrics.hierarchy = m.value("hierarchy", c.metrics.hierarchy);
      c.metrics.mds = m.value("mds", c.metrics.mds);
      c.metrics.ci_resamples = m.value("ci_resamples", c.metrics.ci_resamples);
      if (c.metrics.ci_resamples < 1) throw ConfigError("metrics.ci_resamples must be positive");
    }
    if (j.contains("correction")) c.correction = correction_from_string(j.at("correction").get<std::string>());
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      detail::check_keys(n, "noise", {"n_boot", "n_splits", "fast"});
      if (n.value("fast", false)) c.set_fast();
      c.bootstrap.n_boot = n.value("n_boot", c.bootstrap.n_boot);
      c.bootstrap.n_splits = n.value("n_splits", c.bootstrap.n_splits);
      if (c.bootstrap.n_boot < 1 || c.bootstrap.n_splits < 1)
        throw ConfigError("noise.n_boot and noise.n_splits must be positive");
    }
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
    if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.pool_sources = j.value("pool_sources", false);
    c.failure_threshold = j.value("failure_threshold", 0.0);
    if (!(c.failure_threshold >= 0.0 && c.failure_threshold <= 1.0))
      throw ConfigError("failure_threshold must lie in [0, 1]");
    if (j.contains("models"))
      for (const auto& m : j.at("models")) {
        detail::check_keys(m, "models entry", {"name", "dataset"});
        c.models.push_back({m.at("name").get<std::string>(), resolve(m.at("dataset").get<std::string>())});
      }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  return config_from_json(read_config_document(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Simulation config

/// Population generator settings plus optional model variants written next to
/// the dataset by `iatc simulate`.
struct SimulationConfig {
  sim::PopulationConfig population;
  bool write_trials = false;
  int ground_truth_neurons = 0;    // 0: no model datasets
  int spurious_noise_neurons = 0;  // extra noise columns of the spurious variant
  std::uint64_t model_seed = 7;
};

inline SimulationConfig simulation_from_json(const json& root) {
  const json j = root.contains("population") ? root.at("population") : root;
  SimulationConfig s;
  auto& p = s.population;
  detail::check_keys(j, "population",
                     {"layers", "latent_dims", "neurons", "subjects", "stimuli", "teacher_seed", "subject_seeds", "c",
                      "trials", "kappa_max", "mixing_gain", "bias_sd", "teacher_gain", "write_trials",
                      "ground_truth_neurons", "spurious_noise_neurons", "model_seed"});
  try {
    p.layers = j.value("layers", p.layers);
    if (j.contains("latent_dims")) {
      const json& d = j.at("latent_dims");
      p.latent_dims = d.is_array() ? d.get<std::vector<int>>() : std::vector<int>(static_cast<std::size_t>(p.layers), d.get<int>());
    } else {
      p.latent_dims.assign(static_cast<std::size_t>(std::max(p.layers, 0)), 40);
    }
    p.neurons = j.value("neurons", p.neurons);
    p.subjects = j.value("subjects", p.subjects);
    p.stimuli = j.value("stimuli", p.stimuli);
    p.teacher_seed = j.value("teacher_seed", p.teacher_seed);
    if (j.contains("subject_seeds")) p.subject_seeds = j.at("subject_seeds").get<std::vector<std::uint64_t>>();
    p.c = j.value("c", p.c);
    p.trials = j.value("trials", p.trials);
    p.kappa_max = j.value("kappa_max", p.kappa_max);
    p.mixing_gain = j.value("mixing_gain", p.mixing_gain);
    p.bias_sd = j.value("bias_sd", p.bias_sd);
    p.teacher_gain = j.value("teacher_gain", p.teacher_gain);
    s.write_trials = j.value("write_trials", false);
    s.ground_truth_neurons = j.value("ground_truth_neurons", 0);
    s.spurious_noise_neurons = j.value("spurious_noise_neurons", 0);
    s.model_seed = j.value("model_seed", s.model_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("population: ") + e.what());
  }
  p.keep_trials = s.write_trials;
  p.validate();
  return s;
}

}  // namespace iatc::pipeline
