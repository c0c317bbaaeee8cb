#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "iatc/core.hpp"
#include "iatc/dataset.hpp"
#include "iatc/metrics.hpp"
#include "iatc/noise_correction.hpp"
#include "iatc/numeric.hpp"
#include "iatc/pipeline/config.hpp"
#include "iatc/pipeline/parallel.hpp"
#include "iatc/pipeline/report.hpp"
#include "iatc/rng.hpp"
#include "iatc/transforms.hpp"

namespace iatc::pipeline {

namespace detail {

/// Linear-interpolation quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// 95% percentile interval of `samples`, widened if needed so it contains
/// `point`.
inline std::pair<double, double> percentile_ci(std::vector<double> samples, double point) {
  samples.erase(std::remove_if(samples.begin(), samples.end(), [](double v) { return !std::isfinite(v); }),
                samples.end());
  if (samples.empty()) return {point, point};
  std::sort(samples.begin(), samples.end());
  return {std::min(quantile_sorted(samples, 0.025), point), std::max(quantile_sorted(samples, 0.975), point)};
}

/// Mean of `values` and a bootstrap CI over them (resampling with replacement).
inline AggregateRow aggregate(const std::vector<double>& values, int resamples, std::uint64_t seed) {
  AggregateRow a;
  a.pairs = static_cast<int>(values.size());
  if (values.empty()) return a;
  a.mean = mean(values);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) s += values[pick(rng)];
    means.push_back(s / static_cast<double>(values.size()));
  }
  const auto [lo, hi] = percentile_ci(std::move(means), *a.mean);
  a.ci_low = lo;
  a.ci_high = hi;
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Selection

/// Exact-zippering methods without an explicit scale take the dataset's
/// "softplus_scale" metadata when present.
inline std::vector<MappingMethod> resolve_methods(const ExperimentConfig& cfg, const PopulationDataset& ds) {
  std::vector<MappingMethod> out = cfg.methods;
  if (!ds.metadata.contains("softplus_scale")) return out;
  const double c = ds.metadata.at("softplus_scale").get<double>();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool explicit_scale = i < cfg.scale_explicit.size() && cfg.scale_explicit[i];
    if (out[i].kind == MethodKind::exact_zippering && !explicit_scale) out[i].exact.scale = c;
  }
  return out;
}

/// "auto" picks post_nl when present, then unspecified, then pre_nl.
inline Stage resolve_stage(const ExperimentConfig& cfg, const PopulationDataset& ds) {
  if (cfg.stage != "auto") return stage_from_string(cfg.stage);
  for (Stage s : {Stage::post_nl, Stage::unspecified, Stage::pre_nl})
    for (const auto& p : ds.profiles)
      if (p.stage == s) return s;
  throw DataError("dataset has no profiles");
}

inline std::vector<const ResponseProfile*> select_profiles(const ExperimentConfig& cfg, const PopulationDataset& ds,
                                                          Stage stage) {
  std::set<std::string> known;
  for (const auto& p : ds.profiles) known.insert(p.area_id);
  for (const auto& a : cfg.areas)
    if (!known.count(a)) throw ConfigError("area '" + a + "' does not exist in the dataset");
  std::vector<const ResponseProfile*> out;
  for (const auto& p : ds.profiles) {
    if (p.stage != stage) continue;
    if (!cfg.areas.empty() && std::find(cfg.areas.begin(), cfg.areas.end(), p.area_id) == cfg.areas.end()) continue;
    out.push_back(&p);
  }
  if (out.empty()) throw DataError("no profiles with stage " + to_string(stage) + " in the selected areas");
  return out;
}

inline std::vector<std::string> area_order(const std::vector<const ResponseProfile*>& profiles) {
  std::vector<std::string> areas;
  for (const auto* p : profiles)
    if (std::find(areas.begin(), areas.end(), p->area_id) == areas.end()) areas.push_back(p->area_id);
  return areas;
}

// ---------------------------------------------------------------------------
// Scoring one direction

struct ScoringContext {
  Split split;
  noise::BootstrapOptions bootstrap;
  int ci_resamples = 1000;
};

struct DirectionScore {
  OptDouble score, ci_low, ci_high;
  long excluded = 0, above_one = 0;
  std::string error;
};

inline int trial_count_of(const PopulationDataset& ds, const ResponseProfile& p) {
  if (!p.trial_files.empty()) return static_cast<int>(p.trial_files.size());
  if (ds.metadata.contains("trials")) return ds.metadata.at("trials").get<int>();
  throw DataError("nc correction: trial count unknown for " + p.label() + " (no trial files, no metadata.trials)");
}

/// Median held-out R^2 of `target` predicted from `source`, optionally noise
/// corrected on the target side. CIs come from resampling test stimuli (or
/// from the bootstrap samples for split-half correction). Errors are
/// recorded, never thrown.
inline DirectionScore score_direction(const Matrix& source, const ResponseProfile& target,
                                      const PopulationDataset* target_ds, const MappingMethod& method,
                                      const ScoringContext& ctx, Correction correction, std::uint64_t seed) {
  DirectionScore d;
  try {
    const Matrix& y = target.matrix.values;
    if (source.rows() != y.rows()) throw DataError("stimulus mismatch between " + target.label() + " and its source");
    if (correction == Correction::bootstrap) {
      if (!target_ds) throw DataError("split-half correction needs the target dataset");
      const TrialTensor trials = load_trials(*target_ds, target);
      const noise::CorrectedScore c = noise::corrected_predictivity_bootstrap(source, trials, method, ctx.bootstrap, seed);
      d.score = c.corrected;
      const auto [lo, hi] = detail::percentile_ci(c.sample_scores, c.corrected);
      d.ci_low = lo;
      d.ci_high = hi;
      d.excluded = c.excluded;
      d.above_one = c.above_one;
      return d;
    }
    const FittedMap map = fit(method, take_rows(source, ctx.split.train), take_rows(y, ctx.split.train), seed);
    const Matrix truth = take_rows(y, ctx.split.test);
    const Matrix pred = predict(map, take_rows(source, ctx.split.test));
    std::vector<double> ceiling;
    if (correction == Correction::nc) {
      if (target.ncsnr.empty()) throw DataError("nc correction: profile " + target.label() + " has no ncsnr");
      if (!target_ds) throw DataError("nc correction needs the target dataset");
      ceiling = noise::nc_ceiling(target.ncsnr, trial_count_of(*target_ds, target));
    }
    long excluded = 0, above_one = 0;
    const auto score_of = [&](const Matrix& t, const Matrix& p) {
      const std::vector<double> r2 = r2_per_column(t, p);
      if (ceiling.empty()) return median(r2);
      const noise::NcCorrected c = noise::nc_corrected_r2(r2, ceiling);
      excluded = c.undefined;
      above_one = c.above_one;
      return median(c.values);
    };
    const double point = score_of(truth, pred);
    if (!std::isfinite(point)) throw DataError("score undefined: every target neuron is constant on the test set");
    d.score = point;
    d.excluded = excluded;
    d.above_one = above_one;
    Rng rng(derive_seed(seed, "ci"));
    std::uniform_int_distribution<Index> pick(0, truth.rows() - 1);
    std::vector<double> samples;
    IndexList rows(static_cast<std::size_t>(truth.rows()));
    for (int r = 0; r < ctx.ci_resamples; ++r) {
      for (auto& i : rows) i = pick(rng);
      samples.push_back(score_of(take_rows(truth, rows), take_rows(pred, rows)));
    }
    const auto [lo, hi] = detail::percentile_ci(std::move(samples), point);
    d.ci_low = lo;
    d.ci_high = hi;
  } catch (const std::exception& e) {
    d = DirectionScore{};
    d.error = e.what();
  }
  return d;
}

namespace detail {

struct DirectionTask {
  std::size_t method = 0;
  const Matrix* source = nullptr;
  const ResponseProfile* target = nullptr;
  const PopulationDataset* target_ds = nullptr;
  Correction correction = Correction::none;
  std::string key;
};

inline std::vector<DirectionScore> run_tasks(const std::vector<DirectionTask>& tasks,
                                             const std::vector<MappingMethod>& methods, const ScoringContext& ctx,
                                             std::uint64_t master, int jobs) {
  return parallel_map<DirectionScore>(tasks.size(), jobs, [&](std::size_t i) {
    const DirectionTask& t = tasks[i];
    return score_direction(*t.source, *t.target, t.target_ds, methods[t.method], ctx, t.correction,
                           derive_seed(master, t.key));
  });
}

inline ScoreRow make_row(const DirectionScore& s) {
  ScoreRow r;
  r.score = s.score;
  r.ci_low = s.ci_low;
  r.ci_high = s.ci_high;
  r.excluded = s.excluded;
  r.above_one = s.above_one;
  r.error = s.error;
  return r;
}

inline json base_provenance(const ExperimentConfig& cfg, const std::vector<MappingMethod>& methods, const Split& split,
                            Stage stage) {
  json m = json::array();
  for (const auto& x : methods) m.push_back(x.to_json());
  const SplitSpec s = cfg.effective_split();
  return {{"toolkit_version", kToolkitVersion},
          {"config_hash", cfg.hash()},
          {"master_seed", cfg.seed},
          {"split", {{"train_fraction", s.train_fraction}, {"seed", s.seed}, {"train", split.train.size()}, {"test", split.test.size()}}},
          {"stage", to_string(stage)},
          {"methods", m},
          {"correction", to_string(cfg.correction)},
          {"noise", {{"n_boot", cfg.bootstrap.n_boot}, {"n_splits", cfg.bootstrap.n_splits}}},
          {"ci_resamples", cfg.metrics.ci_resamples},
          {"task_seed_rule", "derive_seed(master_seed, task key)"}};
}

inline void record_failures(json& provenance, const std::vector<DirectionScore>& results) {
  long failed = 0;
  json errors = json::array();
  for (const auto& r : results)
    if (!r.error.empty()) {
      ++failed;
      if (errors.size() < 20) errors.push_back(r.error);
    }
  provenance["cells"] = results.size();
  provenance["failed_cells"] = failed;
  provenance["failure_fraction"] = results.empty() ? 0.0 : static_cast<double>(failed) / static_cast<double>(results.size());
  provenance["first_errors"] = errors;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Population evaluation

/// Scores every same-area profile pair in both directions for each method,
/// then (when any specificity metric is on) all cross-area pairs for the
/// dissimilarity matrix, silhouette, hierarchy correlation and MDS.
inline EvaluationReport run_population_eval(const ExperimentConfig& cfg, const PopulationDataset& ds) {
  const Stage stage = resolve_stage(cfg, ds);
  const auto profiles = select_profiles(cfg, ds, stage);
  std::set<std::string> subjects;
  for (const auto* p : profiles) subjects.insert(p->subject_id);
  if (subjects.size() < 2) throw DataError("pairwise evaluation impossible: the selection contains a single subject");
  const std::vector<MappingMethod> methods = resolve_methods(cfg, ds);
  const Split split = split_stimuli(ds.stimuli(), cfg.effective_split());
  const ScoringContext ctx{split, cfg.bootstrap, cfg.metrics.ci_resamples};
  const bool want_spec = cfg.metrics.silhouette || cfg.metrics.hierarchy || cfg.metrics.mds;
  const std::vector<std::string> areas = area_order(profiles);
  const std::size_t n = profiles.size();

  // Pooled sources: for each area and held-out subject, all other subjects.
  std::vector<ResponseProfile> pooled;
  std::vector<std::pair<std::size_t, std::size_t>> pooled_with;  // (pooled index, target profile index)
  if (cfg.pool_sources) {
    pooled.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<const ResponseProfile*> parts;
      for (const auto* p : profiles)
        if (p->area_id == profiles[t]->area_id && p->subject_id != profiles[t]->subject_id) parts.push_back(p);
      if (parts.empty()) continue;
      pooled.push_back(pool_profiles(parts, "pool-minus-" + profiles[t]->subject_id));
      pooled_with.emplace_back(pooled.size() - 1, t);
    }
  }

  std::vector<detail::DirectionTask> tasks;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> pair_task;  // (m, src, tgt) -> task
  std::map<std::tuple<std::size_t, std::size_t, bool>, std::size_t> pool_task;        // (m, pooled, forward)
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const std::string mname = methods[m].name();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool same_area = profiles[i]->area_id == profiles[j]->area_id;
        const bool scored = same_area && profiles[i]->subject_id != profiles[j]->subject_id && !cfg.pool_sources;
        if (!scored && !want_spec) continue;
        for (auto [s, t] : {std::pair{i, j}, std::pair{j, i}}) {
          pair_task[{m, s, t}] = tasks.size();
          tasks.push_back({m, &profiles[s]->matrix.values, profiles[t], &ds, cfg.correction,
                           mname + "|" + profiles[s]->label() + "->" + profiles[t]->label()});
        }
      }
    for (const auto& [pi, t] : pooled_with) {
      pool_task[{m, pi, true}] = tasks.size();
      tasks.push_back({m, &pooled[pi].matrix.values, profiles[t], &ds, cfg.correction,
                       mname + "|" + pooled[pi].label() + "->" + profiles[t]->label()});
      pool_task[{m, pi, false}] = tasks.size();
      tasks.push_back({m, &profiles[t]->matrix.values, &pooled[pi], &ds, cfg.correction,
                       mname + "|" + profiles[t]->label() + "->" + pooled[pi].label()});
    }
  }
  const std::vector<DirectionScore> results = detail::run_tasks(tasks, methods, ctx, cfg.seed, cfg.jobs);

  EvaluationReport report;
  report.kind = "population";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const std::string mname = methods[m].name();
    for (const auto& area : areas) {
      std::vector<double> fwd, bwd, both;
      const auto emit = [&](const std::string& pair, const DirectionScore& f, const DirectionScore& b) {
        for (const auto& [dir, s] : {std::pair<std::string, const DirectionScore*>{"forward", &f}, {"backward", &b}}) {
          ScoreRow row = detail::make_row(*s);
          row.pair = pair;
          row.area = area;
          row.method = mname;
          row.direction = dir;
          report.scores.push_back(std::move(row));
        }
        if (f.score) fwd.push_back(*f.score);
        if (b.score) bwd.push_back(*b.score);
        if (f.score && b.score) both.push_back(0.5 * (*f.score + *b.score));
      };
      if (cfg.pool_sources) {
        for (const auto& [pi, t] : pooled_with)
          if (profiles[t]->area_id == area)
            emit("pooled|" + profiles[t]->subject_id, results[pool_task.at({m, pi, true})],
                 results[pool_task.at({m, pi, false})]);
      } else {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j) {
            if (profiles[i]->area_id != area || profiles[j]->area_id != area) continue;
            if (profiles[i]->subject_id == profiles[j]->subject_id) continue;
            emit(profiles[i]->subject_id + "|" + profiles[j]->subject_id, results[pair_task.at({m, i, j})],
                 results[pair_task.at({m, j, i})]);
          }
      }
      for (const auto& [dir, values] : {std::pair<std::string, const std::vector<double>*>{"forward", &fwd},
                                        {"backward", &bwd},
                                        {"mean", &both}}) {
        AggregateRow a = detail::aggregate(*values, cfg.metrics.ci_resamples,
                                           derive_seed(cfg.seed, "pairs|" + mname + "|" + area + "|" + dir));
        a.area = area;
        a.method = mname;
        a.direction = dir;
        report.aggregates.push_back(std::move(a));
      }
    }
  }

  if (want_spec && n >= 2) {
    report.specificity.emplace();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      MethodSpecificity spec;
      spec.method = methods[m].name();
      for (const auto* p : profiles) {
        spec.dissimilarity.labels.push_back(p->label());
        spec.areas.push_back(p->area_id);
        spec.levels.push_back(p->hierarchy_level);
      }
      spec.dissimilarity.values = Matrix::Zero(static_cast<Index>(n), static_cast<Index>(n));
      bool complete = true;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const auto& f = results[pair_task.at({m, i, j})];
          const auto& b = results[pair_task.at({m, j, i})];
          double v = std::numeric_limits<double>::quiet_NaN();
          if (f.score && b.score) v = metrics::dissimilarity_from_score(0.5 * (*f.score + *b.score));
          else complete = false;
          spec.dissimilarity.values(static_cast<Index>(i), static_cast<Index>(j)) = v;
          spec.dissimilarity.values(static_cast<Index>(j), static_cast<Index>(i)) = v;
        }
      if (!complete) {
        spec.notes.push_back("dissimilarity matrix incomplete (failed cells); specificity metrics skipped");
      } else {
        const auto attempt = [&](const char* what, auto&& body) {
          try {
            body();
          } catch (const Error& e) {
            spec.notes.push_back(std::string(what) + ": " + e.what());
          }
        };
        if (cfg.metrics.silhouette)
          attempt("silhouette", [&] {
            const auto s = metrics::silhouette_specificity(spec.dissimilarity, spec.areas);
            spec.silhouette = s.silhouette_mean;
            spec.silhouette_per_profile = s.per_profile;
          });
        if (cfg.metrics.hierarchy)
          attempt("hierarchy", [&] { spec.hierarchy_correlation = metrics::hierarchy_correlation(spec.dissimilarity, spec.levels); });
        if (cfg.metrics.mds)
          attempt("mds", [&] { spec.mds = metrics::mds_embed(spec.dissimilarity, 2, derive_seed(cfg.seed, "mds|" + spec.method)); });
      }
      report.specificity->push_back(std::move(spec));
    }
  }

  report.provenance = detail::base_provenance(cfg, methods, split, stage);
  report.provenance["pool_sources"] = cfg.pool_sources;
  detail::record_failures(report.provenance, results);
  return report;
}

// ---------------------------------------------------------------------------
// Model comparison

struct CandidateModel {
  std::string name;
  std::vector<ResponseProfile> layers;  // ordered by hierarchy level
};

/// Every profile of the dataset is one layer of the model.
inline CandidateModel load_candidate_model(const ModelSource& src) {
  const PopulationDataset ds = load_dataset(src.dataset);
  CandidateModel m{src.name, ds.profiles};
  std::stable_sort(m.layers.begin(), m.layers.end(),
                   [](const ResponseProfile& a, const ResponseProfile& b) { return a.hierarchy_level < b.hierarchy_level; });
  return m;
}

/// Per model layer x population profile x method: model->brain with the
/// requested target-side correction, brain->model uncorrected (NC = 1), and
/// their average. Model separation is reported per area and view, plus the
/// mean over areas ("all").
inline EvaluationReport run_model_comparison(const ExperimentConfig& cfg, const std::vector<CandidateModel>& models,
                                             const PopulationDataset& population, Correction correction) {
  if (models.empty()) throw ConfigError("model comparison needs at least one model");
  for (const auto& model : models) {
    if (model.layers.empty()) throw DataError("model " + model.name + " has no layers");
    for (const auto& layer : model.layers) {
      if (layer.matrix.stimuli() != population.stimuli() ||
          (!layer.matrix.stimulus_ids.empty() && layer.matrix.stimulus_ids != population.stimulus_ids))
        throw DataError("stimulus mismatch: model " + model.name + " layer " + layer.area_id +
                        " does not share the population's stimuli");
    }
  }
  const Stage stage = resolve_stage(cfg, population);
  const auto profiles = select_profiles(cfg, population, stage);
  const std::vector<MappingMethod> methods = resolve_methods(cfg, population);
  const Split split = split_stimuli(population.stimuli(), cfg.effective_split());
  const ScoringContext ctx{split, cfg.bootstrap, cfg.metrics.ci_resamples};
  const std::vector<std::string> areas = area_order(profiles);

  // Task keys omit the model name so identical models get identical scores.
  std::vector<detail::DirectionTask> tasks;
  for (std::size_t m = 0; m < methods.size(); ++m)
    for (const auto& model : models)
      for (const auto& layer : model.layers)
        for (const auto* p : profiles) {
          const std::string base = methods[m].name() + "|" + layer.area_id + "|" + p->label();
          tasks.push_back({m, &layer.matrix.values, p, &population, correction, base + "|model_to_brain"});
          tasks.push_back({m, &p->matrix.values, &layer, nullptr, Correction::none, base + "|brain_to_model"});
        }
  const std::vector<DirectionScore> results = detail::run_tasks(tasks, methods, ctx, cfg.seed, cfg.jobs);

  EvaluationReport report;
  report.kind = "model_comparison";
  // view -> method -> area -> model -> per-layer mean
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<std::vector<OptDouble>>>>> table;
  std::size_t at = 0;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const std::string mname = methods[m].name();
    for (const auto& model : models)
      for (const auto& layer : model.layers) {
        std::map<std::string, std::map<std::string, std::vector<double>>> per_area;  // area -> view -> values
        for (const auto* p : profiles) {
          const DirectionScore& m2b = results[at++];
          const DirectionScore& b2m = results[at++];
          DirectionScore avg;
          if (m2b.score && b2m.score) {
            avg.score = 0.5 * (*m2b.score + *b2m.score);
            avg.ci_low = 0.5 * (*m2b.ci_low + *b2m.ci_low);
            avg.ci_high = 0.5 * (*m2b.ci_high + *b2m.ci_high);
          } else {
            avg.error = m2b.error.empty() ? b2m.error : m2b.error;
          }
          for (const auto& [view, s] : {std::pair<std::string, const DirectionScore*>{"model_to_brain", &m2b},
                                        {"brain_to_model", &b2m},
                                        {"average", &avg}}) {
            ScoreRow row = detail::make_row(*s);
            row.model = model.name;
            row.layer = layer.area_id;
            row.pair = p->subject_id;
            row.area = p->area_id;
            row.method = mname;
            row.direction = view;
            report.scores.push_back(std::move(row));
            if (s->score) per_area[p->area_id][view].push_back(*s->score);
          }
        }
        for (const auto& area : areas)
          for (const std::string view : {"model_to_brain", "brain_to_model", "average"}) {
            const auto& values = per_area[area][view];
            AggregateRow a = detail::aggregate(values, cfg.metrics.ci_resamples,
                                               derive_seed(cfg.seed, "subjects|" + mname + "|" + layer.area_id + "|" + area + "|" + view));
            a.area = area;
            a.method = mname;
            a.direction = view;
            a.model = model.name;
            a.layer = layer.area_id;
            auto& rows = table[view][mname][area];
            if (rows.size() < models.size()) rows.resize(models.size());
            const auto model_index = static_cast<std::size_t>(&model - models.data());
            rows[model_index].push_back(a.mean);
            report.aggregates.push_back(std::move(a));
          }
      }
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const std::string mname = methods[m].name();
    for (const std::string view : {"model_to_brain", "brain_to_model", "average"}) {
      std::vector<double> per_area_values;
      for (const auto& area : areas) {
        SeparationRow row{area, mname, view, std::nullopt};
        const auto& rows = table[view][mname][area];
        std::vector<std::vector<double>> scores;
        bool complete = models.size() >= 2;
        for (const auto& r : rows) {
          std::vector<double> layer_scores;
          for (const auto& v : r) {
            if (!v) complete = false;
            layer_scores.push_back(v.value_or(0.0));
          }
          scores.push_back(std::move(layer_scores));
        }
        if (complete) {
          try {
            row.value = metrics::model_separation(scores);
            per_area_values.push_back(*row.value);
          } catch (const DataError&) {
          }
        }
        report.separation.push_back(row);
      }
      SeparationRow all{"all", mname, view, std::nullopt};
      if (!per_area_values.empty() && per_area_values.size() == areas.size()) all.value = mean(per_area_values);
      report.separation.push_back(all);
    }
  }

  report.provenance = detail::base_provenance(cfg, methods, split, stage);
  report.provenance["correction"] = to_string(correction);
  json model_info = json::array();
  for (const auto& model : models) model_info.push_back({{"name", model.name}, {"layers", model.layers.size()}});
  report.provenance["models"] = model_info;
  detail::record_failures(report.provenance, results);
  return report;
}

/// True when the failed-cell fraction exceeds the configured threshold.
inline bool failures_exceed(const EvaluationReport& r, double threshold) {
  return r.provenance.value("failure_fraction", 0.0) > threshold;
}

}  // namespace iatc::pipeline
