#include <gtest/gtest.h>

#include <fstream>

#include "iatc/pipeline/config.hpp"
#include "iatc/pipeline/evaluate.hpp"
#include "iatc/pipeline/parallel.hpp"
#include "iatc/pipeline/report.hpp"
#include "iatc/simulator.hpp"
#include "test_support.hpp"

using namespace iatc;
using namespace iatc::pipeline;

namespace {

sim::PopulationConfig tiny_population(int subjects = 3, int layers = 2) {
  sim::PopulationConfig cfg;
  cfg.layers = layers;
  cfg.latent_dims.assign(static_cast<std::size_t>(layers), 6);
  cfg.neurons = 10;
  cfg.subjects = subjects;
  cfg.stimuli = 150;
  cfg.trials = 6;
  cfg.teacher_seed = 4;
  return cfg;
}

ExperimentConfig quick_config() {
  ExperimentConfig c;
  c.methods = {MappingMethod::make(MethodKind::ridge)};
  c.metrics.ci_resamples = 100;
  c.seed = 9;
  return c;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

int count_rows(const EvaluationReport& r, const std::string& direction) {
  int n = 0;
  for (const auto& s : r.scores) n += s.direction == direction;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// config

TEST(Config, TomlAndJsonAgree) {
  const fs::path dir = test::scratch_dir("config_agree");
  write_text(dir / "a.toml",
             "dataset = \"data\"\nmethods = [\"ridge\", { kind = \"lasso\", hyperparameters = { folds = 4 } }]\n"
             "seed = 3\n[split]\ntrain_fraction = 0.75\n[metrics]\nmds = false\n");
  write_text(dir / "b.json",
             R"({"dataset": "data", "methods": ["ridge", {"kind": "lasso", "hyperparameters": {"folds": 4}}],
                 "seed": 3, "split": {"train_fraction": 0.75}, "metrics": {"mds": false}})");
  const ExperimentConfig a = load_config(dir / "a.toml"), b = load_config(dir / "b.json");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.dataset, dir / "data");
  ASSERT_EQ(a.methods.size(), 2u);
  EXPECT_DOUBLE_EQ(a.split.train_fraction, 0.75);
  EXPECT_FALSE(a.metrics.mds);
  EXPECT_TRUE(a.metrics.silhouette);
}

TEST(Config, UnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(json{{"datset", "x"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"metrics", {{"silhouete", true}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"methods", {"ridge_regression"}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"correction", "maybe"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"split", {{"train_fraction", 1.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"jobs", 0}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"stage", "middle"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"methods", json::array()}}), ConfigError);
}

TEST(Config, SyntaxErrorNamesTheLine) {
  const fs::path dir = test::scratch_dir("config_syntax");
  write_text(dir / "bad.toml", "seed = 1\nmethods = [\"ridge\"\n");
  try {
    load_config(dir / "bad.toml");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.toml:"), std::string::npos);
  }
  EXPECT_THROW(load_config(dir / "missing.toml"), ConfigError);
}

TEST(Config, HashIgnoresJobsAndOutput) {
  ExperimentConfig a = quick_config(), b = quick_config();
  b.jobs = 8;
  b.out = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 10;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, SimulationSection) {
  const json j = {{"population", {{"layers", 2}, {"latent_dims", 5}, {"neurons", 8}, {"write_trials", true}}}};
  const SimulationConfig s = simulation_from_json(j);
  EXPECT_EQ(s.population.layers, 2);
  EXPECT_EQ(s.population.neurons, 8);
  EXPECT_TRUE(s.write_trials);
}

// ---------------------------------------------------------------------------
// parallel_map

TEST(Parallel, PreservesOrderAndPropagatesErrors) {
  const auto out = parallel_map<int>(50, 4, [](std::size_t i) { return static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  EXPECT_THROW(parallel_map<int>(10, 3,
                                 [](std::size_t i) -> int {
                                   if (i == 7) throw DataError("boom");
                                   return 0;
                                 }),
               DataError);
  EXPECT_TRUE(parallel_map<int>(0, 4, [](std::size_t) { return 1; }).empty());
}

// ---------------------------------------------------------------------------
// population evaluation

TEST(PopulationEval, TwoSubjectsOneAreaGivesOnePair) {
  const auto pop = sim::generate_population(tiny_population(2, 1));
  ExperimentConfig cfg = quick_config();
  cfg.stage = "pre_nl";
  const EvaluationReport r = run_population_eval(cfg, pop.dataset);
  ASSERT_EQ(r.scores.size(), 2u);
  EXPECT_EQ(count_rows(r, "forward"), 1);
  EXPECT_EQ(count_rows(r, "backward"), 1);
  for (const auto& s : r.scores) {
    ASSERT_TRUE(s.score && s.ci_low && s.ci_high);
    EXPECT_LE(*s.ci_low, *s.score);
    EXPECT_GE(*s.ci_high, *s.score);
    EXPECT_EQ(s.pair, "subject1|subject2");
  }
}

TEST(PopulationEval, SingleSubjectIsDataError) {
  const auto pop = sim::generate_population(tiny_population(1, 1));
  EXPECT_THROW(run_population_eval(quick_config(), pop.dataset), DataError);
}

TEST(PopulationEval, JobCountDoesNotChangeResults) {
  const auto pop = sim::generate_population(tiny_population());
  ExperimentConfig a = quick_config(), b = quick_config();
  a.jobs = 1;
  b.jobs = 4;
  const json ja = to_json(run_population_eval(a, pop.dataset));
  const json jb = to_json(run_population_eval(b, pop.dataset));
  EXPECT_EQ(ja.dump(), jb.dump());
}

TEST(PopulationEval, SpecificityAndAggregates) {
  const auto pop = sim::generate_population(tiny_population());
  ExperimentConfig cfg = quick_config();
  cfg.stage = "post_nl";
  const EvaluationReport r = run_population_eval(cfg, pop.dataset);
  // 3 subjects -> 3 pairs per area, 2 areas, 2 directions
  EXPECT_EQ(r.scores.size(), 12u);
  EXPECT_EQ(r.aggregates.size(), 6u);
  for (const auto& a : r.aggregates) {
    EXPECT_EQ(a.pairs, 3);
    ASSERT_TRUE(a.mean && a.ci_low && a.ci_high);
    EXPECT_LE(*a.ci_low, *a.mean + 1e-12);
    EXPECT_GE(*a.ci_high, *a.mean - 1e-12);
  }
  ASSERT_TRUE(r.specificity);
  const MethodSpecificity& spec = r.specificity->front();
  EXPECT_EQ(spec.dissimilarity.values.rows(), 6);
  EXPECT_TRUE(spec.silhouette && spec.hierarchy_correlation && spec.mds);
  EXPECT_EQ(r.provenance.at("stage"), "post_nl");
}

TEST(PopulationEval, EmptyMetricsSkipsSpecificity) {
  const auto pop = sim::generate_population(tiny_population());
  ExperimentConfig cfg = quick_config();
  cfg.metrics.silhouette = cfg.metrics.hierarchy = cfg.metrics.mds = false;
  const EvaluationReport r = run_population_eval(cfg, pop.dataset);
  EXPECT_FALSE(r.specificity);
  EXPECT_EQ(r.scores.size(), 12u);
}

TEST(PopulationEval, PooledSources) {
  const auto pop = sim::generate_population(tiny_population());
  ExperimentConfig cfg = quick_config();
  cfg.pool_sources = true;
  cfg.metrics.silhouette = cfg.metrics.hierarchy = cfg.metrics.mds = false;
  const EvaluationReport r = run_population_eval(cfg, pop.dataset);
  // one pooled source per held-out subject and area
  EXPECT_EQ(r.scores.size(), 12u);
  EXPECT_EQ(r.scores.front().pair.rfind("pooled|", 0), 0u);
}

// ---------------------------------------------------------------------------
// report I/O

TEST(Report, JsonRoundTripAndCsvRows) {
  const auto pop = sim::generate_population(tiny_population());
  const EvaluationReport r = run_population_eval(quick_config(), pop.dataset);
  const fs::path dir = test::scratch_dir("report_io");
  emit_report(r, dir);
  const EvaluationReport back = load_report(dir / "report.json");
  EXPECT_EQ(to_json(back).dump(), to_json(r).dump());
  EXPECT_EQ(line_count(dir / "scores.csv"), r.scores.size() + 1);
  EXPECT_EQ(line_count(dir / "mds.csv"), 1 + 6u);
  EXPECT_FALSE(fs::exists(dir / "separation.csv"));

  const fs::path only_json = test::scratch_dir("report_json_only");
  emit_report(r, only_json, {"json"});
  EXPECT_TRUE(fs::exists(only_json / "report.json"));
  EXPECT_FALSE(fs::exists(only_json / "scores.csv"));
}

TEST(Report, MissingOrBrokenReport) {
  const fs::path dir = test::scratch_dir("report_missing");
  EXPECT_THROW(load_report(dir / "nope.json"), DataError);
  write_text(dir / "broken.json", "{\"scores\": ");
  EXPECT_THROW(load_report(dir / "broken.json"), Error);
}

// ---------------------------------------------------------------------------
// model comparison

TEST(ModelComparison, IdenticalModelsHaveZeroSeparation) {
  const sim::PopulationConfig pc = tiny_population();
  const auto pop = sim::generate_population(pc);
  const auto layers = sim::generator_model(pc, 31, 10, "m");
  const std::vector<CandidateModel> models = {{"a", layers}, {"b", layers}};
  ExperimentConfig cfg = quick_config();
  cfg.stage = "post_nl";
  const EvaluationReport r = run_model_comparison(cfg, models, pop.dataset, Correction::none);
  EXPECT_EQ(r.kind, "model_comparison");
  // 2 models x 2 layers x 6 profiles x 3 views
  EXPECT_EQ(r.scores.size(), 72u);
  ASSERT_FALSE(r.separation.empty());
  for (const auto& s : r.separation) {
    ASSERT_TRUE(s.value) << s.area << " " << s.view;
    EXPECT_NEAR(*s.value, 0.0, 1e-12);
  }
  const fs::path dir = test::scratch_dir("model_cmp");
  emit_report(r, dir);
  EXPECT_EQ(line_count(dir / "separation.csv"), 1 + r.separation.size());
}

TEST(ModelComparison, StimulusMismatchIsDataError) {
  const sim::PopulationConfig pc = tiny_population();
  const auto pop = sim::generate_population(pc);
  sim::PopulationConfig other = pc;
  other.stimuli = 120;
  const std::vector<CandidateModel> models = {{"short", sim::generator_model(other, 1, 10, "m")}};
  EXPECT_THROW(run_model_comparison(quick_config(), models, pop.dataset, Correction::none), DataError);
}

TEST(ModelComparison, EmptyModelList) {
  const auto pop = sim::generate_population(tiny_population());
  EXPECT_THROW(run_model_comparison(quick_config(), {}, pop.dataset, Correction::none), ConfigError);
}
