#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iatc/core.hpp"
#include "iatc/dataset.hpp"
#include "iatc/json_io.hpp"
#include "iatc/metrics.hpp"

namespace iatc::pipeline {

using OptDouble = std::optional<double>;

/// One scored direction. Population runs fill pair/area; model comparisons
/// also fill model/layer and use the model_to_brain, brain_to_model and
/// average directions.
struct ScoreRow {
  std::string pair, area, method, direction;
  std::string model, layer;
  OptDouble score, ci_low, ci_high;
  long excluded = 0;   // neurons dropped by noise correction
  long above_one = 0;  // corrected per-neuron scores above 1
  std::string error;   // non-empty for failed cells

  bool failed() const { return !error.empty(); }
};

/// Mean over subject pairs with a bootstrap CI over pairs.
struct AggregateRow {
  std::string area, method, direction;
  std::string model, layer;
  OptDouble mean, ci_low, ci_high;
  int pairs = 0;
};

struct MethodSpecificity {
  std::string method;
  metrics::DissimilarityMatrix dissimilarity;  // NaN where a cell failed
  std::vector<std::string> areas;
  std::vector<double> levels;
  OptDouble silhouette;
  std::vector<double> silhouette_per_profile;
  OptDouble hierarchy_correlation;
  std::optional<metrics::MdsResult> mds;
  std::vector<std::string> notes;
};

struct SeparationRow {
  std::string area, method, view;
  OptDouble value;
};

struct EvaluationReport {
  std::string kind = "population";  // or "model_comparison"
  std::vector<ScoreRow> scores;
  std::vector<AggregateRow> aggregates;
  std::optional<std::vector<MethodSpecificity>> specificity;
  std::vector<SeparationRow> separation;
  json provenance = json::object();

  long failed_cells() const {
    long n = 0;
    for (const auto& s : scores) n += s.failed() ? 1 : 0;
    return n;
  }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline json opt(const OptDouble& v) { return v && std::isfinite(*v) ? json(*v) : json(nullptr); }

inline OptDouble opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline json matrix_with_nulls(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(std::isfinite(m(i, j)) ? json(m(i, j)) : json(nullptr));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_nulls(const json& rows) {
  const auto r = static_cast<Index>(rows.size());
  const Index c = r ? static_cast<Index>(rows.at(0).size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) {
      const json& v = rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j));
      m(i, j) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    }
  return m;
}

}  // namespace detail

inline json to_json(const ScoreRow& s) {
  json j = {{"pair", s.pair},
            {"area", s.area},
            {"method", s.method},
            {"direction", s.direction},
            {"score", detail::opt(s.score)},
            {"ci_low", detail::opt(s.ci_low)},
            {"ci_high", detail::opt(s.ci_high)},
            {"excluded_neurons", s.excluded},
            {"above_one", s.above_one}};
  if (!s.model.empty()) j["model"] = s.model;
  if (!s.layer.empty()) j["layer"] = s.layer;
  if (s.failed()) j["error"] = s.error;
  return j;
}

inline ScoreRow score_row_from_json(const json& j) {
  ScoreRow s;
  s.pair = j.at("pair").get<std::string>();
  s.area = j.at("area").get<std::string>();
  s.method = j.at("method").get<std::string>();
  s.direction = j.at("direction").get<std::string>();
  s.model = j.value("model", std::string());
  s.layer = j.value("layer", std::string());
  s.score = detail::opt_from(j, "score");
  s.ci_low = detail::opt_from(j, "ci_low");
  s.ci_high = detail::opt_from(j, "ci_high");
  s.excluded = j.value("excluded_neurons", 0L);
  s.above_one = j.value("above_one", 0L);
  s.error = j.value("error", std::string());
  return s;
}

inline json to_json(const MethodSpecificity& m) {
  json j = {{"method", m.method},
            {"labels", m.dissimilarity.labels},
            {"areas", m.areas},
            {"hierarchy_levels", m.levels},
            {"dissimilarity", detail::matrix_with_nulls(m.dissimilarity.values)},
            {"silhouette", detail::opt(m.silhouette)},
            {"silhouette_per_profile", m.silhouette_per_profile},
            {"hierarchy_correlation", detail::opt(m.hierarchy_correlation)},
            {"notes", m.notes}};
  if (m.mds)
    j["mds"] = {{"coordinates", json_io::matrix_to_json(m.mds->coordinates)},
                {"stress", m.mds->stress},
                {"stress_trace", m.mds->stress_trace}};
  else
    j["mds"] = nullptr;
  return j;
}

inline MethodSpecificity method_specificity_from_json(const json& j) {
  MethodSpecificity m;
  m.method = j.at("method").get<std::string>();
  m.dissimilarity.labels = j.at("labels").get<std::vector<std::string>>();
  m.dissimilarity.values = detail::matrix_from_nulls(j.at("dissimilarity"));
  m.areas = j.at("areas").get<std::vector<std::string>>();
  m.levels = j.at("hierarchy_levels").get<std::vector<double>>();
  m.silhouette = detail::opt_from(j, "silhouette");
  m.silhouette_per_profile = j.at("silhouette_per_profile").get<std::vector<double>>();
  m.hierarchy_correlation = detail::opt_from(j, "hierarchy_correlation");
  m.notes = j.at("notes").get<std::vector<std::string>>();
  if (!j.at("mds").is_null()) {
    metrics::MdsResult r;
    r.coordinates = json_io::matrix_from_json(j.at("mds").at("coordinates"));
    r.stress = j.at("mds").at("stress").get<double>();
    r.stress_trace = j.at("mds").at("stress_trace").get<std::vector<double>>();
    m.mds = std::move(r);
  }
  return m;
}

inline json to_json(const EvaluationReport& r) {
  json j;
  j["kind"] = r.kind;
  j["scores"] = json::array();
  for (const auto& s : r.scores) j["scores"].push_back(to_json(s));
  j["aggregates"] = json::array();
  for (const auto& a : r.aggregates) {
    json row = {{"area", a.area},
                {"method", a.method},
                {"direction", a.direction},
                {"mean", detail::opt(a.mean)},
                {"ci_low", detail::opt(a.ci_low)},
                {"ci_high", detail::opt(a.ci_high)},
                {"pairs", a.pairs}};
    if (!a.model.empty()) row["model"] = a.model;
    if (!a.layer.empty()) row["layer"] = a.layer;
    j["aggregates"].push_back(row);
  }
  if (r.specificity) {
    j["specificity"] = json::array();
    for (const auto& m : *r.specificity) j["specificity"].push_back(to_json(m));
  }
  j["model_separation"] = json::array();
  for (const auto& s : r.separation)
    j["model_separation"].push_back(
        {{"area", s.area}, {"method", s.method}, {"view", s.view}, {"value", detail::opt(s.value)}});
  j["provenance"] = r.provenance;
  return j;
}

inline EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  try {
    r.kind = j.at("kind").get<std::string>();
    for (const auto& s : j.at("scores")) r.scores.push_back(score_row_from_json(s));
    for (const auto& a : j.at("aggregates")) {
      AggregateRow row;
      row.area = a.at("area").get<std::string>();
      row.method = a.at("method").get<std::string>();
      row.direction = a.at("direction").get<std::string>();
      row.model = a.value("model", std::string());
      row.layer = a.value("layer", std::string());
      row.mean = detail::opt_from(a, "mean");
      row.ci_low = detail::opt_from(a, "ci_low");
      row.ci_high = detail::opt_from(a, "ci_high");
      row.pairs = a.at("pairs").get<int>();
      r.aggregates.push_back(std::move(row));
    }
    if (j.contains("specificity")) {
      r.specificity.emplace();
      for (const auto& m : j.at("specificity")) r.specificity->push_back(method_specificity_from_json(m));
    }
    for (const auto& s : j.at("model_separation"))
      r.separation.push_back({s.at("area").get<std::string>(), s.at("method").get<std::string>(),
                              s.at("view").get<std::string>(), detail::opt_from(s, "value")});
    r.provenance = j.at("provenance");
  } catch (const json::exception& e) {
    throw DataError(std::string("report.json: ") + e.what());
  }
  return r;
}

inline EvaluationReport load_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_number(const OptDouble& v) { return v && std::isfinite(*v) ? format_double(*v) : ""; }

inline void open_or_throw(std::ofstream& out, const fs::path& path) {
  out.open(path);
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace detail

/// Long format: pair, area, method, direction, score, ci_low, ci_high. Model
/// comparisons add model and layer columns.
inline void write_scores_csv(const EvaluationReport& r, const fs::path& path) {
  std::ofstream out;
  detail::open_or_throw(out, path);
  const bool models = r.kind == "model_comparison";
  out << (models ? "model,layer," : "") << "pair,area,method,direction,score,ci_low,ci_high\n";
  for (const auto& s : r.scores) {
    if (models) out << detail::csv_field(s.model) << ',' << detail::csv_field(s.layer) << ',';
    out << detail::csv_field(s.pair) << ',' << detail::csv_field(s.area) << ',' << detail::csv_field(s.method) << ','
        << s.direction << ',' << detail::csv_number(s.score) << ',' << detail::csv_number(s.ci_low) << ','
        << detail::csv_number(s.ci_high) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

/// method, label, x, y, stress (one row per embedded profile).
inline void write_mds_csv(const EvaluationReport& r, const fs::path& path) {
  std::ofstream out;
  detail::open_or_throw(out, path);
  out << "method,label,x,y,stress\n";
  if (r.specificity)
    for (const auto& m : *r.specificity) {
      if (!m.mds) continue;
      for (std::size_t i = 0; i < m.dissimilarity.labels.size(); ++i) {
        const auto row = static_cast<Index>(i);
        const double y = m.mds->coordinates.cols() > 1 ? m.mds->coordinates(row, 1) : 0.0;
        out << detail::csv_field(m.method) << ',' << detail::csv_field(m.dissimilarity.labels[i]) << ','
            << format_double(m.mds->coordinates(row, 0)) << ',' << format_double(y) << ','
            << format_double(m.mds->stress) << '\n';
      }
    }
  if (!out) throw DataError("write failed: " + path.string());
}

inline void write_separation_csv(const EvaluationReport& r, const fs::path& path) {
  std::ofstream out;
  detail::open_or_throw(out, path);
  out << "area,method,view,separation\n";
  for (const auto& s : r.separation)
    out << detail::csv_field(s.area) << ',' << detail::csv_field(s.method) << ',' << s.view << ','
        << detail::csv_number(s.value) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

/// Writes the requested formats ("json", "csv") into `dir`.
inline void emit_report(const EvaluationReport& r, const fs::path& dir,
                        const std::set<std::string>& formats = {"json", "csv"}) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  if (formats.count("json")) {
    std::ofstream out;
    detail::open_or_throw(out, dir / "report.json");
    out << to_json(r).dump(2) << '\n';
    if (!out) throw DataError("write failed: " + (dir / "report.json").string());
  }
  if (formats.count("csv")) {
    write_scores_csv(r, dir / "scores.csv");
    write_mds_csv(r, dir / "mds.csv");
    if (!r.separation.empty()) write_separation_csv(r, dir / "separation.csv");
  }
}

}  // namespace iatc::pipeline
