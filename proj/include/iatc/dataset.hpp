#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "iatc/core.hpp"
#include "iatc/rng.hpp"

namespace iatc {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct PopulationDataset {
  std::vector<ResponseProfile> profiles;
  std::vector<std::string> stimulus_ids;
  json metadata = json::object();
  fs::path root;  // where trial files are resolved; empty for in-memory datasets

  Index stimuli() const { return static_cast<Index>(stimulus_ids.size()); }

  const ResponseProfile& find(const std::string& subject, const std::string& area,
                              Stage stage) const {
    for (const auto& p : profiles)
      if (p.subject_id == subject && p.area_id == area && p.stage == stage) return p;
    throw DataError("no profile " + subject + ":" + area + ":" + to_string(stage));
  }

  /// Checks shared stimuli, per-profile invariants and key uniqueness.
  void validate() const {
    std::set<std::tuple<std::string, std::string, Stage>> keys;
    if (!stimulus_ids.empty()) {
      std::set<std::string> uniq(stimulus_ids.begin(), stimulus_ids.end());
      if (uniq.size() != stimulus_ids.size()) throw DataError("duplicate stimulus ids");
    }
    for (const auto& p : profiles) {
      if (!keys.insert({p.subject_id, p.area_id, p.stage}).second)
        throw DataError("duplicate profile key " + p.label());
      if (p.matrix.stimuli() != stimuli())
        throw DataError("profile " + p.label() + " has " + std::to_string(p.matrix.stimuli()) +
                        " stimuli, dataset has " + std::to_string(stimuli()));
      p.matrix.validate("profile " + p.label());
      std::set<std::string> ids(p.matrix.neuron_ids.begin(), p.matrix.neuron_ids.end());
      if (ids.size() != p.matrix.neuron_ids.size())
        throw DataError("profile " + p.label() + " has duplicate neuron ids");
      if (!p.ncsnr.empty() && static_cast<Index>(p.ncsnr.size()) != p.matrix.neurons())
        throw DataError("profile " + p.label() + ": ncsnr length does not match neuron count");
    }
  }
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  int fold_count = 5;
};

struct Split {
  IndexList train;
  IndexList test;
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

/// Reads a numeric CSV with a header row. Every error names the file and the
/// 1-based data row / column.
inline CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (auto& h : detail::split_csv_line(line)) table.header.push_back(detail::trim(h));
  std::vector<std::vector<double>> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++row;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != table.header.size())
      throw DataError(path.string() + ": row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(table.header.size()));
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = detail::trim(cells[c]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw DataError(path.string() + ": unparseable value '" + cell + "' at row " +
                        std::to_string(row) + ", column " + std::to_string(c + 1) + " (" +
                        table.header[c] + ")");
      if (!std::isfinite(v))
        throw DataError(path.string() + ": non-finite value at row " + std::to_string(row) +
                        ", column " + std::to_string(c + 1) + " (" + table.header[c] + ")");
      values[c] = v;
    }
    rows.push_back(std::move(values));
  }
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return table;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const fs::path& path, const std::vector<std::string>& header,
                      const Matrix& values) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << format_double(values(r, c));
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Dataset directory

inline PopulationDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw DataError("missing manifest: " + manifest_path.string());
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  PopulationDataset ds;
  ds.root = dir;
  try {
    ds.stimulus_ids = manifest.at("stimulus_ids").get<std::vector<std::string>>();
    if (manifest.contains("metadata")) ds.metadata = manifest.at("metadata");
    for (const auto& entry : manifest.at("profiles")) {
      ResponseProfile p;
      p.subject_id = entry.at("subject").get<std::string>();
      p.area_id = entry.at("area").get<std::string>();
      p.hierarchy_level = entry.value("hierarchy_level", 0.0);
      p.stage = stage_from_string(entry.value("stage", std::string("unspecified")));
      const auto file = entry.at("file").get<std::string>();
      if (entry.contains("trial_files"))
        p.trial_files = entry.at("trial_files").get<std::vector<std::string>>();
      if (entry.contains("ncsnr")) p.ncsnr = entry.at("ncsnr").get<std::vector<double>>();
      CsvTable table = read_csv(dir / file);
      if (table.values.rows() != static_cast<Index>(ds.stimulus_ids.size()))
        throw DataError(file + ": manifest declares " + std::to_string(ds.stimulus_ids.size()) +
                        " stimuli but the CSV has " + std::to_string(table.values.rows()) +
                        " rows");
      p.matrix.values = std::move(table.values);
      p.matrix.neuron_ids = std::move(table.header);
      p.matrix.stimulus_ids = ds.stimulus_ids;
      ds.profiles.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

inline std::string profile_file_name(const ResponseProfile& p) {
  return p.subject_id + "__" + p.area_id + "__" + to_string(p.stage) + ".csv";
}

/// Writes manifest.json and one CSV per profile. Values use 17 significant
/// digits so a load/save round trip is exact.
inline void save_dataset(const PopulationDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["stimulus_ids"] = ds.stimulus_ids;
  manifest["metadata"] = ds.metadata;
  manifest["profiles"] = json::array();
  for (const auto& p : ds.profiles) {
    const std::string file = profile_file_name(p);
    write_csv(dir / file, p.matrix.neuron_ids, p.matrix.values);
    json entry = {{"subject", p.subject_id},
                  {"area", p.area_id},
                  {"hierarchy_level", p.hierarchy_level},
                  {"stage", to_string(p.stage)},
                  {"file", file}};
    if (!p.trial_files.empty()) entry["trial_files"] = p.trial_files;
    if (!p.ncsnr.empty()) entry["ncsnr"] = p.ncsnr;
    manifest["profiles"].push_back(entry);
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError("cannot write manifest in " + dir.string());
}

/// Loads the per-trial CSVs referenced by a profile.
inline TrialTensor load_trials(const PopulationDataset& ds, const ResponseProfile& p) {
  if (p.trial_files.empty()) throw DataError("profile " + p.label() + " has no trial files");
  TrialTensor t;
  for (const auto& f : p.trial_files) {
    CsvTable table = read_csv(ds.root / f);
    if (table.values.rows() != p.matrix.stimuli() || table.values.cols() != p.matrix.neurons())
      throw DataError(f + ": trial shape does not match profile " + p.label());
    t.trials.push_back(std::move(table.values));
  }
  return t;
}

inline ResponseMatrix trial_average(const TrialTensor& t) {
  if (t.trial_count() < 1) throw DataError("trial_average needs at least one trial");
  ResponseMatrix m;
  m.values = t.mean();
  return m;
}

/// Concatenates the neuron columns of several same-stimulus profiles into one
/// synthetic "pooled" subject. Neuron ids are prefixed with the subject id.
inline ResponseProfile pool_profiles(const std::vector<const ResponseProfile*>& parts,
                                     const std::string& subject_id) {
  if (parts.empty()) throw DataError("nothing to pool");
  ResponseProfile out;
  out.subject_id = subject_id;
  out.area_id = parts.front()->area_id;
  out.stage = parts.front()->stage;
  out.hierarchy_level = parts.front()->hierarchy_level;
  out.matrix.stimulus_ids = parts.front()->matrix.stimulus_ids;
  Index cols = 0;
  for (const auto* p : parts) {
    if (p->matrix.stimuli() != parts.front()->matrix.stimuli())
      throw DataError("pooled profiles disagree on stimulus count");
    cols += p->matrix.neurons();
  }
  out.matrix.values.resize(parts.front()->matrix.stimuli(), cols);
  Index at = 0;
  for (const auto* p : parts) {
    out.matrix.values.middleCols(at, p->matrix.neurons()) = p->matrix.values;
    for (Index j = 0; j < p->matrix.neurons(); ++j) {
      const std::string id = j < static_cast<Index>(p->matrix.neuron_ids.size())
                                 ? p->matrix.neuron_ids[static_cast<std::size_t>(j)]
                                 : std::to_string(j);
      out.matrix.neuron_ids.push_back(p->subject_id + "/" + id);
    }
    at += p->matrix.neurons();
  }
  const bool all_ncsnr = std::all_of(parts.begin(), parts.end(), [](const ResponseProfile* p) { return !p->ncsnr.empty(); });
  if (all_ncsnr)
    for (const auto* p : parts) out.ncsnr.insert(out.ncsnr.end(), p->ncsnr.begin(), p->ncsnr.end());
  return out;
}

// ---------------------------------------------------------------------------
// Splits

inline Split split_stimuli(Index count, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  const auto n_train = static_cast<Index>(std::floor(static_cast<double>(count) * spec.train_fraction));
  if (n_train < 2 || count - n_train < 2)
    throw DataError("too few stimuli (" + std::to_string(count) + ") for a train/test split");
  IndexList order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(spec.seed, std::uint64_t{0x5EED}));
  std::shuffle(order.begin(), order.end(), rng);
  Split s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.test.assign(order.begin() + n_train, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

/// Validation folds over positions 0..count-1 (shuffled, round-robin).
inline std::vector<IndexList> kfold(Index count, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("need at least 2 folds");
  if (count < 2 * folds) throw DataError("too few samples for " + std::to_string(folds) + " folds");
  IndexList order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, std::uint64_t{0xF01D}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<IndexList> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < order.size(); ++i) out[i % out.size()].push_back(order[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

/// Complement of `fold` within 0..count-1.
inline IndexList complement(Index count, const IndexList& fold) {
  IndexList out;
  std::vector<bool> in(static_cast<std::size_t>(count), false);
  for (Index i : fold) in[static_cast<std::size_t>(i)] = true;
  for (Index i = 0; i < count; ++i)
    if (!in[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

}  // namespace iatc
