#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace iatc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

inline constexpr const char* kToolkitVersion = "0.3.0";

// Error hierarchy. The CLI maps these onto exit codes (config -> 1, data -> 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Raised when an iterative solver runs out of iterations. `trace` holds the
/// objective history (deviance, duality gap, marginal violation...) so callers
/// can report how far off the solver was.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

enum class Stage { pre_nl, post_nl, unspecified };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::pre_nl: return "pre_nl";
    case Stage::post_nl: return "post_nl";
    case Stage::unspecified: return "unspecified";
  }
  return "unspecified";
}

inline Stage stage_from_string(const std::string& s) {
  if (s == "pre_nl") return Stage::pre_nl;
  if (s == "post_nl") return Stage::post_nl;
  if (s == "unspecified") return Stage::unspecified;
  throw DataError("unknown stage '" + s + "'");
}

/// Stimuli x neurons responses. Stimuli are always the sample axis.
struct ResponseMatrix {
  Matrix values;
  std::vector<std::string> stimulus_ids;
  std::vector<std::string> neuron_ids;

  Index stimuli() const { return values.rows(); }
  Index neurons() const { return values.cols(); }

  /// Checks the type invariants; throws DataError naming the offending cell.
  void validate(const std::string& where = "response matrix") const;

  /// Rows `rows` in the given order, ids carried along.
  ResponseMatrix select_stimuli(const IndexList& rows) const;
};

/// Stimuli x neurons x trials. Stored as one matrix per trial.
struct TrialTensor {
  std::vector<Matrix> trials;

  Index trial_count() const { return static_cast<Index>(trials.size()); }
  Index stimuli() const { return trials.empty() ? 0 : trials.front().rows(); }
  Index neurons() const { return trials.empty() ? 0 : trials.front().cols(); }

  /// Mean over the trials in `subset` (all trials when empty).
  Matrix mean(const IndexList& subset = {}) const;
};

struct ResponseProfile {
  ResponseMatrix matrix;
  std::string subject_id;
  std::string area_id;
  double hierarchy_level = 0.0;
  Stage stage = Stage::unspecified;
  std::vector<std::string> trial_files;  // relative to dataset root, optional
  std::vector<double> ncsnr;             // per neuron, optional

  std::string label() const {
    return subject_id + ":" + area_id + ":" + to_string(stage);
  }
};

inline void ResponseMatrix::validate(const std::string& where) const {
  if (values.rows() < 2) throw DataError(where + ": need at least 2 stimuli");
  if (values.cols() < 1) throw DataError(where + ": need at least 1 neuron");
  if (!stimulus_ids.empty() &&
      static_cast<Index>(stimulus_ids.size()) != values.rows())
    throw DataError(where + ": stimulus id count does not match rows");
  if (!neuron_ids.empty() && static_cast<Index>(neuron_ids.size()) != values.cols())
    throw DataError(where + ": neuron id count does not match columns");
  for (Index s = 0; s < values.rows(); ++s)
    for (Index n = 0; n < values.cols(); ++n)
      if (!std::isfinite(values(s, n)))
        throw DataError(where + ": non-finite value at row " + std::to_string(s + 1) +
                        ", column " + std::to_string(n + 1));
}

inline ResponseMatrix ResponseMatrix::select_stimuli(const IndexList& rows) const {
  ResponseMatrix out;
  out.values.resize(static_cast<Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.values.row(static_cast<Index>(i)) = values.row(rows[i]);
  if (!stimulus_ids.empty())
    for (Index r : rows) out.stimulus_ids.push_back(stimulus_ids[static_cast<std::size_t>(r)]);
  out.neuron_ids = neuron_ids;
  return out;
}

inline Matrix TrialTensor::mean(const IndexList& subset) const {
  if (trials.empty()) throw DataError("trial tensor has no trials");
  Matrix acc = Matrix::Zero(stimuli(), neurons());
  if (subset.empty()) {
    for (const auto& t : trials) acc += t;
    return acc / static_cast<double>(trials.size());
  }
  for (Index i : subset) acc += trials.at(static_cast<std::size_t>(i));
  return acc / static_cast<double>(subset.size());
}

/// Rows of `m` at `rows`.
inline Matrix take_rows(const Matrix& m, const IndexList& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace iatc
