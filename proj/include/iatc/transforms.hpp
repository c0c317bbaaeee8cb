#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "iatc/core.hpp"
#include "iatc/json_io.hpp"
#include "iatc/transforms/linear.hpp"
#include "iatc/transforms/mlp.hpp"
#include "iatc/transforms/rsa.hpp"
#include "iatc/transforms/soft_matching.hpp"
#include "iatc/transforms/zippering.hpp"

namespace iatc {

using json = nlohmann::json;

enum class MethodKind {
  ridge,
  lasso,
  nonneg_lasso,
  soft_matching,
  exact_zippering,
  approx_zippering,
  mlp,
  linear_nonlinear
};

inline const std::vector<std::pair<MethodKind, std::string>>& method_names() {
  static const std::vector<std::pair<MethodKind, std::string>> names = {
      {MethodKind::ridge, "ridge"},
      {MethodKind::lasso, "lasso"},
      {MethodKind::nonneg_lasso, "nonneg_lasso"},
      {MethodKind::soft_matching, "soft_matching"},
      {MethodKind::exact_zippering, "exact_zippering"},
      {MethodKind::approx_zippering, "approx_zippering"},
      {MethodKind::mlp, "mlp"},
      {MethodKind::linear_nonlinear, "linear_nonlinear"}};
  return names;
}

inline std::string to_string(MethodKind k) {
  for (const auto& [kind, name] : method_names())
    if (kind == k) return name;
  return "unknown";
}

inline std::optional<MethodKind> method_from_string(const std::string& s) {
  for (const auto& [kind, name] : method_names())
    if (name == s) return kind;
  return std::nullopt;
}

/// A transform class plus its hyperparameters. Only the option block that
/// matches `kind` is read.
struct MappingMethod {
  MethodKind kind = MethodKind::ridge;
  transforms::RidgeOptions ridge;
  transforms::LassoOptions lasso;
  transforms::SoftMatchingOptions soft;
  transforms::ExactZipperingOptions exact;
  transforms::ApproxZipperingOptions approx;
  transforms::MlpOptions mlp;

  static MappingMethod make(MethodKind kind) {
    MappingMethod m;
    m.kind = kind;
    if (kind == MethodKind::nonneg_lasso) m.lasso.nonnegative = true;
    if (kind == MethodKind::linear_nonlinear) {
      // GLM with softplus inverse link, c = 1, source used as-is.
      m.exact.scale = 1.0;
      m.exact.invert_source = false;
    }
    return m;
  }

  std::string name() const { return to_string(kind); }

  json hyperparameters() const {
    switch (kind) {
      case MethodKind::ridge:
        return {{"lambda_grid", ridge.lambda_grid}, {"folds", ridge.folds}};
      case MethodKind::lasso:
      case MethodKind::nonneg_lasso:
        return {{"alpha_grid", lasso.alpha_grid}, {"folds", lasso.folds}, {"nonnegative", lasso.nonnegative},
                {"max_sweeps", lasso.max_sweeps}, {"tol", lasso.tol}};
      case MethodKind::soft_matching:
        return {{"epsilon", soft.epsilon}, {"max_iter", soft.max_iter}, {"tol", soft.tol}};
      case MethodKind::exact_zippering:
      case MethodKind::linear_nonlinear:
        return {{"scale", exact.scale}, {"ridge_penalty", exact.ridge_penalty},
                {"invert_source", exact.invert_source}, {"max_iter", exact.max_iter}, {"tol", exact.tol}};
      case MethodKind::approx_zippering:
        return {{"ridge_penalty", approx.ridge_penalty}, {"max_iter", approx.max_iter}, {"tol", approx.tol}};
      case MethodKind::mlp:
        return {{"hidden_layout", mlp.hidden_layout}, {"epochs", mlp.epochs}, {"batch", mlp.batch},
                {"learning_rate", mlp.learning_rate}};
    }
    return json::object();
  }

  /// Overrides hyperparameters from a JSON object; unknown keys are errors.
  void apply(const json& h) {
    const json known = hyperparameters();
    for (const auto& [key, value] : h.items())
      if (!known.contains(key)) throw ConfigError("method " + name() + ": unknown hyperparameter '" + key + "'");
    try {
      switch (kind) {
        case MethodKind::ridge:
          ridge.lambda_grid = h.value("lambda_grid", ridge.lambda_grid);
          ridge.folds = h.value("folds", ridge.folds);
          break;
        case MethodKind::lasso:
        case MethodKind::nonneg_lasso:
          lasso.alpha_grid = h.value("alpha_grid", lasso.alpha_grid);
          lasso.folds = h.value("folds", lasso.folds);
          lasso.nonnegative = h.value("nonnegative", lasso.nonnegative);
          lasso.max_sweeps = h.value("max_sweeps", lasso.max_sweeps);
          lasso.tol = h.value("tol", lasso.tol);
          break;
        case MethodKind::soft_matching:
          soft.epsilon = h.value("epsilon", soft.epsilon);
          soft.max_iter = h.value("max_iter", soft.max_iter);
          soft.tol = h.value("tol", soft.tol);
          break;
        case MethodKind::exact_zippering:
        case MethodKind::linear_nonlinear:
          exact.scale = h.value("scale", exact.scale);
          exact.ridge_penalty = h.value("ridge_penalty", exact.ridge_penalty);
          exact.invert_source = h.value("invert_source", exact.invert_source);
          exact.max_iter = h.value("max_iter", exact.max_iter);
          exact.tol = h.value("tol", exact.tol);
          break;
        case MethodKind::approx_zippering:
          approx.ridge_penalty = h.value("ridge_penalty", approx.ridge_penalty);
          approx.max_iter = h.value("max_iter", approx.max_iter);
          approx.tol = h.value("tol", approx.tol);
          break;
        case MethodKind::mlp:
          mlp.hidden_layout = h.value("hidden_layout", mlp.hidden_layout);
          mlp.epochs = h.value("epochs", mlp.epochs);
          mlp.batch = h.value("batch", mlp.batch);
          mlp.learning_rate = h.value("learning_rate", mlp.learning_rate);
          break;
      }
    } catch (const json::exception& e) {
      throw ConfigError("method " + name() + ": " + e.what());
    }
  }

  json to_json() const { return {{"kind", name()}, {"hyperparameters", hyperparameters()}}; }

  static MappingMethod from_json(const json& j) {
    const std::string kind = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
    const auto k = method_from_string(kind);
    if (!k) throw ConfigError("unknown method kind '" + kind + "'");
    MappingMethod m = make(*k);
    if (j.is_object() && j.contains("hyperparameters")) m.apply(j.at("hyperparameters"));
    return m;
  }
};

struct FitDiagnostics {
  int iterations = 0;
  bool converged = true;
  std::optional<double> selected_regularization;
  std::optional<double> matching_score;
};

/// A fitted transform. Prediction is a pure function of this value.
struct FittedMap {
  MethodKind kind = MethodKind::ridge;
  json hyperparameters = json::object();
  std::variant<transforms::LinearMap, transforms::TransportPlan, transforms::ZipperingFit, transforms::MlpNet> state;
  FitDiagnostics diagnostics;
  Index source_neurons = 0;
  Index target_neurons = 0;
};

/// Fits `method` from source to target responses (stimuli x neurons, same
/// stimulus order). `seed` drives CV folds and MLP initialization.
inline FittedMap fit(const MappingMethod& method, const Matrix& source, const Matrix& target, std::uint64_t seed) {
  if (source.rows() != target.rows()) throw DataError("fit: source and target disagree on stimulus count");
  FittedMap m;
  m.kind = method.kind;
  m.hyperparameters = method.hyperparameters();
  m.source_neurons = source.cols();
  m.target_neurons = target.cols();
  switch (method.kind) {
    case MethodKind::ridge: {
      auto r = transforms::fit_ridge(source, target, method.ridge, seed);
      m.state = std::move(r.map);
      m.diagnostics.selected_regularization = r.lambda;
      break;
    }
    case MethodKind::lasso:
    case MethodKind::nonneg_lasso: {
      auto r = transforms::fit_lasso(source, target, method.lasso, seed);
      m.state = std::move(r.map);
      m.diagnostics.selected_regularization = r.alpha;
      m.diagnostics.iterations = r.max_sweeps_used;
      break;
    }
    case MethodKind::soft_matching: {
      auto r = transforms::fit_soft_matching(source, target, method.soft);
      m.state = std::move(r.transport);
      m.diagnostics.iterations = r.iterations;
      m.diagnostics.matching_score = r.score;
      break;
    }
    case MethodKind::exact_zippering:
    case MethodKind::linear_nonlinear: {
      auto r = transforms::fit_exact_zippering(source, target, method.exact);
      m.diagnostics.iterations = r.max_iterations;
      m.diagnostics.converged = r.converged;
      m.diagnostics.selected_regularization = method.exact.ridge_penalty;
      m.state = std::move(r);
      break;
    }
    case MethodKind::approx_zippering: {
      auto r = transforms::fit_approx_zippering(source, target, method.approx);
      m.diagnostics.iterations = r.max_iterations;
      m.diagnostics.converged = r.converged;
      m.diagnostics.selected_regularization = method.approx.ridge_penalty;
      m.state = std::move(r);
      break;
    }
    case MethodKind::mlp: {
      auto r = transforms::fit_mlp(source, target, method.mlp, seed);
      m.diagnostics.iterations = method.mlp.epochs;
      m.state = std::move(r.net);
      break;
    }
  }
  return m;
}

inline Matrix predict(const FittedMap& m, const Matrix& source) {
  if (source.cols() != m.source_neurons)
    throw DataError("predict: map expects " + std::to_string(m.source_neurons) + " source neurons, got " +
                    std::to_string(source.cols()));
  return std::visit(
      [&source](const auto& s) -> Matrix {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, transforms::TransportPlan>)
          return transforms::predict_soft_matching(s, source);
        else
          return s.predict(source);
      },
      m.state);
}

// ---------------------------------------------------------------------------
// JSON


inline json to_json(const FittedMap& m) {
  using namespace iatc::transforms;
  json j;
  j["kind"] = to_string(m.kind);
  j["hyperparameters"] = m.hyperparameters;
  j["source_neurons"] = m.source_neurons;
  j["target_neurons"] = m.target_neurons;
  json d = {{"iterations", m.diagnostics.iterations}, {"converged", m.diagnostics.converged}};
  d["selected_regularization"] = m.diagnostics.selected_regularization ? json(*m.diagnostics.selected_regularization) : json(nullptr);
  if (m.diagnostics.matching_score) d["matching_score"] = *m.diagnostics.matching_score;
  j["diagnostics"] = d;
  json w;
  std::visit(
      [&w](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LinearMap>) {
          w["weights"] = json_io::matrix_to_json(s.weights);
          w["intercept"] = json_io::vector_to_json(s.intercept);
        } else if constexpr (std::is_same_v<T, TransportPlan>) {
          w["transport"] = json_io::matrix_to_json(s.plan);
          w["correlation"] = json_io::matrix_to_json(s.correlation);
          w["source_mean"] = json_io::vector_to_json(s.source_mean);
          w["source_std"] = json_io::vector_to_json(s.source_std);
          w["target_mean"] = json_io::vector_to_json(s.target_mean);
          w["target_std"] = json_io::vector_to_json(s.target_std);
        } else if constexpr (std::is_same_v<T, ZipperingFit>) {
          w["weights"] = json_io::matrix_to_json(s.weights);
          w["intercept"] = json_io::vector_to_json(s.intercept);
          w["link"] = {{"kind", s.link.name()}, {"scale", s.link.scale}};
          w["unscale"] = s.unscale;
          const char* pre = s.preprocess == ZipperingFit::Preprocess::softplus_inverse ? "softplus_inverse"
                            : s.preprocess == ZipperingFit::Preprocess::power_transform ? "power_transform"
                                                                                         : "none";
          w["preprocess"] = pre;
          if (s.power) {
            json p = json::array();
            for (const auto& yj : s.power->params)
              p.push_back(json{{"lambda", yj.lambda}, {"post_mean", yj.post_mean}, {"post_std", yj.post_std}});
            w["power_transform"] = p;
          }
        } else {
          json layers = json::array();
          for (const auto& l : s.layers)
            layers.push_back(json{{"weights", json_io::matrix_to_json(l.weights)}, {"bias", json_io::vector_to_json(l.bias)}});
          w["layers"] = layers;
          w["in_mean"] = json_io::vector_to_json(s.in_mean);
          w["in_std"] = json_io::vector_to_json(s.in_std);
          w["out_mean"] = json_io::vector_to_json(s.out_mean);
          w["out_std"] = json_io::vector_to_json(s.out_std);
        }
      },
      m.state);
  j["weights"] = w;
  return j;
}

inline FittedMap fitted_map_from_json(const json& j) {
  using namespace iatc::transforms;
  FittedMap m;
  try {
    const auto kind = method_from_string(j.at("kind").get<std::string>());
    if (!kind) throw DataError("unknown map kind");
    m.kind = *kind;
    m.hyperparameters = j.at("hyperparameters");
    m.source_neurons = j.at("source_neurons").get<Index>();
    m.target_neurons = j.at("target_neurons").get<Index>();
    const json& d = j.at("diagnostics");
    m.diagnostics.iterations = d.at("iterations").get<int>();
    m.diagnostics.converged = d.at("converged").get<bool>();
    if (!d.at("selected_regularization").is_null())
      m.diagnostics.selected_regularization = d.at("selected_regularization").get<double>();
    if (d.contains("matching_score")) m.diagnostics.matching_score = d.at("matching_score").get<double>();
    const json& w = j.at("weights");
    switch (m.kind) {
      case MethodKind::ridge:
      case MethodKind::lasso:
      case MethodKind::nonneg_lasso:
        m.state = LinearMap{json_io::matrix_from_json(w.at("weights")), json_io::vector_from_json(w.at("intercept"))};
        break;
      case MethodKind::soft_matching: {
        TransportPlan tp;
        tp.plan = json_io::matrix_from_json(w.at("transport"));
        tp.correlation = json_io::matrix_from_json(w.at("correlation"));
        tp.source_mean = json_io::vector_from_json(w.at("source_mean"));
        tp.source_std = json_io::vector_from_json(w.at("source_std"));
        tp.target_mean = json_io::vector_from_json(w.at("target_mean"));
        tp.target_std = json_io::vector_from_json(w.at("target_std"));
        m.state = std::move(tp);
        break;
      }
      case MethodKind::exact_zippering:
      case MethodKind::linear_nonlinear:
      case MethodKind::approx_zippering: {
        ZipperingFit z;
        z.weights = json_io::matrix_from_json(w.at("weights"));
        z.intercept = json_io::vector_from_json(w.at("intercept"));
        const auto link = w.at("link").at("kind").get<std::string>();
        z.link = link == "exponential" ? glm::InverseLink::exponential()
                                       : glm::InverseLink::softplus(w.at("link").at("scale").get<double>());
        z.unscale = w.at("unscale").get<double>();
        const auto pre = w.at("preprocess").get<std::string>();
        z.preprocess = pre == "softplus_inverse"  ? ZipperingFit::Preprocess::softplus_inverse
                       : pre == "power_transform" ? ZipperingFit::Preprocess::power_transform
                                                  : ZipperingFit::Preprocess::none;
        if (w.contains("power_transform")) {
          PowerTransform pt;
          for (const auto& p : w.at("power_transform"))
            pt.params.push_back(YeoJohnsonParams{p.at("lambda").get<double>(), p.at("post_mean").get<double>(), p.at("post_std").get<double>()});
          z.power = std::move(pt);
        }
        z.max_iterations = m.diagnostics.iterations;
        z.converged = m.diagnostics.converged;
        m.state = std::move(z);
        break;
      }
      case MethodKind::mlp: {
        MlpNet net;
        for (const auto& l : w.at("layers"))
          net.layers.push_back(DenseLayer{json_io::matrix_from_json(l.at("weights")), json_io::vector_from_json(l.at("bias"))});
        net.in_mean = json_io::vector_from_json(w.at("in_mean"));
        net.in_std = json_io::vector_from_json(w.at("in_std"));
        net.out_mean = json_io::vector_from_json(w.at("out_mean"));
        net.out_std = json_io::vector_from_json(w.at("out_std"));
        m.state = std::move(net);
        break;
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("fitted map JSON: ") + e.what());
  }
  return m;
}

}  // namespace iatc
