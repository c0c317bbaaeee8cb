#pragma once

#include <optional>
#include <string>

#include "iatc/core.hpp"
#include "iatc/glm.hpp"
#include "iatc/numeric.hpp"
#include "iatc/power_transform.hpp"

namespace iatc::transforms {

struct ExactZipperingOptions {
  double scale = 100.0;  // softplus output scale c of the responses
  double ridge_penalty = glm::kMinRidge;
  bool invert_source = true;
  int max_iter = 100;
  double tol = 1e-8;
};

struct ApproxZipperingOptions {
  double ridge_penalty = glm::kMinRidge;
  int max_iter = 100;
  double tol = 1e-8;
};

/// Per-target-neuron Poisson GLMs on (optionally preprocessed) source
/// responses.
struct ZipperingFit {
  enum class Preprocess { softplus_inverse, power_transform, none };
  Preprocess preprocess = Preprocess::none;
  double unscale = 1.0;  // source is divided by this before inversion
  std::optional<PowerTransform> power;
  glm::InverseLink link;
  Matrix weights;    // source neurons x target neurons
  Vector intercept;  // per target neuron
  int max_iterations = 0;
  bool converged = true;

  Matrix features(const Matrix& source) const {
    switch (preprocess) {
      case Preprocess::softplus_inverse: {
        Matrix out(source.rows(), source.cols());
        for (Index i = 0; i < source.rows(); ++i)
          for (Index j = 0; j < source.cols(); ++j) {
            const double v = source(i, j) / unscale;
            if (!(v > 0.0))
              throw DomainError("exact zippering: nonpositive source response at stimulus " + std::to_string(i) +
                                ", neuron " + std::to_string(j));
            out(i, j) = stable_softplus_inverse(v);
          }
        return out;
      }
      case Preprocess::power_transform: return power->apply(source);
      case Preprocess::none: return source;
    }
    return source;
  }

  Matrix predict(const Matrix& source) const {
    if (source.cols() != weights.rows())
      throw DataError("zippering map expects " + std::to_string(weights.rows()) + " source neurons, got " +
                      std::to_string(source.cols()));
    Matrix eta = features(source) * weights;
    eta.rowwise() += intercept.transpose();
    return eta.unaryExpr([this](double e) { return link.mu(e); });
  }
};

namespace detail {

inline void fit_glms(ZipperingFit& fit, const Matrix& features, const Matrix& target, const glm::GlmOptions& opt) {
  fit.weights.resize(features.cols(), target.cols());
  fit.intercept.resize(target.cols());
  for (Index j = 0; j < target.cols(); ++j) {
    glm::GlmFit g;
    try {
      g = glm::irls_fit(features, target.col(j), fit.link, opt);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("target neuron " + std::to_string(j) + ": " + e.what(), e.trace());
    } catch (const DomainError& e) {
      throw DomainError("target neuron " + std::to_string(j) + ": " + e.what());
    }
    fit.weights.col(j) = g.weights;
    fit.intercept(j) = g.intercept;
    fit.max_iterations = std::max(fit.max_iterations, g.iterations);
    fit.converged = fit.converged && g.converged;
  }
}

}  // namespace detail

/// Invert the source softplus (after dividing by c), then a Poisson GLM per
/// target neuron with inverse link c * softplus. With invert_source = false
/// the source is used as-is.
inline ZipperingFit fit_exact_zippering(const Matrix& source, const Matrix& target, const ExactZipperingOptions& opt = {}) {
  if (source.rows() != target.rows()) throw DataError("exact zippering: stimulus count mismatch");
  ZipperingFit fit;
  fit.link = glm::InverseLink::softplus(opt.scale);
  fit.unscale = opt.scale;
  fit.preprocess = opt.invert_source ? ZipperingFit::Preprocess::softplus_inverse : ZipperingFit::Preprocess::none;
  const Matrix features = fit.features(source);
  detail::fit_glms(fit, features, target, {opt.ridge_penalty, opt.max_iter, opt.tol});
  return fit;
}

/// Yeo-Johnson power transform fitted on the training source, then a
/// log-link Poisson GLM per target neuron.
inline ZipperingFit fit_approx_zippering(const Matrix& source, const Matrix& target, const ApproxZipperingOptions& opt = {}) {
  if (source.rows() != target.rows()) throw DataError("approximate zippering: stimulus count mismatch");
  ZipperingFit fit;
  fit.link = glm::InverseLink::exponential();
  fit.preprocess = ZipperingFit::Preprocess::power_transform;
  fit.power = PowerTransform::fit(source);
  const Matrix features = fit.features(source);
  detail::fit_glms(fit, features, target, {opt.ridge_penalty, opt.max_iter, opt.tol});
  return fit;
}

}  // namespace iatc::transforms
