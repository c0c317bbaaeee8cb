#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "iatc/core.hpp"
#include "iatc/numeric.hpp"
#include "iatc/rng.hpp"

namespace iatc::transforms {

struct MlpOptions {
  std::vector<int> hidden_layout = {64, 64, 64};
  int epochs = 200;
  int batch = 64;
  double learning_rate = 1e-3;
};

struct DenseLayer {
  Matrix weights;  // in x out
  Vector bias;     // out
};

/// Fully connected net: softplus on hidden layers, linear output. Inputs and
/// outputs are standardized with training statistics stored alongside.
struct MlpNet {
  std::vector<DenseLayer> layers;
  Vector in_mean, in_std, out_mean, out_std;

  /// Forward pass in standardized units. `pre` and `post` receive per-layer
  /// activations when non-null (post[0] is the input).
  Matrix forward(const Matrix& z, std::vector<Matrix>* pre = nullptr, std::vector<Matrix>* post = nullptr) const {
    Matrix h = z;
    if (post) post->assign(1, h);
    if (pre) pre->clear();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix a = h * layers[l].weights;
      a.rowwise() += layers[l].bias.transpose();
      if (pre) pre->push_back(a);
      if (l + 1 < layers.size())
        h = a.unaryExpr([](double v) { return softplus(v); });
      else
        h = std::move(a);
      if (post) post->push_back(h);
    }
    return h;
  }

  Matrix standardize_input(const Matrix& x) const {
    return ((x.rowwise() - in_mean.transpose()).array().rowwise() / in_std.transpose().array()).matrix();
  }

  Matrix predict(const Matrix& x) const {
    if (x.cols() != in_mean.size())
      throw DataError("mlp expects " + std::to_string(in_mean.size()) + " source neurons, got " + std::to_string(x.cols()));
    Matrix y = forward(standardize_input(x));
    y = (y.array().rowwise() * out_std.transpose().array()).matrix();
    y.rowwise() += out_mean.transpose();
    return y;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  Vector flatten() const {
    Vector v(static_cast<Index>(parameter_count()));
    Index at = 0;
    for (const auto& l : layers) {
      v.segment(at, l.weights.size()) = l.weights.reshaped();
      at += l.weights.size();
      v.segment(at, l.bias.size()) = l.bias;
      at += l.bias.size();
    }
    return v;
  }

  void unflatten(const Vector& v) {
    Index at = 0;
    for (auto& l : layers) {
      l.weights.reshaped() = v.segment(at, l.weights.size());
      at += l.weights.size();
      l.bias = v.segment(at, l.bias.size());
      at += l.bias.size();
    }
  }
};

struct MlpFit {
  MlpNet net;
  std::vector<double> loss_trace;  // mean training loss per epoch
};

/// Mean squared error over all entries of a standardized batch, and its
/// gradient with respect to every parameter (flattened in `MlpNet::flatten`
/// order), by backpropagation.
inline double mlp_loss_gradient(const MlpNet& net, const Matrix& z, const Matrix& target, Vector* grad) {
  std::vector<Matrix> pre, post;
  const Matrix out = net.forward(z, &pre, &post);
  const Matrix diff = out - target;
  const double count = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / count;
  if (!grad) return loss;

  std::vector<DenseLayer> g(net.layers.size());
  Matrix delta = 2.0 * diff / count;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    g[l].weights = post[l].transpose() * delta;
    g[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      const Matrix back = delta * net.layers[l].weights.transpose();
      delta = back.cwiseProduct(pre[l - 1].unaryExpr([](double v) { return sigmoid(v); }));
    }
  }
  grad->resize(static_cast<Index>(net.parameter_count()));
  Index at = 0;
  for (const auto& l : g) {
    grad->segment(at, l.weights.size()) = l.weights.reshaped();
    at += l.weights.size();
    grad->segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return loss;
}

/// Network with LeCun-normal weights and zero biases, drawn from `seed`.
inline MlpNet init_mlp(Index inputs, Index outputs, const std::vector<int>& hidden, std::uint64_t seed) {
  if (hidden.empty()) throw ConfigError("mlp: hidden layout must be nonempty");
  Rng rng(derive_seed(seed, std::uint64_t{0x11A9}));
  std::normal_distribution<double> normal(0.0, 1.0);
  MlpNet net;
  Index fan_in = inputs;
  std::vector<Index> sizes(hidden.begin(), hidden.end());
  sizes.push_back(outputs);
  for (Index width : sizes) {
    if (width < 1) throw ConfigError("mlp: layer widths must be positive");
    DenseLayer layer;
    layer.weights.resize(fan_in, width);
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Index c = 0; c < width; ++c)
      for (Index r = 0; r < fan_in; ++r) layer.weights(r, c) = sd * normal(rng);
    layer.bias = Vector::Zero(width);
    net.layers.push_back(std::move(layer));
    fan_in = width;
  }
  return net;
}

/// Mini-batch training with Adam updates. Deterministic given `seed`.
inline MlpFit fit_mlp(const Matrix& x, const Matrix& y, const MlpOptions& opt, std::uint64_t seed) {
  if (x.rows() != y.rows()) throw DataError("mlp: stimulus count mismatch");
  if (opt.batch < 1 || x.rows() < opt.batch) throw DataError("mlp: fewer training stimuli than the batch size");
  MlpFit fit;
  MlpNet& net = fit.net;
  net = init_mlp(x.cols(), y.cols(), opt.hidden_layout, seed);
  const auto stats = [](const Matrix& m, Vector& mu, Vector& sd) {
    mu = m.colwise().mean();
    sd.resize(m.cols());
    for (Index j = 0; j < m.cols(); ++j) {
      const double s = std::sqrt((m.col(j).array() - mu(j)).square().mean());
      sd(j) = s > 0.0 ? s : 1.0;
    }
  };
  stats(x, net.in_mean, net.in_std);
  stats(y, net.out_mean, net.out_std);
  const Matrix z = net.standardize_input(x);
  const Matrix t = ((y.rowwise() - net.out_mean.transpose()).array().rowwise() / net.out_std.transpose().array()).matrix();

  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  Vector params = net.flatten();
  Vector m1 = Vector::Zero(params.size()), m2 = Vector::Zero(params.size()), grad;
  Rng rng(derive_seed(seed, std::uint64_t{0xBA7C}));
  IndexList order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  long step = 0;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start + static_cast<std::size_t>(opt.batch) <= order.size();
         start += static_cast<std::size_t>(opt.batch)) {
      const IndexList rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(start) + opt.batch);
      const double loss = mlp_loss_gradient(net, take_rows(z, rows), take_rows(t, rows), &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw ConvergenceError("mlp: training diverged at epoch " + std::to_string(epoch), fit.loss_trace);
      ++step;
      m1 = beta1 * m1 + (1.0 - beta1) * grad;
      m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      params.array() -= opt.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + adam_eps);
      net.unflatten(params);
      epoch_loss += loss;
      ++batches;
    }
    fit.loss_trace.push_back(epoch_loss / std::max(batches, 1));
  }
  return fit;
}

}  // namespace iatc::transforms
