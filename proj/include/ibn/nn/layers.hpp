#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ibn/autograd.hpp"
#include "ibn/errors.hpp"
#include "ibn/nn/activation.hpp"
#include "ibn/rng.hpp"
#include "ibn/tensor.hpp"

namespace ibn::nn {

using autograd::NodeId;
using autograd::Tape;

/// Thresholded neuron: fires (1) iff sum(w_i * x_i) + bias >= threshold.
inline int perceptron_fire(std::span<const double> inputs, std::span<const double> weights,
                           double bias, double threshold) {
  if (inputs.size() != weights.size())
    throw ValidationError("perceptron: " + std::to_string(inputs.size()) + " inputs but " +
                          std::to_string(weights.size()) + " weights");
  double z = bias;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    z += inputs[i] * weights[i];
  return activate(ActivationKind::step(threshold), z) == 1.0 ? 1 : 0;
}

/// Cost (1 / 2n) * sum (pred - target)^2 with n the number of rows.
inline double mse_cost(const Matrix& pred, const Matrix& target) {
  Tape t;
  t.mse(t.constant(pred), t.constant(target));
  return t.forward()(0, 0);
}

struct LinRegGradients {
  double g0 = 0.0; // d C / d theta0
  double g1 = 0.0; // d C / d theta1
};

/// Closed-form gradients of C = (1/2n) sum (theta0 + theta1 x - y)^2.
inline LinRegGradients linreg_gradients(double theta0, double theta1, std::span<const double> xs,
                                        std::span<const double> ys) {
  if (xs.empty())
    throw ValidationError("linreg_gradients: empty data");
  if (xs.size() != ys.size())
    throw ValidationError("linreg_gradients: xs and ys differ in length");
  LinRegGradients g;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = theta0 + theta1 * xs[i] - ys[i];
    g.g0 += r;
    g.g1 += r * xs[i];
  }
  const double n = static_cast<double>(xs.size());
  g.g0 /= n;
  g.g1 /= n;
  return g;
}

/// Weights plus biases of a fully connected stack with the given layer widths.
inline std::size_t count_params(std::span<const std::size_t> layer_sizes) {
  if (layer_sizes.size() < 2)
    throw ValidationError("count_params needs at least two layer sizes");
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i)
    total += layer_sizes[i] * layer_sizes[i + 1] + layer_sizes[i + 1];
  return total;
}

inline std::size_t count_params(std::initializer_list<std::size_t> sizes) {
  return count_params(std::span<const std::size_t>(sizes.begin(), sizes.size()));
}

/// y = activation(x W + b).
struct DenseLayer {
  Matrix weight;                        // in x out
  Matrix bias;                          // 1 x out
  std::optional<ActivationKind> activation;

  DenseLayer() = default;
  DenseLayer(Matrix w, Matrix b, std::optional<ActivationKind> act = std::nullopt)
      : weight(std::move(w)), bias(std::move(b)), activation(act) {
    if (bias.rows() != 1 || bias.cols() != weight.cols())
      throw ShapeError("dense layer: bias " + bias.shape() + " does not fit weight " +
                       weight.shape());
  }

  /// Weights uniform in +-sqrt(1 / fan_in), zero bias.
  static DenseLayer init(std::size_t in, std::size_t out, Rng& rng,
                         std::optional<ActivationKind> act = std::nullopt) {
    const double limit = std::sqrt(1.0 / static_cast<double>(in));
    return {rng.uniform_matrix(in, out, -limit, limit), Matrix(1, out), act};
  }

  std::size_t in_features() const noexcept { return weight.rows(); }
  std::size_t out_features() const noexcept { return weight.cols(); }

  NodeId record(Tape& t, NodeId x, bool trainable = true) const {
    NodeId y = t.add_row(t.matmul(x, t.bind(weight, trainable)), t.bind(bias, trainable));
    return activation ? t.activation(y, *activation) : y;
  }

  Matrix apply(const Matrix& x) const {
    Matrix y = broadcast_add_row(matmul(x, weight), bias);
    return activation ? activate(*activation, y) : y;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

struct LayerNormParams {
  Matrix gamma; // 1 x d
  Matrix beta;  // 1 x d
  double eps = 1e-5;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t d, double eps_ = 1e-5)
      : gamma(1, d, 1.0), beta(1, d, 0.0), eps(eps_) {
    if (!(eps > 0.0))
      throw ValidationError("layer norm eps must be positive");
  }

  std::size_t dim() const noexcept { return gamma.cols(); }

  NodeId record(Tape& t, NodeId x, bool trainable = true) const {
    return t.layer_norm(x, t.bind(gamma, trainable), t.bind(beta, trainable), eps);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

inline Matrix layer_norm(const Matrix& x, const LayerNormParams& p) {
  if (x.cols() != p.dim())
    throw ShapeError("layer_norm: input " + x.shape() + " vs normalised width " +
                     std::to_string(p.dim()));
  Tape t;
  p.record(t, t.frozen(x), false);
  return t.forward();
}

} // namespace ibn::nn
