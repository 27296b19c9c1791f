#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "ibn/errors.hpp"
#include "ibn/tensor.hpp"

namespace ibn::nn {

/// Closed set of elementwise nonlinearities.
struct ActivationKind {
  enum class Tag { step, sigmoid, tanh, relu, gelu };

  Tag tag = Tag::sigmoid;
  double threshold = 0.0; // step only

  static constexpr ActivationKind step(double threshold) { return {Tag::step, threshold}; }
  static constexpr ActivationKind sigmoid() { return {Tag::sigmoid, 0.0}; }
  static constexpr ActivationKind tanh() { return {Tag::tanh, 0.0}; }
  static constexpr ActivationKind relu() { return {Tag::relu, 0.0}; }
  static constexpr ActivationKind gelu() { return {Tag::gelu, 0.0}; }

  friend constexpr bool operator==(ActivationKind, ActivationKind) = default;
};

inline std::string_view to_string(ActivationKind::Tag t) {
  switch (t) {
  case ActivationKind::Tag::step: return "step";
  case ActivationKind::Tag::sigmoid: return "sigmoid";
  case ActivationKind::Tag::tanh: return "tanh";
  case ActivationKind::Tag::relu: return "relu";
  case ActivationKind::Tag::gelu: return "gelu";
  }
  return "?";
}

inline double sigmoid(double z) noexcept {
  if (z >= 0.0)
    return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Standard normal CDF.
inline double normal_cdf(double z) noexcept { return 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2)); }

inline double normal_pdf(double z) noexcept {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Exact (erf-based) GELU: z * Phi(z).
inline double gelu(double z) noexcept { return z * normal_cdf(z); }

inline double activate(ActivationKind kind, double z) noexcept {
  switch (kind.tag) {
  case ActivationKind::Tag::step: return z >= kind.threshold ? 1.0 : 0.0;
  case ActivationKind::Tag::sigmoid: return sigmoid(z);
  case ActivationKind::Tag::tanh: return std::tanh(z);
  case ActivationKind::Tag::relu: return z > 0.0 ? z : 0.0;
  case ActivationKind::Tag::gelu: return gelu(z);
  }
  return z;
}

/// d activate / dz, given the pre-activation z and the output a = activate(z).
/// Non-differentiable points (step everywhere, relu at 0) use subgradient 0.
inline double activation_derivative(ActivationKind kind, double z, double a) noexcept {
  switch (kind.tag) {
  case ActivationKind::Tag::step: return 0.0;
  case ActivationKind::Tag::sigmoid: return a * (1.0 - a);
  case ActivationKind::Tag::tanh: return 1.0 - a * a;
  case ActivationKind::Tag::relu: return z > 0.0 ? 1.0 : 0.0;
  case ActivationKind::Tag::gelu: return normal_cdf(z) + z * normal_pdf(z);
  }
  return 1.0;
}

inline Matrix activate(ActivationKind kind, const Matrix& z) {
  Matrix out = z;
  for (double& v : out.data())
    v = activate(kind, v);
  return out;
}

} // namespace ibn::nn
