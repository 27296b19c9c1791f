#pragma once

// Test-only reference computations. Nothing here calls into the tape, so the
// values they produce are independent checks on the library.

#include <cmath>
#include <functional>
#include <numbers>

#include "ibn/tensor.hpp"

namespace ibn::oracle {

/// Phi(z) = 1/2 + integral_0^z phi(t) dt, composite Simpson with n panels.
inline double normal_cdf_quadrature(double z, int n = 20000) {
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  const double h = z / n;
  double s = pdf(0.0) + pdf(z);
  for (int i = 1; i < n; ++i)
    s += (i % 2 ? 4.0 : 2.0) * pdf(i * h);
  return 0.5 + s * h / 3.0;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// d loss / d p for every entry of `p`, by central differences on a closure.
inline Matrix numeric_gradient(const std::function<double()>& loss, Matrix& p, double h = 1e-6) {
  Matrix g(p.rows(), p.cols());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double saved = p.data()[k];
    p.data()[k] = saved + h;
    const double plus = loss();
    p.data()[k] = saved - h;
    const double minus = loss();
    p.data()[k] = saved;
    g.data()[k] = (plus - minus) / (2.0 * h);
  }
  return g;
}

/// The 1-1-1 sigmoid network h = s(w1 x + b1), o = s(w0 h + b0), E = (o - y)^2 / 2,
/// with its hand-derived chain-rule gradients (dE/do = o - y).
struct TinySigmoidNet {
  double x, y, w1, b1, w0, b0;

  static double s(double z) { return 1.0 / (1.0 + std::exp(-z)); }
  double hidden() const { return s(w1 * x + b1); }
  double out() const { return s(w0 * hidden() + b0); }
  double error() const { return 0.5 * (out() - y) * (out() - y); }

  // output weight and bias
  double d_w0() const { return (out() - y) * out() * (1 - out()) * hidden(); }
  double d_b0() const { return (out() - y) * out() * (1 - out()); }
  // input weight and bias
  double d_w1() const { return d_b0() * w0 * hidden() * (1 - hidden()) * x; }
  double d_b1() const { return d_b0() * w0 * hidden() * (1 - hidden()); }
};

} // namespace ibn::oracle
