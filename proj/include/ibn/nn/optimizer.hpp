#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ibn/errors.hpp"
#include "ibn/tensor.hpp"

namespace ibn::nn {

enum class OptimizerKind { plain_gd, momentum };

/// Reduce-on-plateau learning-rate schedule.
struct PlateauSchedule {
  bool enabled = false;
  double factor = 0.5;
  std::size_t patience = 2;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::plain_gd;
  double eta = 0.1;
  double beta = 0.9; // momentum only
  PlateauSchedule plateau{};
};

/// Gradient descent with optional momentum and plateau-adaptive step size.
///
///   plain:    theta <- theta - eta * g
///   momentum: v <- beta * v + g;  theta <- theta - eta * v
///   plateau:  after `patience` consecutive epochs whose cost does not beat the
///             best seen so far, eta <- eta * factor (the stall count restarts).
class Optimizer {
public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg), eta_(cfg.eta) {
    if (!(cfg.eta > 0.0))
      throw ValidationError("optimizer eta must be positive");
    if (!(cfg.beta >= 0.0 && cfg.beta < 1.0))
      throw ValidationError("momentum beta must lie in [0, 1)");
    if (cfg.plateau.enabled && !(cfg.plateau.factor > 0.0 && cfg.plateau.factor < 1.0))
      throw ValidationError("plateau factor must lie in (0, 1)");
  }

  const OptimizerConfig& config() const noexcept { return cfg_; }
  double eta() const noexcept { return eta_; }
  double best_cost() const noexcept { return best_cost_; }
  std::size_t stall_count() const noexcept { return stall_; }

  void step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
    if (params.size() != grads.size())
      throw ValidationError("optimizer: " + std::to_string(params.size()) + " params but " +
                            std::to_string(grads.size()) + " gradients");
    if (cfg_.kind == OptimizerKind::momentum && velocity_.size() != params.size()) {
      velocity_.clear();
      for (const Matrix* p : params)
        velocity_.emplace_back(p->rows(), p->cols());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Matrix& p = *params[i];
      const Matrix& g = grads[i];
      if (!p.same_shape(g))
        throw ShapeError("optimizer: parameter " + p.shape() + " vs gradient " + g.shape());
      auto pd = p.data();
      auto gd = g.data();
      if (cfg_.kind == OptimizerKind::plain_gd) {
        for (std::size_t k = 0; k < pd.size(); ++k)
          pd[k] -= eta_ * gd[k];
      } else {
        auto vd = velocity_[i].data();
        for (std::size_t k = 0; k < pd.size(); ++k) {
          vd[k] = cfg_.beta * vd[k] + gd[k];
          pd[k] -= eta_ * vd[k];
        }
      }
    }
  }

  /// Reports an epoch's cost to the plateau schedule. Returns true if eta was reduced.
  bool end_epoch(double cost) {
    if (!cfg_.plateau.enabled)
      return false;
    if (cost < best_cost_) {
      best_cost_ = cost;
      stall_ = 0;
      return false;
    }
    if (++stall_ >= cfg_.plateau.patience) {
      eta_ *= cfg_.plateau.factor;
      stall_ = 0;
      return true;
    }
    return false;
  }

private:
  OptimizerConfig cfg_;
  double eta_;
  double best_cost_ = std::numeric_limits<double>::infinity();
  std::size_t stall_ = 0;
  std::vector<Matrix> velocity_;
};

} // namespace ibn::nn
