#pragma once

#include "sflab/dataset.hpp"
#include "sflab/network.hpp"

namespace sflab {

/// Value residuals e and derivative residuals S. The stacked vector r places
/// all of e first (indices 0..n−1), then sample i's derivative block at
/// n + i·k .. n + (i+1)·k − 1. Every kernel matrix uses the same order.
struct ResidualState {
  Vector e;
  Vector S;

  Vector stacked() const;
  double squared_norm() const { return e.squaredNorm() + S.squaredNorm(); }
  double loss() const { return 0.5 * squared_norm(); }
};

/// Gradient of L with respect to the trainable parameters (the flow applies
/// its negative).
struct LossGradient {
  Matrix dW;  // m × d
  Vector db;  // m, empty without bias
};

/// e_i = y_i − f(x_i); S_i = h_i − V_iᵀ∇f(x_i), or (h_i − V_iᵀ∇g(x_i))/α with bias.
ResidualState residuals(const NetParams& p, const TrainingSet& ts);

double loss(const NetParams& p, const TrainingSet& ts);

LossGradient loss_gradient(const NetParams& p, const TrainingSet& ts);
/// Same, reusing residuals already computed at p.
LossGradient loss_gradient(const NetParams& p, const TrainingSet& ts, const ResidualState& res);

}  // namespace sflab
