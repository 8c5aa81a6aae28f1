#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sflab/dataset.hpp"
#include "sflab/linalg.hpp"

namespace sflab {

/// Two-layer ReLU network f(W,x) = Σ_r a_r σ(w_rᵀx), or with bias
/// g(W,b,x) = Σ_r a_r σ(α w_rᵀx + β b_r). Output weights a_r = ±1/√m are
/// fixed at initialization and never trained.
struct NetParams {
  std::size_t m = 0;
  std::size_t d = 0;
  Matrix W;  // m × d, row r is w_r
  Vector a;
  bool has_bias = false;
  Vector b;  // empty unless has_bias
  double alpha = 1.0;
  double beta = 0.0;
};

/// Value and directional derivatives at one sample. For the bias network
/// dir_grad is V_iᵀ∇_x g / α.
struct NetOutput {
  double value = 0.0;
  Vector dir_grad;
};

/// Derivatives of the value and directional outputs at one sample with
/// respect to a single neuron's parameters.
struct NeuronJacobian {
  Vector value_w;  // ∂f/∂w_r, d
  Matrix dir_w;    // ∂F̄/∂w_r, d × k (column j is the derivative of output j)
  double value_b = 0.0;
  Vector dir_b;  // k, identically zero because σ'' = 0
};

/// α = 1/(2k) (1/2 when k = 0) and β = √(1 − α²).
double bias_alpha(std::size_t k);

/// Draws W row-major from N(0,1), then the signs of a, then b from N(0,1).
NetParams init(std::size_t m, std::size_t d, std::size_t k, bool has_bias, std::uint64_t seed);

/// Pre-activation of neuron r at x: w_rᵀx, or α w_rᵀx + β b_r.
double preactivation(const NetParams& p, std::size_t r, const Vector& x);

double forward(const NetParams& p, const Vector& x);
Vector input_gradient(const NetParams& p, const Vector& x);
NetOutput directional_output(const NetParams& p, const Vector& x, const Matrix& V);
NeuronJacobian param_jacobian_row(const NetParams& p, const Vector& x, const Matrix& V, std::size_t r);

/// m × n pre-activations for every (neuron, sample) pair.
Matrix preactivations(const NetParams& p, const TrainingSet& ts);

/// Batched directional_output over the whole training set.
std::vector<NetOutput> evaluate(const NetParams& p, const TrainingSet& ts);

void check_compatible(const NetParams& p, const TrainingSet& ts);

std::string serialize(const NetParams& p);
NetParams parse_checkpoint(std::string_view text);
void save_checkpoint(const NetParams& p, const std::filesystem::path& path);
NetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace sflab
