#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sflab/dataset.hpp"
#include "sflab/linalg.hpp"
#include "sflab/network.hpp"

namespace sflab {

/// Input scaling of the bias network: pre-activation α wᵀx + β b.
struct BiasScaling {
  double alpha = 1.0;
  double beta = 0.0;
};

BiasScaling bias_scaling(std::size_t k);

/// Columns of the feature matrix Ω(w) in residual stacking order. Column c
/// equals σ'(wᵀpoint_{owner(c)}) · columns.col(c). Without bias the points are
/// the x_i and the columns are x_1..x_n followed by the V_i columns. With bias
/// everything is lifted to ℝ^{d+1}: points (α x_i, β), value columns (α x_i, β),
/// direction columns (v_{i,j}, 0), and w is (w, b).
struct FeatureGeometry {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t dim = 0;
  Matrix points;   // dim × n
  Matrix columns;  // dim × n(k+1)
  std::vector<std::size_t> owner;
  Matrix gram;  // columnsᵀ · columns
};

FeatureGeometry feature_geometry(const TrainingSet& ts, std::optional<BiasScaling> bias = std::nullopt);

/// Ω(w) = [φ_w(x_1) … φ_w(x_n), ψ_w(x_1) … ψ_w(x_n)], d × n(k+1).
Matrix feature_matrix(const Vector& w, const TrainingSet& ts);
Matrix feature_matrix(const Vector& w, const FeatureGeometry& geom);

/// Ω̂(w) = [σ'(wᵀx_1)𝐗_1 … σ'(wᵀx_n)𝐗_n] with 𝐗_i = [x_i, V_i]: the
/// sample-major column permutation of Ω(w).
Matrix hat_feature_matrix(const Vector& w, const TrainingSet& ts);

/// perm[c] = stacked index of sample-major column c, so Ω̂ = Ω(:, perm).
std::vector<std::size_t> sample_major_permutation(std::size_t n, std::size_t k);

/// H with blocks A (n × n), B (n × nk) and C (nk × nk) in stacking order.
struct KernelMatrix {
  std::size_t n = 0;
  std::size_t k = 0;
  SymMatrix H;

  Matrix A() const { return H.matrix().topLeftCorner(n, n); }
  Matrix B() const { return H.matrix().topRightCorner(n, n * k); }
  Matrix C() const { return H.matrix().bottomRightCorner(n * k, n * k); }
};

/// H(p) = Σ_r Ω_rᵀΩ_r, including the a_r factors. With bias the per-neuron
/// features cover (w_r, b_r) jointly.
KernelMatrix kernel_at(const NetParams& p, const TrainingSet& ts);

/// H_r = Ω_rᵀΩ_r for one neuron.
SymMatrix neuron_kernel(const NetParams& p, const TrainingSet& ts, std::size_t r);

/// Monte-Carlo estimate of E_w[Ω(w)ᵀΩ(w)].
struct HInfinityEstimate {
  SymMatrix mean;
  Matrix std_error;  // entrywise standard errors
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double lambda_min = 0.0;
  /// Delta-method standard error of lambda_min: sd(uᵀΩ(w)ᵀΩ(w)u)/√N for the
  /// bottom eigenvector u of the estimate.
  double lambda_min_std_error = 0.0;
};

struct MonteCarloOptions {
  std::size_t samples = 1'000'000;
  std::uint64_t seed = 0;
  /// Worker threads (0 = hardware concurrency). Results do not depend on it.
  unsigned threads = 1;
};

inline constexpr std::size_t kMinMonteCarloSamples = 10'000;
/// Samples per independently seeded chunk.
inline constexpr std::size_t kMonteCarloChunk = 1 << 14;

HInfinityEstimate estimate_h_infinity(const TrainingSet& ts, const MonteCarloOptions& mc,
                                      std::optional<BiasScaling> bias = std::nullopt);

/// The exact w sequence estimate_h_infinity draws for `samples` samples.
std::vector<Vector> monte_carlo_directions(std::size_t dim, std::size_t samples, std::uint64_t seed);

/// [M(w)]_ij = σ'(wᵀx_i)σ'(wᵀx_j).
SymMatrix random_M(const Vector& w, const TrainingSet& ts);

struct MEstimate {
  SymMatrix mean;
  Matrix std_error;
  std::size_t samples = 0;
  double lambda_min = 0.0;
  double lambda_min_std_error = 0.0;
};

MEstimate expected_M(const TrainingSet& ts, const MonteCarloOptions& mc);

/// 𝐗ᵀ𝐗 partitioned into (k+1) × (k+1) blocks 𝐗_αᵀ𝐗_β.
BlockMatrix gram_X(const TrainingSet& ts);
/// 𝐗_iᵀ𝐗_i for one sample.
SymMatrix sample_gram(const TrainingSet& ts, std::size_t i);

/// flatten((𝐗ᵀ𝐗) □ (M(w) ⊗ I_{k+1})).
Matrix hat_gram(const TrainingSet& ts, const Vector& w);

struct FactorizationCheck {
  bool pass = true;
  double max_abs_deviation = 0.0;
};

/// For each w, compares the block-Hadamard form against Ω̂(w)ᵀΩ̂(w) at 1e-12.
FactorizationCheck hat_h_factorization_check(const TrainingSet& ts, std::span<const Vector> ws);

/// Sample means of Ω(w)ᵀΩ(w) and of its block-Hadamard sample-major form.
SymMatrix empirical_gram_mean(const TrainingSet& ts, std::span<const Vector> ws);
SymMatrix empirical_hat_gram_mean(const TrainingSet& ts, std::span<const Vector> ws);

struct KernelSpectrumReport {
  double lambda_min_estimate = 0.0;
  std::size_t mc_samples = 0;
  std::uint64_t seed = 0;
  double std_error = 0.0;
  /// Absent when Assumption-1 separation fails (kδ₂ ≥ 1 or δ₁ = 0).
  std::optional<double> prop1_bound;
  bool bound_satisfied = false;
  bool singleton_convention = false;
  SeparationReport separation;
};

/// Estimates λ_min(H∞) and compares it with (1 − kδ₂)δ₁/(100 n²). The bound
/// counts as satisfied when estimate + 3·std_error reaches it.
KernelSpectrumReport spectrum_report(const TrainingSet& ts, const MonteCarloOptions& mc);

/// (1 − kδ₂)δ₁ / (100 n²); throws AssumptionViolationError when kδ₂ ≥ 1.
double prop1_bound(const SeparationReport& rep, std::size_t n, std::size_t k);

/// min(α δ̂₁, 2β) / (200 n²); throws AssumptionViolationError when δ̂₁ = 0.
double theorem2_bound(const SeparationReport& rep, std::size_t n, std::size_t k, double alpha, double beta);

/// ⌈(32/λ) n(k+1) ln(n(k+1)/δ)⌉.
std::size_t lemma2_width(double lambda_star, std::size_t n, std::size_t k, double delta);

}  // namespace sflab
