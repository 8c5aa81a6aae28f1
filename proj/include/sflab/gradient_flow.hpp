#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sflab/dataset.hpp"
#include "sflab/errors.hpp"
#include "sflab/network.hpp"
#include "sflab/ntk_kernel.hpp"
#include "sflab/sobolev_loss.hpp"

namespace sflab {

enum class Integrator { kEuler, kHeun };

Integrator parse_integrator(const std::string& name);
std::string to_string(Integrator integrator);

struct FlowConfig {
  double eta = 0.01;            // step size in flow time
  std::size_t steps = 1;
  std::size_t log_every = 1;
  std::size_t kernel_log_every = 50;  // 0 disables kernel logging
  Integrator integrator = Integrator::kEuler;
  std::uint64_t seed = 0;
  /// Accept eta above the stability cap 1/(2 λ_max(H(0))).
  bool allow_large_step = false;
  /// Abort when the loss increases between two consecutive steps.
  bool check_monotone = true;
  /// λ̂* used for the Lemma 4 radius R; R_bound stays empty without it.
  std::optional<double> lambda_star;
};

/// One logged point of a trajectory.
struct TrajectoryRecord {
  std::size_t step = 0;
  double t = 0.0;
  double loss = 0.0;
  double e_norm = 0.0;
  double S_norm = 0.0;
  double r_sq = 0.0;
  double max_drift = 0.0;  // max_r ‖w_r(t) − w_r(0)‖ (over (w_r, b_r) with bias)
  std::optional<double> R_bound;
  std::optional<double> kernel_drift;  // ‖H(t) − H(0)‖_F
  std::optional<double> lambda_min_H;
  std::size_t flip_count = 0;  // (i, r) pairs whose activation differs from t = 0
};

struct FlowResult {
  NetParams final_params;
  std::vector<TrajectoryRecord> records;
  double lambda_max_h0 = 0.0;
  double eta_cap = 0.0;
  /// Steps whose loss exceeded the previous one (beyond rounding slack).
  std::size_t loss_increases = 0;
  /// Largest relative loss increase over one step.
  double worst_loss_increase = 0.0;
  /// Steps where some gradient row broke ‖∂L/∂w_r‖ ≤ 2√(k'n/m)(‖e‖ + ‖S‖).
  std::size_t gradient_bound_violations = 0;
};

/// Raised when the loss becomes non-finite; carries the last finite record.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, TrajectoryRecord last) : Error(what), last_valid(last) {}
  TrajectoryRecord last_valid;
};

/// Raised by run_flow under check_monotone when the loss goes up.
class MonotonicityError : public Error {
 public:
  using Error::Error;
};

/// 1/(2 λ_max(H)), the largest step the flow accepts without override.
double step_size_cap(const KernelMatrix& h0);

/// Lemma 4 radius (4/λ)·√(k'n/m)·(‖e(0)‖ + ‖S(0)‖) with k' = max(k, 1).
double lemma4_radius(double lambda_star, std::size_t n, std::size_t k, std::size_t m, double e0_norm,
                     double S0_norm);

/// Discretized gradient flow W ← W − η∇L (Heun averages two slopes).
FlowResult run_flow(const NetParams& p0, const TrainingSet& ts, const FlowConfig& cfg);

struct DynamicsProbe {
  double value = 0.0;    // ‖Δr/η + H r‖
  double hr_norm = 0.0;  // ‖H r‖
  bool flipped = false;  // some activation changed inside the substep
};

/// Compares the residual change over one Euler substep of size eta_fd with −H r.
DynamicsProbe dynamics_residual_check(const NetParams& p, const TrainingSet& ts, double eta_fd = 1e-6);

struct DecayCertificate {
  double lambda_hat_rate = 0.0;  // min logged λ_min(H(t))
  bool pass = false;
  double worst_ratio = 0.0;  // max_t r_sq(t) / (exp(−λ̂ t) r_sq(0))
};

/// pass ⇔ r_sq(t) ≤ factor · exp(−λ̂ t) · r_sq(0) at every logged t.
DecayCertificate decay_certificate(std::span<const TrajectoryRecord> records, double factor = 1.05);

bool drift_monitor(std::span<const TrajectoryRecord> records, double lemma4_R);

/// First logged t with kernel drift above λ̂*/4, or +∞.
double escape_monitor(std::span<const TrajectoryRecord> records, double lambda_hat_star);

inline constexpr const char* kTrajectoryCsvHeader =
    "step,t,loss,e_norm,S_norm,r_sq,max_drift,R_bound,kernel_drift,lambda_min_H,flip_count";

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRecord> records);

}  // namespace sflab
