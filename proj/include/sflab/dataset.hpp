#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sflab/linalg.hpp"

namespace sflab {

enum class TargetKind { kRandomLabels, kQuadratic, kTeacherMlp };

TargetKind parse_target_kind(std::string_view name);
std::string to_string(TargetKind kind);

/// Samples {x_i, y_i, V_i, h_i}. x_i are unit vectors, each V_i is d × k with
/// orthonormal columns and h_i holds the k directional targets.
struct TrainingSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  std::vector<Vector> x;
  std::vector<double> y;
  std::vector<Matrix> V;
  std::vector<Vector> h;

  /// Stacked label vector y ∈ ℝⁿ.
  Vector labels() const;
  /// Stacked directional targets h ∈ ℝⁿᵏ, sample-major.
  Vector directional_targets() const;
};

/// Measured separation margins of a TrainingSet.
struct SeparationReport {
  double delta1 = 0.0;      // min_{i≠j} min(‖x_i − x_j‖, ‖x_i + x_j‖)
  double delta1_hat = 0.0;  // min_{i≠j} ‖x_i − x_j‖
  double delta2 = 0.0;      // max_{i,j} |v_{i,j}ᵀ x_i|
  double gamma = 0.0;       // ‖y‖ + ‖h‖
  bool satisfies_assumption1 = false;
  bool satisfies_assumption2 = false;
  /// n == 1: pairwise minima are vacuous and set to the sphere diameter 2.
  bool singleton_convention = false;
  std::size_t k = 0;
};

struct GenerateOptions {
  /// |v_{i,j}ᵀ x_i| for every direction; 0 keeps directions orthogonal to x_i.
  double tilt = 0.0;
  /// If positive, sample 1 is replaced by a point at distance `antipodal_gap`
  /// from −x_0 (n ≥ 2). The pair breaks the antipodal floor on purpose.
  double antipodal_gap = 0.0;
  /// Rejection floor on min_{i≠j} min(‖x_i − x_j‖, ‖x_i + x_j‖).
  double min_separation = 0.05;
};

TrainingSet generate(std::size_t n, std::size_t d, std::size_t k, TargetKind target,
                     std::uint64_t seed, const GenerateOptions& options = {});

SeparationReport validate(const TrainingSet& ts);

/// Checks the unit-norm and orthonormality invariants; throws InvalidInputError.
void check_invariants(const TrainingSet& ts);

/// Seeded teacher network f*(x) = Σ_u c_u tanh(g_uᵀx) / √64 used by the
/// teacher_mlp target.
class TeacherMlp {
 public:
  static constexpr std::size_t kHidden = 64;
  TeacherMlp(std::size_t d, std::uint64_t seed);
  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;

 private:
  Matrix g_;  // kHidden × d
  Vector c_;
};

void save(const TrainingSet& ts, const std::filesystem::path& path);
TrainingSet load(const std::filesystem::path& path);
std::string serialize(const TrainingSet& ts);
TrainingSet parse_training_set(std::string_view text);

}  // namespace sflab
