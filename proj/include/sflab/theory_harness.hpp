#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sflab/dataset.hpp"
#include "sflab/gradient_flow.hpp"

namespace sflab {

enum class Experiment { kTheorem1, kTheorem2, kProp1, kLemmas };

Experiment parse_experiment(const std::string& name);
std::string to_string(Experiment e);

/// Settings shared by every verification experiment. Keys of the JSON config
/// file match the field names ("experiment" for `which`). `threads` only
/// changes the schedule, so to_json leaves it out.
struct ExperimentConfig {
  Experiment which = Experiment::kTheorem1;
  std::size_t n = 8;
  std::size_t d = 16;
  std::size_t k = 2;
  std::size_t m = 4096;
  /// Width multiplier applied to m.
  double m_multiplier = 1.0;
  double eta = 0.05;
  std::size_t steps = 4000;
  std::size_t log_every = 10;
  std::size_t kernel_log_every = 50;
  Integrator integrator = Integrator::kEuler;
  TargetKind target = TargetKind::kQuadratic;
  /// Failure probability for the probabilistic claims.
  double delta = 0.1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t mc_samples = 1'000'000;
  unsigned threads = 1;

  /// theorem2: ‖x_0 + x_1‖ of the injected antipodal pair.
  double antipodal_gap = 0.02;

  /// prop1 / lemmas dataset sweep: dataset j uses the (n, k, tilt) combination
  /// j mod |combinations| and seed sweep_seed + j.
  std::size_t sweep_datasets = 20;
  std::vector<std::size_t> sweep_n{2, 4, 8};
  std::vector<std::size_t> sweep_k{1, 2};
  std::vector<double> sweep_tilt{0.0, 0.3};
  std::uint64_t sweep_seed = 100;

  /// lemmas: dataset for the Lemma 1–3 and Chernoff batteries.
  std::size_t lemma_n = 4;
  std::size_t lemma_d = 8;
  std::size_t lemma_k = 2;
  std::size_t lemma1_m = 100;
  std::size_t lemma1_points = 100;
  /// Initialization seeds 1..lemma_trials for the Lemma 2, Lemma 3 and
  /// Chernoff frequency tests.
  std::size_t lemma_trials = 200;
  std::size_t property_cases = 1000;

  void check() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Reads the keys present in `j` on top of `base`; unknown keys are an error.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});

/// One checked inequality.
struct Claim {
  std::string name;
  std::string inequality;
  nlohmann::json measured;
  std::string margin_policy;
  std::string provenance;
  bool pass = false;
};

struct Verdict {
  std::string experiment;
  std::vector<Claim> claims;
  std::vector<std::string> notes;
  std::vector<std::uint64_t> seeds;
  std::size_t mc_samples = 0;
  double runtime_seconds = 0.0;

  bool passed() const;
  const Claim* find(const std::string& name) const;
  /// Claims whose name starts with `prefix`.
  std::vector<const Claim*> with_prefix(const std::string& prefix) const;
};

nlohmann::json to_json(const Verdict& v);

Verdict verify_theorem1(const ExperimentConfig& cfg);
Verdict verify_theorem2(const ExperimentConfig& cfg);
Verdict verify_prop1(const ExperimentConfig& cfg);
Verdict verify_lemmas(const ExperimentConfig& cfg);
Verdict run_experiment(const ExperimentConfig& cfg);

/// One dataset of the prop1 / lemma sweep.
struct SweepDataset {
  TrainingSet ts;
  double tilt = 0.0;
  std::uint64_t seed = 0;
};

std::vector<SweepDataset> sweep_datasets(const ExperimentConfig& cfg);

/// P[X ≥ x] for X ~ Binomial(trials, p).
double binomial_upper_tail(std::size_t x, std::size_t trials, double p);

/// One-sided 95% test of H0 "failure probability ≤ p": passes unless observing
/// `failures` or more has probability below 0.05 under p.
bool binomial_frequency_test(std::size_t failures, std::size_t trials, double p);

/// Rate implied by the trajectory: min over logged t > 0 of −ln(r_sq(t) / (factor·r_sq(0)))/t.
double pathwise_decay_rate(std::span<const TrajectoryRecord> records, double factor = 1.05);

}  // namespace sflab
