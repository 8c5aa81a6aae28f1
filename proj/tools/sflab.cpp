// sflab: datasets, training runs, kernel reports and verification experiments.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error (bad flags, invalid
// argument values, step size above the stability cap), 3 verify finished but
// some claim failed.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sflab/dataset.hpp"
#include "sflab/errors.hpp"
#include "sflab/gradient_flow.hpp"
#include "sflab/manifest.hpp"
#include "sflab/network.hpp"
#include "sflab/ntk_kernel.hpp"
#include "sflab/theory_harness.hpp"

using nlohmann::json;
using namespace sflab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitClaimFailed = 3;

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

void emit_summary(const std::optional<std::string>& path, const json& doc) {
  const std::string text = doc.dump(2) + "\n";
  if (path) write_file(*path, text);
  else std::cout << text;
}

// Puts "# manifest <digest>" right after the magic line of a dataset or
// checkpoint document.
std::string stamp_after_magic(const std::string& text, const std::string& digest) {
  const auto eol = text.find('\n');
  return text.substr(0, eol + 1) + "# manifest " + digest + "\n" + text.substr(eol + 1);
}

struct Run {
  RunManifest manifest;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void finish() {
    manifest.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

json separation_json(const SeparationReport& r) {
  return json{{"delta1", r.delta1},
              {"delta1_hat", r.delta1_hat},
              {"delta2", r.delta2},
              {"gamma", r.gamma},
              {"satisfies_assumption1", r.satisfies_assumption1},
              {"satisfies_assumption2", r.satisfies_assumption2},
              {"singleton_convention", r.singleton_convention}};
}

// ---- generate ----

struct GenerateArgs {
  std::size_t n = 8, d = 16, k = 2;
  std::string target = "quadratic";
  std::uint64_t seed = 0;
  double tilt = 0.0;
  double antipodal_gap = 0.0;
  double min_separation = 0.05;
  std::string out;
  std::optional<std::string> summary;
};

int cmd_generate(const GenerateArgs& a, Run& run) {
  GenerateOptions opt;
  opt.tilt = a.tilt;
  opt.antipodal_gap = a.antipodal_gap;
  opt.min_separation = a.min_separation;
  const TargetKind target = parse_target_kind(a.target);
  const json config{{"command", "generate"}, {"n", a.n},           {"d", a.d},
                    {"k", a.k},              {"target", a.target}, {"seed", a.seed},
                    {"tilt", a.tilt},        {"antipodal_gap", a.antipodal_gap},
                    {"min_separation", a.min_separation}};
  const TrainingSet ts = generate(a.n, a.d, a.k, target, a.seed, opt);
  run.manifest.config_digest = config_digest(config);
  run.manifest.seeds = {a.seed};
  run.manifest.artifacts = {a.out};
  write_file(a.out, stamp_after_magic(serialize(ts), run.manifest.config_digest));
  run.finish();
  emit_summary(a.summary, json{{"manifest", to_json(run.manifest)},
                               {"config", config},
                               {"report", separation_json(validate(ts))},
                               {"records_path", a.out}});
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string dataset;
  std::size_t m = 4096;
  double eta = 0.05;
  std::size_t steps = 4000;
  bool bias = false;
  std::uint64_t seed = 0;
  std::size_t log_every = 10;
  std::size_t kernel_log_every = 50;
  std::string integrator = "euler";
  bool allow_large_step = false;
  bool no_monotone_check = false;
  std::size_t mc_samples = 1'000'000;
  unsigned threads = 1;
  std::string out;
  std::optional<std::string> summary;
  std::optional<std::string> checkpoint;
};

int cmd_train(const TrainArgs& a, Run& run) {
  const std::string data_text = read_file(a.dataset);
  const TrainingSet ts = parse_training_set(data_text);
  const Integrator integrator = parse_integrator(a.integrator);
  if (a.m < 1) throw InvalidInputError("--m must be positive");
  if (a.mc_samples != 0 && a.mc_samples < kMinMonteCarloSamples) {
    throw InvalidInputError("--mc-samples must be 0 or at least 10000");
  }
  const json config{{"command", "train"},
                    {"dataset", a.dataset},
                    {"dataset_digest", fnv1a_hex(data_text)},
                    {"m", a.m},
                    {"eta", a.eta},
                    {"steps", a.steps},
                    {"bias", a.bias},
                    {"seed", a.seed},
                    {"log_every", a.log_every},
                    {"kernel_log_every", a.kernel_log_every},
                    {"integrator", a.integrator},
                    {"allow_large_step", a.allow_large_step},
                    {"monotone_check", !a.no_monotone_check},
                    {"mc_samples", a.mc_samples}};
  run.manifest.config_digest = config_digest(config);
  run.manifest.seeds = {a.seed};
  run.manifest.artifacts = {a.out};
  if (a.checkpoint) run.manifest.artifacts.push_back(*a.checkpoint);

  std::optional<HInfinityEstimate> hinf;
  if (a.mc_samples > 0) {
    std::optional<BiasScaling> bs;
    if (a.bias) bs = bias_scaling(ts.k);
    hinf = estimate_h_infinity(ts, {a.mc_samples, a.seed, a.threads}, bs);
  }

  FlowConfig fc;
  fc.eta = a.eta;
  fc.steps = a.steps;
  fc.log_every = a.log_every;
  fc.kernel_log_every = a.kernel_log_every;
  fc.integrator = integrator;
  fc.seed = a.seed;
  fc.allow_large_step = a.allow_large_step;
  fc.check_monotone = !a.no_monotone_check;
  if (hinf && hinf->lambda_min > 0.0) fc.lambda_star = hinf->lambda_min;

  const NetParams p0 = init(a.m, ts.d, ts.k, a.bias, a.seed);
  const FlowResult fr = run_flow(p0, ts, fc);

  std::ostringstream csv;
  write_trajectory_csv(csv, fr.records);
  csv << "# manifest " << run.manifest.config_digest << "\n";
  write_file(a.out, csv.str());
  if (a.checkpoint) {
    write_file(*a.checkpoint, stamp_after_magic(serialize(fr.final_params), run.manifest.config_digest));
  }

  const auto& first = fr.records.front();
  const auto& last = fr.records.back();
  json flow{{"initial_loss", first.loss},
            {"final_loss_ratio", first.loss > 0.0 ? last.loss / first.loss : 0.0},
            {"lambda_max_h0", fr.lambda_max_h0},
            {"eta_cap", num(fr.eta_cap)},
            {"loss_increases", fr.loss_increases},
            {"gradient_bound_violations", fr.gradient_bound_violations},
            {"max_drift", last.max_drift}};
  if (hinf) {
    flow["lambda_star"] = hinf->lambda_min;
    flow["lambda_star_std_error"] = hinf->lambda_min_std_error;
    flow["tau0"] = num(escape_monitor(fr.records, hinf->lambda_min));
    if (first.R_bound) flow["R_bound"] = *first.R_bound;
  }
  if (fc.kernel_log_every > 0) {
    const DecayCertificate cert = decay_certificate(fr.records);
    flow["decay_certificate"] = {{"lambda_hat", cert.lambda_hat_rate},
                                 {"pass", cert.pass},
                                 {"worst_ratio", cert.worst_ratio}};
  }
  run.finish();
  emit_summary(a.summary, json{{"manifest", to_json(run.manifest)},
                               {"config", config},
                               {"final_loss", last.loss},
                               {"flow", flow},
                               {"records_path", a.out}});
  return kExitOk;
}

// ---- kernel ----

struct KernelArgs {
  std::string dataset;
  std::size_t mc_samples = 1'000'000;
  std::uint64_t seed = 0;
  bool bias = false;
  unsigned threads = 1;
  std::string out;
};

int cmd_kernel(const KernelArgs& a, Run& run) {
  const std::string data_text = read_file(a.dataset);
  const TrainingSet ts = parse_training_set(data_text);
  const json config{{"command", "kernel"},      {"dataset", a.dataset}, {"dataset_digest", fnv1a_hex(data_text)},
                    {"mc_samples", a.mc_samples}, {"seed", a.seed},     {"bias", a.bias}};
  run.manifest.config_digest = config_digest(config);
  run.manifest.seeds = {a.seed};
  run.manifest.artifacts = {a.out};

  const MonteCarloOptions mc{a.mc_samples, a.seed, a.threads};
  const KernelSpectrumReport r = spectrum_report(ts, mc);
  json report{{"lambda_min_estimate", r.lambda_min_estimate},
              {"mc_samples", r.mc_samples},
              {"seed", r.seed},
              {"std_error", r.std_error},
              {"prop1_bound", r.prop1_bound ? json(*r.prop1_bound) : json(nullptr)},
              {"bound_satisfied", r.bound_satisfied},
              {"margin_policy", "lambda_min_estimate + 3 std_error >= prop1_bound"},
              {"singleton_convention", r.singleton_convention},
              {"separation", separation_json(r.separation)}};
  if (a.bias) {
    const BiasScaling bs = bias_scaling(ts.k);
    const HInfinityEstimate h = estimate_h_infinity(ts, mc, bs);
    json t2{{"alpha", bs.alpha},
            {"beta", bs.beta},
            {"lambda_min_estimate", h.lambda_min},
            {"std_error", h.lambda_min_std_error}};
    if (r.separation.satisfies_assumption2) {
      const double bound = theorem2_bound(r.separation, ts.n, ts.k, bs.alpha, bs.beta);
      t2["theorem2_bound"] = bound;
      t2["bound_satisfied"] = h.lambda_min + 3.0 * h.lambda_min_std_error >= bound;
    } else {
      t2["theorem2_bound"] = nullptr;
      t2["bound_satisfied"] = false;
    }
    report["bias"] = t2;
  }
  run.finish();
  write_file(a.out, json{{"manifest", to_json(run.manifest)}, {"config", config}, {"report", report}}.dump(2) + "\n");
  return kExitOk;
}

// ---- verify ----

struct VerifyArgs {
  std::optional<std::string> experiment;
  std::optional<std::string> config_path;
  std::string out;
  std::optional<std::size_t> n, d, k, m, steps, mc_samples, log_every, kernel_log_every;
  std::optional<double> eta, delta, m_multiplier;
  std::optional<std::string> integrator, target;
  std::vector<std::uint64_t> seeds;
  std::optional<unsigned> threads;
};

int cmd_verify(const VerifyArgs& a, Run& run) {
  ExperimentConfig cfg;
  if (a.config_path) {
    json j;
    try {
      j = json::parse(read_file(*a.config_path));
    } catch (const json::parse_error& e) {
      throw InvalidInputError("config '" + *a.config_path + "': " + e.what());
    }
    // A bad config is a usage error, not a runtime failure.
    try {
      cfg = config_from_json(j);
    } catch (const ParseError& e) {
      throw InvalidInputError(e.what());
    }
  } else if (!a.experiment) {
    throw InvalidInputError("verify needs --experiment or a config file naming one");
  }
  if (a.experiment) cfg.which = parse_experiment(*a.experiment);
  if (a.n) cfg.n = *a.n;
  if (a.d) cfg.d = *a.d;
  if (a.k) cfg.k = *a.k;
  if (a.m) cfg.m = *a.m;
  if (a.steps) cfg.steps = *a.steps;
  if (a.mc_samples) cfg.mc_samples = *a.mc_samples;
  if (a.log_every) cfg.log_every = *a.log_every;
  if (a.kernel_log_every) cfg.kernel_log_every = *a.kernel_log_every;
  if (a.eta) cfg.eta = *a.eta;
  if (a.delta) cfg.delta = *a.delta;
  if (a.m_multiplier) cfg.m_multiplier = *a.m_multiplier;
  if (a.integrator) cfg.integrator = parse_integrator(*a.integrator);
  if (a.target) cfg.target = parse_target_kind(*a.target);
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (a.threads) cfg.threads = *a.threads;
  cfg.check();

  const json config = to_json(cfg);
  run.manifest.config_digest = config_digest(config);
  run.manifest.artifacts = {a.out};
  const Verdict v = run_experiment(cfg);
  run.manifest.seeds = v.seeds;
  run.finish();
  write_file(a.out, json{{"manifest", to_json(run.manifest)}, {"config", config}, {"verdicts", json::array({to_json(v)})}}
                            .dump(2) +
                        "\n");
  std::size_t failed = 0;
  for (const auto& c : v.claims) {
    if (!c.pass) {
      ++failed;
      std::cerr << "FAIL " << c.name << " " << c.measured.dump() << "\n";
    }
  }
  std::cerr << v.experiment << ": " << v.claims.size() - failed << "/" << v.claims.size() << " claims pass\n";
  return v.passed() ? kExitOk : kExitClaimFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sobolev training of two-layer ReLU networks: data, flows, kernels and checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a seeded training set");
  gen->add_option("--n", ga.n, "Sample count")->capture_default_str();
  gen->add_option("--d", ga.d, "Input dimension")->capture_default_str();
  gen->add_option("--k", ga.k, "Directions per sample")->capture_default_str();
  gen->add_option("--target", ga.target, "random_labels | quadratic | teacher_mlp")->capture_default_str();
  gen->add_option("--seed", ga.seed)->capture_default_str();
  gen->add_option("--tilt", ga.tilt, "|v_ij^T x_i| of every direction")->capture_default_str();
  gen->add_option("--antipodal-gap", ga.antipodal_gap, "Put x_1 at this distance from -x_0 (0 = off)")
      ->capture_default_str();
  gen->add_option("--min-separation", ga.min_separation, "Rejection floor on antipodal separation")
      ->capture_default_str();
  gen->add_option("--out", ga.out, "Dataset file")->required();
  gen->add_option("--summary", ga.summary, "Summary JSON (default: stdout)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run the discretized gradient flow and log a trajectory");
  train->add_option("--dataset", ta.dataset)->required();
  train->add_option("--m", ta.m, "Width")->capture_default_str();
  train->add_option("--eta", ta.eta, "Step size")->capture_default_str();
  train->add_option("--steps", ta.steps)->capture_default_str();
  train->add_flag("--bias", ta.bias, "Train the bias network");
  train->add_option("--seed", ta.seed, "Initialization and Monte-Carlo seed")->capture_default_str();
  train->add_option("--log-every", ta.log_every)->capture_default_str();
  train->add_option("--kernel-log-every", ta.kernel_log_every, "0 = never")->capture_default_str();
  train->add_option("--integrator", ta.integrator, "euler | heun")->capture_default_str();
  train->add_flag("--allow-large-step", ta.allow_large_step, "Accept eta above 1/(2 lambda_max(H(0)))");
  train->add_flag("--no-monotone-check", ta.no_monotone_check, "Do not abort when the loss increases");
  train->add_option("--mc-samples", ta.mc_samples, "Samples for lambda_star (0 = skip R and tau0)")
      ->capture_default_str();
  train->add_option("--threads", ta.threads, "Monte-Carlo workers (0 = all cores)")->capture_default_str();
  train->add_option("--out", ta.out, "Trajectory CSV")->required();
  train->add_option("--summary", ta.summary, "Summary JSON (default: stdout)");
  train->add_option("--checkpoint", ta.checkpoint, "Write the final parameters here");

  KernelArgs ka;
  auto* kernel = app.add_subcommand("kernel", "Estimate lambda_min(H-infinity) and compare with the bounds");
  kernel->add_option("--dataset", ka.dataset)->required();
  kernel->add_option("--mc-samples", ka.mc_samples)->capture_default_str();
  kernel->add_option("--seed", ka.seed)->capture_default_str();
  kernel->add_flag("--bias", ka.bias, "Also estimate the bias-network kernel");
  kernel->add_option("--threads", ka.threads, "Workers (0 = all cores)")->capture_default_str();
  kernel->add_option("--out", ka.out, "Report JSON")->required();

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run a verification experiment and write its verdict");
  verify->add_option("--experiment", va.experiment, "theorem1 | theorem2 | prop1 | lemmas");
  verify->add_option("--config", va.config_path, "JSON config; flags below override its keys");
  verify->add_option("--out", va.out, "Verdict JSON")->required();
  verify->add_option("--n", va.n);
  verify->add_option("--d", va.d);
  verify->add_option("--k", va.k);
  verify->add_option("--m", va.m);
  verify->add_option("--m-multiplier", va.m_multiplier);
  verify->add_option("--eta", va.eta);
  verify->add_option("--steps", va.steps);
  verify->add_option("--log-every", va.log_every);
  verify->add_option("--kernel-log-every", va.kernel_log_every);
  verify->add_option("--integrator", va.integrator);
  verify->add_option("--target", va.target);
  verify->add_option("--delta", va.delta);
  verify->add_option("--mc-samples", va.mc_samples);
  verify->add_option("--seeds", va.seeds, "Comma-separated seed list")->delimiter(',');
  verify->add_option("--threads", va.threads, "Workers (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Run run;
  run.manifest.command_line.assign(argv, argv + argc);
  try {
    if (*gen) return cmd_generate(ga, run);
    if (*train) return cmd_train(ta, run);
    if (*kernel) return cmd_kernel(ka, run);
    if (*verify) return cmd_verify(va, run);
  } catch (const StepSizeError& e) {
    std::cerr << "sflab: " << e.what() << " (pass --allow-large-step to override)\n";
    return kExitUsage;
  } catch (const InvalidInputError& e) {
    std::cerr << "sflab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "sflab: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
