#include "sflab/gradient_flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace sflab {

Integrator parse_integrator(const std::string& name) {
  if (name == "euler") return Integrator::kEuler;
  if (name == "heun") return Integrator::kHeun;
  throw InvalidInputError("unknown integrator '" + name + "'");
}

std::string to_string(Integrator integrator) { return integrator == Integrator::kEuler ? "euler" : "heun"; }

double step_size_cap(const KernelMatrix& h0) {
  const double top = lambda_max(h0.H);
  return top > 0.0 ? 1.0 / (2.0 * top) : std::numeric_limits<double>::infinity();
}

double lemma4_radius(double lambda_star, std::size_t n, std::size_t k, std::size_t m, double e0_norm,
                     double S0_norm) {
  const double kk = static_cast<double>(std::max<std::size_t>(k, 1));
  return 4.0 / lambda_star * std::sqrt(kk * static_cast<double>(n) / static_cast<double>(m)) *
         (e0_norm + S0_norm);
}

namespace {

void apply_step(NetParams& p, const LossGradient& g, double scale) {
  p.W.noalias() -= scale * g.dW;
  if (p.has_bias) p.b.noalias() -= scale * g.db;
}

double max_drift(const NetParams& p, const NetParams& p0) {
  Vector sq = (p.W - p0.W).rowwise().squaredNorm();
  if (p.has_bias) sq += (p.b - p0.b).cwiseAbs2();
  return std::sqrt(sq.maxCoeff());
}

using Pattern = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

Pattern activation_pattern(const NetParams& p, const TrainingSet& ts) {
  return preactivations(p, ts).array() > 0.0;
}

}  // namespace

FlowResult run_flow(const NetParams& p0, const TrainingSet& ts, const FlowConfig& cfg) {
  check_compatible(p0, ts);
  if (!(cfg.eta > 0.0)) throw InvalidInputError("run_flow: eta must be positive");
  if (cfg.steps < 1) throw InvalidInputError("run_flow: steps must be at least 1");
  if (cfg.log_every < 1) throw InvalidInputError("run_flow: log_every must be at least 1");

  FlowResult result;
  const KernelMatrix h0 = kernel_at(p0, ts);
  result.lambda_max_h0 = lambda_max(h0.H);
  result.eta_cap = step_size_cap(h0);
  if (cfg.eta > result.eta_cap && !cfg.allow_large_step) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "step size %.6g exceeds the stability cap 1/(2 lambda_max(H(0))) = %.6g",
                  cfg.eta, result.eta_cap);
    throw StepSizeError(buf);
  }

  const Pattern pattern0 = activation_pattern(p0, ts);
  NetParams p = p0;
  ResidualState res = residuals(p, ts);
  const double loss0 = res.loss();
  std::optional<double> radius;
  if (cfg.lambda_star) {
    radius = lemma4_radius(*cfg.lambda_star, ts.n, ts.k, p.m, res.e.norm(), res.S.norm());
  }
  const double loss_floor = 1e-28 * std::max(1.0, loss0);

  auto make_record = [&](std::size_t step) {
    TrajectoryRecord rec;
    rec.step = step;
    rec.t = static_cast<double>(step) * cfg.eta;
    rec.loss = res.loss();
    rec.e_norm = res.e.norm();
    rec.S_norm = res.S.norm();
    rec.r_sq = rec.e_norm * rec.e_norm + rec.S_norm * rec.S_norm;
    rec.max_drift = max_drift(p, p0);
    rec.R_bound = radius;
    rec.flip_count = static_cast<std::size_t>((activation_pattern(p, ts) != pattern0).count());
    const bool kernel_due =
        cfg.kernel_log_every > 0 && (step % cfg.kernel_log_every == 0 || step == cfg.steps);
    if (kernel_due) {
      const KernelMatrix h = kernel_at(p, ts);
      rec.kernel_drift = frobenius_distance(h.H, h0.H);
      rec.lambda_min_H = lambda_min(h.H);
    }
    return rec;
  };

  auto due = [&](std::size_t step) {
    return step % cfg.log_every == 0 || step == cfg.steps ||
           (cfg.kernel_log_every > 0 && step % cfg.kernel_log_every == 0);
  };

  TrajectoryRecord last = make_record(0);
  result.records.push_back(last);

  const double row_scale =
      2.0 * std::sqrt(static_cast<double>(std::max<std::size_t>(ts.k, 1) * ts.n) / static_cast<double>(p.m));

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const double prev_loss = res.loss();
    const LossGradient g1 = loss_gradient(p, ts, res);
    {
      Vector rows = g1.dW.rowwise().squaredNorm();
      if (p.has_bias) rows += g1.db.cwiseAbs2();
      const double bound = row_scale * (res.e.norm() + res.S.norm());
      if (std::sqrt(rows.maxCoeff()) > bound * (1.0 + 1e-12)) ++result.gradient_bound_violations;
    }
    if (cfg.integrator == Integrator::kEuler) {
      apply_step(p, g1, cfg.eta);
    } else {
      NetParams trial = p;
      apply_step(trial, g1, cfg.eta);
      const LossGradient g2 = loss_gradient(trial, ts);
      apply_step(p, g1, 0.5 * cfg.eta);
      apply_step(p, g2, 0.5 * cfg.eta);
    }
    res = residuals(p, ts);
    const double cur = res.loss();
    if (!std::isfinite(cur)) {
      throw DivergenceError("run_flow: loss became non-finite at step " + std::to_string(step), last);
    }
    if (cur > prev_loss * (1.0 + 1e-10) + loss_floor) {
      if (cfg.check_monotone) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "run_flow: loss increased at step %zu (%.17g -> %.17g); reduce eta", step,
                      prev_loss, cur);
        throw MonotonicityError(buf);
      }
      ++result.loss_increases;
      result.worst_loss_increase = std::max(result.worst_loss_increase, (cur - prev_loss) / prev_loss);
    }
    if (due(step)) {
      last = make_record(step);
      result.records.push_back(last);
    }
  }
  result.final_params = std::move(p);
  return result;
}

DynamicsProbe dynamics_residual_check(const NetParams& p, const TrainingSet& ts, double eta_fd) {
  if (!(eta_fd > 0.0)) throw InvalidInputError("dynamics_residual_check: eta_fd must be positive");
  const ResidualState res0 = residuals(p, ts);
  const Vector r0 = res0.stacked();
  const Vector hr = kernel_at(p, ts).H.matrix() * r0;

  NetParams q = p;
  apply_step(q, loss_gradient(p, ts, res0), eta_fd);
  const Vector r1 = residuals(q, ts).stacked();

  DynamicsProbe probe;
  probe.value = ((r1 - r0) / eta_fd + hr).norm();
  probe.hr_norm = hr.norm();
  probe.flipped = (activation_pattern(p, ts) != activation_pattern(q, ts)).any();
  return probe;
}

DecayCertificate decay_certificate(std::span<const TrajectoryRecord> records, double factor) {
  DecayCertificate cert;
  double lam = std::numeric_limits<double>::infinity();
  for (const auto& rec : records) {
    if (rec.lambda_min_H) lam = std::min(lam, *rec.lambda_min_H);
  }
  if (records.empty() || !std::isfinite(lam)) {
    throw InsufficientDataError("decay_certificate: no lambda_min(H) values were logged");
  }
  cert.lambda_hat_rate = lam;
  const double r0 = records.front().r_sq;
  cert.pass = true;
  if (r0 == 0.0) return cert;
  for (const auto& rec : records) {
    const double envelope = std::exp(-lam * rec.t) * r0;
    cert.worst_ratio = std::max(cert.worst_ratio, rec.r_sq / envelope);
    if (rec.r_sq > factor * envelope) cert.pass = false;
  }
  return cert;
}

bool drift_monitor(std::span<const TrajectoryRecord> records, double lemma4_R) {
  for (const auto& rec : records) {
    if (rec.max_drift > lemma4_R) return false;
  }
  return true;
}

double escape_monitor(std::span<const TrajectoryRecord> records, double lambda_hat_star) {
  for (const auto& rec : records) {
    if (rec.kernel_drift && *rec.kernel_drift > lambda_hat_star / 4.0) return rec.t;
  }
  return std::numeric_limits<double>::infinity();
}

namespace {

void put_real(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

void put_optional(std::ostream& out, const std::optional<double>& v) {
  if (v && std::isfinite(*v)) put_real(out, *v);
}

}  // namespace

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRecord> records) {
  out << kTrajectoryCsvHeader << '\n';
  for (const auto& rec : records) {
    out << rec.step << ',';
    put_real(out, rec.t);
    for (double v : {rec.loss, rec.e_norm, rec.S_norm, rec.r_sq, rec.max_drift}) {
      out << ',';
      put_real(out, v);
    }
    out << ',';
    put_optional(out, rec.R_bound);
    out << ',';
    put_optional(out, rec.kernel_drift);
    out << ',';
    put_optional(out, rec.lambda_min_H);
    out << ',' << rec.flip_count << '\n';
  }
}

}  // namespace sflab
