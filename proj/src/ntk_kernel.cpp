#include "sflab/ntk_kernel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>

#include "sflab/errors.hpp"
#include "sflab/rng.hpp"

namespace sflab {

BiasScaling bias_scaling(std::size_t k) {
  const double alpha = bias_alpha(k);
  return {alpha, std::sqrt(1.0 - alpha * alpha)};
}

FeatureGeometry feature_geometry(const TrainingSet& ts, std::optional<BiasScaling> bias) {
  FeatureGeometry g;
  g.n = ts.n;
  g.k = ts.k;
  g.dim = bias ? ts.d + 1 : ts.d;
  const std::size_t total = ts.n * (ts.k + 1);
  g.points = Matrix::Zero(g.dim, ts.n);
  g.columns = Matrix::Zero(g.dim, total);
  g.owner.resize(total);
  for (std::size_t i = 0; i < ts.n; ++i) {
    if (bias) {
      g.points.col(i).head(ts.d) = bias->alpha * ts.x[i];
      g.points(ts.d, i) = bias->beta;
    } else {
      g.points.col(i) = ts.x[i];
    }
    g.columns.col(i) = g.points.col(i);
    g.owner[i] = i;
    for (std::size_t j = 0; j < ts.k; ++j) {
      const std::size_t c = ts.n + i * ts.k + j;
      g.columns.col(c).head(ts.d) = ts.V[i].col(j);
      g.owner[c] = i;
    }
  }
  g.gram = g.columns.transpose() * g.columns;
  return g;
}

Matrix feature_matrix(const Vector& w, const FeatureGeometry& geom) {
  if (static_cast<std::size_t>(w.size()) != geom.dim) {
    throw InvalidInputError("feature_matrix: w has the wrong dimension");
  }
  const Vector proj = geom.points.transpose() * w;
  Matrix omega = geom.columns;
  for (std::size_t c = 0; c < geom.owner.size(); ++c) {
    if (!(proj(geom.owner[c]) > 0.0)) omega.col(c).setZero();
  }
  return omega;
}

Matrix feature_matrix(const Vector& w, const TrainingSet& ts) {
  return feature_matrix(w, feature_geometry(ts));
}

Matrix hat_feature_matrix(const Vector& w, const TrainingSet& ts) {
  if (static_cast<std::size_t>(w.size()) != ts.d) {
    throw InvalidInputError("hat_feature_matrix: w has the wrong dimension");
  }
  const std::size_t p = ts.k + 1;
  Matrix out = Matrix::Zero(ts.d, ts.n * p);
  for (std::size_t i = 0; i < ts.n; ++i) {
    if (!(w.dot(ts.x[i]) > 0.0)) continue;
    out.col(i * p) = ts.x[i];
    for (std::size_t j = 0; j < ts.k; ++j) out.col(i * p + 1 + j) = ts.V[i].col(j);
  }
  return out;
}

std::vector<std::size_t> sample_major_permutation(std::size_t n, std::size_t k) {
  std::vector<std::size_t> perm(n * (k + 1));
  for (std::size_t i = 0; i < n; ++i) {
    perm[i * (k + 1)] = i;
    for (std::size_t j = 0; j < k; ++j) perm[i * (k + 1) + 1 + j] = n + i * k + j;
  }
  return perm;
}

namespace {

// H_{αβ} = gram_{αβ} · M_{owner(α), owner(β)}.
Matrix lift(const Matrix& m, const FeatureGeometry& geom) {
  const std::size_t total = geom.owner.size();
  Matrix out(total, total);
  for (std::size_t a = 0; a < total; ++a) {
    for (std::size_t b = 0; b < total; ++b) {
      out(a, b) = geom.gram(a, b) * m(geom.owner[a], geom.owner[b]);
    }
  }
  return out;
}

std::optional<BiasScaling> scaling_of(const NetParams& p) {
  if (!p.has_bias) return std::nullopt;
  return BiasScaling{p.alpha, p.beta};
}

}  // namespace

KernelMatrix kernel_at(const NetParams& p, const TrainingSet& ts) {
  const Matrix z = preactivations(p, ts);
  const FeatureGeometry geom = feature_geometry(ts, scaling_of(p));
  // M(i, j) = Σ_r a_r² σ'(z_ri) σ'(z_rj)
  Matrix m = Matrix::Zero(ts.n, ts.n);
  std::vector<std::size_t> active;
  active.reserve(ts.n);
  for (std::size_t r = 0; r < p.m; ++r) {
    active.clear();
    for (std::size_t i = 0; i < ts.n; ++i) {
      if (z(r, i) > 0.0) active.push_back(i);
    }
    const double a2 = p.a(r) * p.a(r);
    for (std::size_t i : active) {
      for (std::size_t j : active) m(i, j) += a2;
    }
  }
  return KernelMatrix{ts.n, ts.k, SymMatrix(lift(m, geom))};
}

SymMatrix neuron_kernel(const NetParams& p, const TrainingSet& ts, std::size_t r) {
  if (r >= p.m) throw InvalidInputError("neuron_kernel: neuron index out of range");
  const FeatureGeometry geom = feature_geometry(ts, scaling_of(p));
  Vector w(geom.dim);
  w.head(p.d) = p.W.row(r).transpose();
  if (p.has_bias) w(p.d) = p.b(r);
  const Matrix omega = p.a(r) * feature_matrix(w, geom);
  return SymMatrix(omega.transpose() * omega);
}

// ---------------------------------------------------------------------------
// Monte Carlo over activation patterns.
//
// Every entry of Ω(w)ᵀΩ(w) is gram_{αβ}·s_i s_j with s_i = 𝟙{wᵀx_i > 0}, so the
// sample mean only needs the pair counts of s. Chunk c draws from its own
// stream (seed, c) and chunk results are combined in chunk order, so the
// estimate does not depend on the thread count.

namespace {

struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++count;
    const double delta = v - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (v - mean);
  }

  void merge(const Moments& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(count + o.count);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.count) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / total;
    count += o.count;
  }

  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
};

std::size_t chunk_count(std::size_t samples) { return (samples + kMonteCarloChunk - 1) / kMonteCarloChunk; }

unsigned resolve_threads(unsigned requested, std::size_t chunks) {
  unsigned t = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(chunks, 1)));
}

// Calls visit(pattern_active_list) for every sample of chunk c.
template <class Visit>
void sample_chunk(const Matrix& points_t, std::size_t samples, std::uint64_t seed, std::size_t c,
                  Visit&& visit) {
  const auto dim = static_cast<std::size_t>(points_t.cols());
  const auto n = static_cast<std::size_t>(points_t.rows());
  Engine rng = make_engine(seed, kStreamMonteCarlo + c);
  std::normal_distribution<double> normal;
  const std::size_t begin = c * kMonteCarloChunk;
  const std::size_t count = std::min(kMonteCarloChunk, samples - begin);
  Vector w(dim);
  Vector proj(n);
  std::vector<std::size_t> active;
  active.reserve(n);
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t j = 0; j < dim; ++j) w(j) = normal(rng);
    proj.noalias() = points_t * w;
    active.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (proj(i) > 0.0) active.push_back(i);
    }
    visit(active);
  }
}

template <class Result, class PerChunk>
std::vector<Result> run_chunks(std::size_t chunks, unsigned threads, PerChunk&& per_chunk) {
  std::vector<Result> results(chunks);
  const unsigned workers = resolve_threads(threads, chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) results[c] = per_chunk(c);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) results[c] = per_chunk(c);
    });
  }
  for (auto& th : pool) th.join();
  return results;
}

using CountMatrix = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic>;

CountMatrix pattern_counts(const Matrix& points, const MonteCarloOptions& mc) {
  const Matrix points_t = points.transpose();
  const auto n = static_cast<Eigen::Index>(points.cols());
  const std::size_t chunks = chunk_count(mc.samples);
  auto per_chunk = [&](std::size_t c) {
    CountMatrix counts = CountMatrix::Zero(n, n);
    sample_chunk(points_t, mc.samples, mc.seed, c, [&](const std::vector<std::size_t>& active) {
      for (std::size_t i : active) {
        for (std::size_t j : active) ++counts(i, j);
      }
    });
    return counts;
  };
  const auto parts = run_chunks<CountMatrix>(chunks, mc.threads, per_chunk);
  CountMatrix total = CountMatrix::Zero(n, n);
  for (const auto& part : parts) total += part;
  return total;
}

// Sample variance of sᵀ K s, using the same draws as pattern_counts.
Moments quadratic_form_moments(const Matrix& points, const Matrix& kmat, const MonteCarloOptions& mc) {
  const Matrix points_t = points.transpose();
  const std::size_t chunks = chunk_count(mc.samples);
  auto per_chunk = [&](std::size_t c) {
    Moments mom;
    sample_chunk(points_t, mc.samples, mc.seed, c, [&](const std::vector<std::size_t>& active) {
      double q = 0.0;
      for (std::size_t i : active) {
        for (std::size_t j : active) q += kmat(i, j);
      }
      mom.add(q);
    });
    return mom;
  };
  const auto parts = run_chunks<Moments>(chunks, mc.threads, per_chunk);
  Moments total;
  for (const auto& part : parts) total.merge(part);
  return total;
}

void check_samples(std::size_t samples) {
  if (samples < kMinMonteCarloSamples) {
    throw InvalidInputError("Monte Carlo estimate needs at least " + std::to_string(kMinMonteCarloSamples) +
                            " samples");
  }
}

struct PatternEstimate {
  Matrix probability;  // n × n, P(s_i = s_j = 1)
  Matrix std_error;    // of each probability
};

PatternEstimate pattern_probabilities(const Matrix& points, const MonteCarloOptions& mc) {
  const CountMatrix counts = pattern_counts(points, mc);
  const auto total = static_cast<double>(mc.samples);
  PatternEstimate est;
  est.probability = counts.cast<double>() / total;
  est.std_error = est.probability.unaryExpr(
      [total](double p) { return std::sqrt(std::max(0.0, p * (1.0 - p)) / (total - 1.0)); });
  return est;
}

// Bottom eigenpair of mean plus the delta-method standard error of λ_min.
template <class Lift>
std::pair<double, double> lambda_min_with_error(const SymMatrix& mean, const Matrix& points,
                                                const MonteCarloOptions& mc, Lift&& fold) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(mean.matrix());
  if (eig.info() != Eigen::Success) throw Error("eigensolver did not converge");
  const Vector u = eig.eigenvectors().col(0);
  const Moments mom = quadratic_form_moments(points, fold(u), mc);
  return {eig.eigenvalues()(0), std::sqrt(mom.variance() / static_cast<double>(mc.samples))};
}

}  // namespace

std::vector<Vector> monte_carlo_directions(std::size_t dim, std::size_t samples, std::uint64_t seed) {
  std::vector<Vector> out;
  out.reserve(samples);
  for (std::size_t c = 0; c < chunk_count(samples); ++c) {
    Engine rng = make_engine(seed, kStreamMonteCarlo + c);
    std::normal_distribution<double> normal;
    const std::size_t count = std::min(kMonteCarloChunk, samples - c * kMonteCarloChunk);
    for (std::size_t s = 0; s < count; ++s) {
      Vector w(dim);
      for (std::size_t j = 0; j < dim; ++j) w(j) = normal(rng);
      out.push_back(std::move(w));
    }
  }
  return out;
}

HInfinityEstimate estimate_h_infinity(const TrainingSet& ts, const MonteCarloOptions& mc,
                                      std::optional<BiasScaling> bias) {
  check_samples(mc.samples);
  const FeatureGeometry geom = feature_geometry(ts, bias);
  const PatternEstimate pat = pattern_probabilities(geom.points, mc);

  HInfinityEstimate est;
  est.samples = mc.samples;
  est.seed = mc.seed;
  est.mean = SymMatrix(lift(pat.probability, geom));
  est.std_error = lift(pat.std_error, geom).cwiseAbs();

  // uᵀΩ(w)ᵀΩ(w)u = sᵀ K s with K_ij = Σ_{owner(α)=i, owner(β)=j} u_α u_β gram_αβ.
  auto fold = [&](const Vector& u) {
    Matrix kmat = Matrix::Zero(ts.n, ts.n);
    for (std::size_t a = 0; a < geom.owner.size(); ++a) {
      for (std::size_t b = 0; b < geom.owner.size(); ++b) {
        kmat(geom.owner[a], geom.owner[b]) += u(a) * u(b) * geom.gram(a, b);
      }
    }
    return kmat;
  };
  std::tie(est.lambda_min, est.lambda_min_std_error) = lambda_min_with_error(est.mean, geom.points, mc, fold);
  return est;
}

SymMatrix random_M(const Vector& w, const TrainingSet& ts) {
  if (static_cast<std::size_t>(w.size()) != ts.d) throw InvalidInputError("random_M: w has the wrong dimension");
  Vector s(ts.n);
  for (std::size_t i = 0; i < ts.n; ++i) s(i) = w.dot(ts.x[i]) > 0.0 ? 1.0 : 0.0;
  return SymMatrix(s * s.transpose());
}

MEstimate expected_M(const TrainingSet& ts, const MonteCarloOptions& mc) {
  check_samples(mc.samples);
  Matrix points(ts.d, ts.n);
  for (std::size_t i = 0; i < ts.n; ++i) points.col(i) = ts.x[i];
  const PatternEstimate pat = pattern_probabilities(points, mc);
  MEstimate est;
  est.samples = mc.samples;
  est.mean = SymMatrix(pat.probability);
  est.std_error = pat.std_error;
  auto fold = [](const Vector& u) -> Matrix { return u * u.transpose(); };
  std::tie(est.lambda_min, est.lambda_min_std_error) = lambda_min_with_error(est.mean, points, mc, fold);
  return est;
}

namespace {

Matrix sample_frame(const TrainingSet& ts, std::size_t i) {
  Matrix x(ts.d, ts.k + 1);
  x.col(0) = ts.x[i];
  if (ts.k > 0) x.rightCols(ts.k) = ts.V[i];
  return x;
}

}  // namespace

BlockMatrix gram_X(const TrainingSet& ts) {
  BlockMatrix out(ts.n, ts.k + 1);
  std::vector<Matrix> frames;
  frames.reserve(ts.n);
  for (std::size_t i = 0; i < ts.n; ++i) frames.push_back(sample_frame(ts, i));
  for (std::size_t a = 0; a < ts.n; ++a) {
    for (std::size_t b = 0; b < ts.n; ++b) out.block(a, b) = frames[a].transpose() * frames[b];
  }
  return out;
}

SymMatrix sample_gram(const TrainingSet& ts, std::size_t i) {
  const Matrix x = sample_frame(ts, i);
  return SymMatrix(x.transpose() * x);
}

Matrix hat_gram(const TrainingSet& ts, const Vector& w) {
  const std::size_t p = ts.k + 1;
  const Matrix mw_kron = kronecker(random_M(w, ts).matrix(), Matrix::Identity(p, p));
  return block_hadamard(gram_X(ts), BlockMatrix::from_matrix(mw_kron, p)).flatten();
}

FactorizationCheck hat_h_factorization_check(const TrainingSet& ts, std::span<const Vector> ws) {
  if (ws.empty()) throw InvalidInputError("hat_h_factorization_check: need at least one sample");
  FactorizationCheck out;
  for (const Vector& w : ws) {
    const Matrix omega_hat = hat_feature_matrix(w, ts);
    const Matrix direct = omega_hat.transpose() * omega_hat;
    const double dev = (hat_gram(ts, w) - direct).cwiseAbs().maxCoeff();
    out.max_abs_deviation = std::max(out.max_abs_deviation, dev);
  }
  out.pass = out.max_abs_deviation <= 1e-12;
  return out;
}

SymMatrix empirical_gram_mean(const TrainingSet& ts, std::span<const Vector> ws) {
  if (ws.empty()) throw InvalidInputError("empirical_gram_mean: no samples");
  const FeatureGeometry geom = feature_geometry(ts);
  Matrix sum = Matrix::Zero(geom.owner.size(), geom.owner.size());
  for (const Vector& w : ws) {
    const Matrix omega = feature_matrix(w, geom);
    sum.noalias() += omega.transpose() * omega;
  }
  return SymMatrix(sum / static_cast<double>(ws.size()));
}

SymMatrix empirical_hat_gram_mean(const TrainingSet& ts, std::span<const Vector> ws) {
  if (ws.empty()) throw InvalidInputError("empirical_hat_gram_mean: no samples");
  const std::size_t total = ts.n * (ts.k + 1);
  Matrix sum = Matrix::Zero(total, total);
  for (const Vector& w : ws) sum += hat_gram(ts, w);
  return SymMatrix(sum / static_cast<double>(ws.size()));
}

double prop1_bound(const SeparationReport& rep, std::size_t n, std::size_t k) {
  const double kd2 = static_cast<double>(k) * rep.delta2;
  if (kd2 >= 1.0) throw AssumptionViolationError("prop1_bound: k*delta2 >= 1");
  if (!(rep.delta1 > 0.0)) throw AssumptionViolationError("prop1_bound: delta1 = 0");
  const auto nn = static_cast<double>(n);
  return (1.0 - kd2) * rep.delta1 / (100.0 * nn * nn);
}

double theorem2_bound(const SeparationReport& rep, std::size_t n, [[maybe_unused]] std::size_t k, double alpha,
                      double beta) {
  if (!(rep.delta1_hat > 0.0)) throw AssumptionViolationError("theorem2_bound: delta1_hat = 0");
  const auto nn = static_cast<double>(n);
  return std::min(alpha * rep.delta1_hat, 2.0 * beta) / (200.0 * nn * nn);
}

std::size_t lemma2_width(double lambda_star, std::size_t n, std::size_t k, double delta) {
  if (!(lambda_star > 0.0) || !(delta > 0.0 && delta < 1.0)) {
    throw InvalidInputError("lemma2_width: need lambda > 0 and delta in (0,1)");
  }
  const auto p = static_cast<double>(n * (k + 1));
  return static_cast<std::size_t>(std::ceil(32.0 / lambda_star * p * std::log(p / delta)));
}

KernelSpectrumReport spectrum_report(const TrainingSet& ts, const MonteCarloOptions& mc) {
  KernelSpectrumReport rep;
  rep.separation = validate(ts);
  rep.singleton_convention = rep.separation.singleton_convention;
  const HInfinityEstimate est = estimate_h_infinity(ts, mc);
  rep.lambda_min_estimate = est.lambda_min;
  rep.std_error = est.lambda_min_std_error;
  rep.mc_samples = est.samples;
  rep.seed = mc.seed;
  if (rep.separation.satisfies_assumption1) {
    rep.prop1_bound = prop1_bound(rep.separation, ts.n, ts.k);
    rep.bound_satisfied = rep.lambda_min_estimate + 3.0 * rep.std_error >= *rep.prop1_bound;
  }
  return rep;
}

}  // namespace sflab
