#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sflab/errors.hpp"
#include "sflab/ntk_kernel.hpp"
#include "support.hpp"

using namespace sflab;

namespace {

constexpr double kPi = std::numbers::pi;

Vector on_circle(std::size_t d, double angle) {
  Vector v = Vector::Zero(d);
  v(0) = std::cos(angle);
  v(1) = std::sin(angle);
  return v;
}

// Two unit points at the given angle in the (e_0, e_1) plane, no directions.
TrainingSet angular_pair(double angle) {
  return oracle::make_set({on_circle(3, 0.0), on_circle(3, angle)}, {0.0, 0.0}, {}, {});
}

// P[w_θ1 > 0 and w_θ2 > 0] for a uniform direction on the circle, by a
// midpoint rule over the angle of w.
double angular_oracle(double angle) {
  const int steps = 200000;
  int both = 0;
  for (int s = 0; s < steps; ++s) {
    const double phi = 2.0 * kPi * (s + 0.5) / steps;
    if (std::cos(phi) > 0.0 && std::cos(phi - angle) > 0.0) ++both;
  }
  return static_cast<double>(both) / steps;
}

double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST(FeatureMatrix, ColumnsFollowActivations) {
  Matrix v1(3, 1), v2(3, 1);
  v1 << 0, 1, 0;
  v2 << 0, 0, 1;
  const TrainingSet ts = oracle::make_set({oracle::unit(3, 0), oracle::unit(3, 1)}, {0, 0}, {v1, v2},
                                          {Vector::Zero(1), Vector::Zero(1)});
  Vector w(3);
  w << 1.0, -1.0, 0.5;
  const Matrix omega = feature_matrix(w, ts);
  ASSERT_EQ(omega.rows(), 3);
  ASSERT_EQ(omega.cols(), 4);
  EXPECT_TRUE(omega.col(0).isApprox(oracle::unit(3, 0)));
  EXPECT_TRUE(omega.col(1).isZero(0.0));
  EXPECT_TRUE(omega.col(2).isApprox(oracle::unit(3, 1)));
  EXPECT_TRUE(omega.col(3).isZero(0.0));
}

TEST(FeatureMatrix, HatIsSampleMajorPermutation) {
  const TrainingSet ts = generate(3, 6, 2, TargetKind::kQuadratic, 1);
  const std::vector<std::size_t> perm = sample_major_permutation(3, 2);
  ASSERT_EQ(perm.size(), 9u);
  EXPECT_EQ(perm[0], 0u);
  EXPECT_EQ(perm[1], 3u);
  EXPECT_EQ(perm[2], 4u);
  EXPECT_EQ(perm[3], 1u);
  std::mt19937_64 eng(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 10; ++t) {
    Vector w(6);
    for (auto& c : w) c = g(eng);
    const Matrix omega = feature_matrix(w, ts), hat = hat_feature_matrix(w, ts);
    for (std::size_t c = 0; c < perm.size(); ++c) EXPECT_TRUE((hat.col(c).array() == omega.col(perm[c]).array()).all());
  }
  EXPECT_THROW(feature_matrix(Vector::Zero(5), ts), InvalidInputError);
}

TEST(KernelAt, MatchesJacobianGram) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const bool bias = seed % 2 == 1;
    const TrainingSet ts = generate(2 + seed % 4, 8, 1 + seed % 2, TargetKind::kRandomLabels, seed);
    const NetParams p = init(16 + seed, 8, ts.k, bias, seed);
    const Matrix J = oracle::output_jacobian(p, ts);
    const KernelMatrix h = kernel_at(p, ts);
    EXPECT_LE(rel_frobenius(h.H.matrix(), J * J.transpose()), 1e-12) << seed;
    EXPECT_GE(lambda_min(h.H), -1e-10);
  }
}

TEST(KernelAt, BlockViews) {
  const TrainingSet ts = generate(3, 6, 2, TargetKind::kRandomLabels, 2);
  const KernelMatrix h = kernel_at(init(32, 6, 2, false, 2), ts);
  const Matrix& H = h.H.matrix();
  EXPECT_EQ(h.A(), H.block(0, 0, 3, 3));
  EXPECT_EQ(h.B(), H.block(0, 3, 3, 6));
  EXPECT_EQ(h.C(), H.block(3, 3, 6, 6));
}

TEST(KernelAt, DeadNetworkGivesZero) {
  const TrainingSet ts = generate(3, 6, 2, TargetKind::kRandomLabels, 3);
  NetParams p = init(20, 6, 2, false, 3);
  p.W.setZero();
  EXPECT_TRUE(kernel_at(p, ts).H.matrix().isZero(0.0));
}

TEST(NeuronKernel, SumsToKernelAndTraceBound) {
  const TrainingSet ts = generate(4, 8, 2, TargetKind::kRandomLabels, 4);
  for (bool bias : {false, true}) {
    const NetParams p = init(40, 8, 2, bias, 4);
    Matrix sum = Matrix::Zero(12, 12);
    for (std::size_t r = 0; r < p.m; ++r) {
      const SymMatrix hr = neuron_kernel(p, ts, r);
      EXPECT_LE(hr.matrix().trace(), 12.0 / 40.0 * (1 + 1e-12));
      EXPECT_LE(lambda_max(hr), 12.0 / 40.0 * (1 + 1e-12));
      sum += hr.matrix();
    }
    EXPECT_LE(rel_frobenius(sum, kernel_at(p, ts).H.matrix()), 1e-12);
    EXPECT_THROW(neuron_kernel(p, ts, 40), InvalidInputError);
  }
}

TEST(KernelAt, IsEmpiricalMeanOverNeuronWeights) {
  // H(0) is the average of Ω(w_r)ᵀΩ(w_r) over the initial rows, so its
  // expectation is H∞.
  const TrainingSet ts = generate(4, 8, 2, TargetKind::kRandomLabels, 5);
  const NetParams p = init(64, 8, 2, false, 5);
  std::vector<Vector> rows;
  for (std::size_t r = 0; r < p.m; ++r) rows.push_back(p.W.row(r).transpose());
  EXPECT_LE(rel_frobenius(kernel_at(p, ts).H.matrix(), empirical_gram_mean(ts, rows).matrix()), 1e-12);
}

TEST(HInfinity, ArcCosineEntries) {
  const TrainingSet ts = angular_pair(kPi / 3.0);
  const HInfinityEstimate est = estimate_h_infinity(ts, {1'000'000, 7, 1});
  EXPECT_LE(std::abs(est.mean(0, 1) - 1.0 / 6.0), 3.0 * est.std_error(0, 1));
  EXPECT_LE(std::abs(est.mean(0, 0) - 0.5), 3.0 * est.std_error(0, 0));
  EXPECT_LE(std::abs(est.mean(1, 1) - 0.5), 3.0 * est.std_error(1, 1));
}

TEST(HInfinity, MatchesAngularRiemannSum) {
  for (double angle : {0.4, 1.3, 2.5}) {
    const TrainingSet ts = angular_pair(angle);
    const HInfinityEstimate est = estimate_h_infinity(ts, {400'000, 11, 1});
    const double want = std::cos(angle) * angular_oracle(angle);
    EXPECT_NEAR(angular_oracle(angle), (kPi - angle) / (2 * kPi), 1e-4);
    EXPECT_LE(std::abs(est.mean(0, 1) - want), 4.0 * est.std_error(0, 1) + 1e-12);
  }
}

TEST(HInfinity, SingleSampleOrthogonalFrameIsHalfIdentity) {
  const TrainingSet ts = generate(1, 6, 2, TargetKind::kQuadratic, 6);
  const HInfinityEstimate est = estimate_h_infinity(ts, {200'000, 3, 1});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double want = i == j ? 0.5 : 0.0;
      EXPECT_LE(std::abs(est.mean(i, j) - want), 4.0 * est.std_error(i, j) + 1e-12);
    }
  }
}

TEST(HInfinity, EqualsDirectAverageOverDraws) {
  const TrainingSet ts = generate(3, 6, 2, TargetKind::kQuadratic, 8);
  const MonteCarloOptions mc{40'000, 21, 1};
  const HInfinityEstimate est = estimate_h_infinity(ts, mc);
  const std::vector<Vector> ws = monte_carlo_directions(6, mc.samples, mc.seed);
  ASSERT_EQ(ws.size(), mc.samples);
  EXPECT_LE((est.mean.matrix() - empirical_gram_mean(ts, ws).matrix()).cwiseAbs().maxCoeff(), 1e-12);

  // Delta-method standard error from the same draws.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(est.mean.matrix());
  const Vector u = eig.eigenvectors().col(0);
  const FeatureGeometry geom = feature_geometry(ts);
  double sum = 0, sum_sq = 0;
  for (const Vector& w : ws) {
    const double q = (feature_matrix(w, geom) * u).squaredNorm();
    sum += q;
    sum_sq += q * q;
  }
  const double n = static_cast<double>(ws.size());
  const double var = (sum_sq - sum * sum / n) / (n - 1);
  EXPECT_NEAR(est.lambda_min, eig.eigenvalues()(0), 1e-14);
  EXPECT_NEAR(est.lambda_min_std_error, std::sqrt(var / n), 1e-6 * std::sqrt(var / n));
}

TEST(HInfinity, ThreadCountDoesNotChangeResult) {
  const TrainingSet ts = generate(4, 8, 2, TargetKind::kQuadratic, 9);
  const HInfinityEstimate one = estimate_h_infinity(ts, {100'000, 5, 1});
  const HInfinityEstimate four = estimate_h_infinity(ts, {100'000, 5, 4});
  EXPECT_TRUE((one.mean.matrix().array() == four.mean.matrix().array()).all());
  EXPECT_EQ(one.lambda_min, four.lambda_min);
  EXPECT_EQ(one.lambda_min_std_error, four.lambda_min_std_error);
  const HInfinityEstimate other = estimate_h_infinity(ts, {100'000, 6, 1});
  EXPECT_NE(one.lambda_min, other.lambda_min);
}

TEST(HInfinity, StandardErrorScalesAsInverseRoot) {
  const TrainingSet ts = generate(4, 8, 2, TargetKind::kQuadratic, 10);
  const HInfinityEstimate a = estimate_h_infinity(ts, {1 << 16, 1, 1});
  const HInfinityEstimate b = estimate_h_infinity(ts, {1 << 17, 2, 1});
  EXPECT_NEAR(a.lambda_min_std_error / b.lambda_min_std_error, std::sqrt(2.0), 0.2 * std::sqrt(2.0));
  EXPECT_NEAR(a.std_error(0, 0) / b.std_error(0, 0), std::sqrt(2.0), 0.2 * std::sqrt(2.0));
}

TEST(HInfinity, RejectsTooFewSamples) {
  const TrainingSet ts = generate(2, 4, 1, TargetKind::kQuadratic, 1);
  EXPECT_THROW(estimate_h_infinity(ts, {kMinMonteCarloSamples - 1, 1, 1}), InvalidInputError);
  EXPECT_THROW(expected_M(ts, {100, 1, 1}), InvalidInputError);
}

TEST(HInfinity, BiasLiftDiagonal) {
  // With bias the value points are (α x, β), still unit length, so the value
  // diagonal stays 1/2; the direction columns (v, 0) keep 1/2 as well.
  const TrainingSet ts = generate(2, 6, 2, TargetKind::kQuadratic, 12);
  const HInfinityEstimate est = estimate_h_infinity(ts, {200'000, 4, 1}, bias_scaling(2));
  for (int i = 0; i < 6; ++i) EXPECT_LE(std::abs(est.mean(i, i) - 0.5), 4.0 * est.std_error(i, i));
}

TEST(Bounds, Prop1) {
  SeparationReport rep;
  rep.delta1 = 1.0;
  rep.delta2 = 0.0;
  EXPECT_DOUBLE_EQ(prop1_bound(rep, 2, 2), 0.0025);
  rep.delta2 = 0.25;
  EXPECT_DOUBLE_EQ(prop1_bound(rep, 2, 2), 0.00125);
  rep.delta2 = 0.5;
  EXPECT_THROW(prop1_bound(rep, 2, 2), AssumptionViolationError);
  rep.delta2 = 0.0;
  rep.delta1 = 0.0;
  EXPECT_THROW(prop1_bound(rep, 2, 2), AssumptionViolationError);

  const TrainingSet single = generate(1, 4, 2, TargetKind::kQuadratic, 1);
  const SeparationReport srep = validate(single);
  EXPECT_TRUE(srep.singleton_convention);
  EXPECT_DOUBLE_EQ(prop1_bound(srep, 1, 2), 0.02);
}

TEST(Bounds, Theorem2) {
  SeparationReport rep;
  rep.delta1_hat = 1.0;
  const BiasScaling s = bias_scaling(2);
  EXPECT_DOUBLE_EQ(theorem2_bound(rep, 2, 2, s.alpha, s.beta), 0.25 / 800.0);
  // 2β is the smaller term once α δ̂₁ exceeds it.
  rep.delta1_hat = 2.0;
  EXPECT_DOUBLE_EQ(theorem2_bound(rep, 2, 2, 0.99, 0.1), 0.2 / 800.0);
  rep.delta1_hat = 0.0;
  EXPECT_THROW(theorem2_bound(rep, 2, 2, s.alpha, s.beta), AssumptionViolationError);
}

TEST(Bounds, Theorem2HoldsOnGeneratedData) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TrainingSet ts = generate(4, 8, 2, TargetKind::kQuadratic, 300 + seed);
    const BiasScaling s = bias_scaling(2);
    const HInfinityEstimate est = estimate_h_infinity(ts, {100'000, seed, 1}, s);
    EXPECT_GE(est.lambda_min + 3 * est.lambda_min_std_error, theorem2_bound(validate(ts), 4, 2, s.alpha, s.beta));
  }
}

TEST(ExpectedM, DiagonalAndOrthogonalEntries) {
  const TrainingSet ts =
      oracle::make_set({oracle::unit(4, 0), oracle::unit(4, 1), oracle::unit(4, 2)}, {0, 0, 0}, {}, {});
  const MEstimate est = expected_M(ts, {500'000, 2, 1});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double want = i == j ? 0.5 : 0.25;
      EXPECT_LE(std::abs(est.mean(i, j) - want), 4.0 * est.std_error(i, j));
    }
  }
  // Spectrum of ¼(I + 11ᵀ): {1/4, 1/4, 1}.
  EXPECT_NEAR(est.lambda_min, 0.25, 4.0 * est.lambda_min_std_error + 1e-3);
}

TEST(ExpectedM, RandomMIsOuterProduct) {
  const TrainingSet ts =
      oracle::make_set({oracle::unit(3, 0), oracle::unit(3, 1), oracle::unit(3, 2)}, {0, 0, 0}, {}, {});
  Vector w(3);
  w << 1.0, -2.0, 0.0;
  Matrix want = Matrix::Zero(3, 3);
  want(0, 0) = 1.0;
  EXPECT_EQ(random_M(w, ts).matrix(), want);
}

TEST(Factorization, HatGramMatchesDirectProduct) {
  const TrainingSet ts = generate(3, 8, 2, TargetKind::kQuadratic, 13);
  const std::vector<Vector> ws = monte_carlo_directions(8, 100, 3);
  const FactorizationCheck chk = hat_h_factorization_check(ts, ws);
  EXPECT_TRUE(chk.pass);
  EXPECT_LE(chk.max_abs_deviation, 1e-12);

  const Vector plain = eigenvalues(empirical_gram_mean(ts, ws));
  const Vector hat = eigenvalues(empirical_hat_gram_mean(ts, ws));
  EXPECT_LE((plain - hat).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lemma2Width, Formula) {
  const double p = 24.0;
  EXPECT_EQ(lemma2_width(0.2, 8, 2, 0.1), static_cast<std::size_t>(std::ceil(160.0 * p * std::log(240.0))));
  EXPECT_THROW(lemma2_width(0.0, 8, 2, 0.1), InvalidInputError);
  EXPECT_THROW(lemma2_width(0.2, 8, 2, 1.0), InvalidInputError);
}

TEST(Lemma7, GershgorinOnSampleGram) {
  for (double tilt : {0.0, 0.3}) {
    GenerateOptions opt;
    opt.tilt = tilt;
    const TrainingSet ts = generate(4, 8, 2, TargetKind::kQuadratic, 14, opt);
    const double delta2 = validate(ts).delta2;
    for (std::size_t i = 0; i < ts.n; ++i) {
      const SymMatrix g = sample_gram(ts, i);
      EXPECT_GE(gershgorin_lower_bound(g), 1.0 - 2.0 * delta2 - 1e-12);
      EXPECT_GE(lambda_min(g), gershgorin_lower_bound(g) - 1e-12);
      if (tilt == 0.0) EXPECT_NEAR(lambda_min(g), 1.0, 1e-10);
    }
  }
}
