#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "sflab/dataset.hpp"
#include "sflab/errors.hpp"
#include "support.hpp"

using namespace sflab;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sflab_test_" + name);
}

}  // namespace

TEST(Generate, SingletonQuadratic) {
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    const TrainingSet ts = generate(1, 3, 1, TargetKind::kQuadratic, seed);
    EXPECT_DOUBLE_EQ(ts.y[0], 0.5);
    EXPECT_LE(std::abs(ts.h[0](0)), 1e-15);
  }
}

TEST(Generate, UnitPointsAndOrthogonalDirections) {
  const TrainingSet ts = generate(2, 2, 1, TargetKind::kRandomLabels, 7);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(ts.x[i].norm(), 1.0, 1e-12);
    EXPECT_LE(std::abs(ts.V[i].col(0).dot(ts.x[i])), 1e-10);
  }
}

TEST(Generate, TeacherTargetsMatchFiniteDifferences) {
  const TrainingSet ts = generate(10, 20, 2, TargetKind::kTeacherMlp, 1);
  const TeacherMlp teacher(20, 1);
  const double eps = 1e-5;
  for (std::size_t i = 0; i < ts.n; ++i) {
    EXPECT_EQ(ts.y[i], teacher.value(ts.x[i]));
    for (std::size_t j = 0; j < 2; ++j) {
      const Vector v = ts.V[i].col(j);
      const double fd = (teacher.value(ts.x[i] + eps * v) - teacher.value(ts.x[i] - eps * v)) / (2 * eps);
      EXPECT_LE(std::abs(fd - ts.h[i](j)), 1e-6 * std::max(std::abs(fd), 1e-3)) << "sample " << i;
    }
  }
}

TEST(Generate, TeacherGradientMatchesFiniteDifferences) {
  const TeacherMlp teacher(6, 3);
  Vector x = Vector::LinSpaced(6, -0.4, 0.5);
  const Vector g = teacher.gradient(x);
  for (int c = 0; c < 6; ++c) {
    Vector e = Vector::Zero(6);
    e(c) = 1e-5;
    const double fd = (teacher.value(x + e) - teacher.value(x - e)) / 2e-5;
    EXPECT_NEAR(fd, g(c), 1e-8);
  }
}

TEST(Generate, EveryGeneratedSetSatisfiesAssumptionOne) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const TrainingSet ts = generate(8, 16, 2, TargetKind::kQuadratic, seed);
    EXPECT_NO_THROW(check_invariants(ts));
    const SeparationReport r = validate(ts);
    EXPECT_TRUE(r.satisfies_assumption1);
    EXPECT_GE(r.delta1, 0.05);
    for (std::size_t i = 0; i < ts.n; ++i) EXPECT_LE(ts.h[i].cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Generate, TiltSetsDirectionAlignment) {
  GenerateOptions opt;
  opt.tilt = 0.3;
  const TrainingSet ts = generate(6, 10, 2, TargetKind::kRandomLabels, 4, opt);
  EXPECT_NO_THROW(check_invariants(ts));
  for (std::size_t i = 0; i < ts.n; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(std::abs(ts.V[i].col(j).dot(ts.x[i])), 0.3, 1e-12);
  EXPECT_NEAR(validate(ts).delta2, 0.3, 1e-12);
  opt.tilt = 0.5;
  EXPECT_THROW(generate(6, 10, 2, TargetKind::kRandomLabels, 4, opt), InvalidInputError);
}

TEST(Generate, AntipodalPair) {
  GenerateOptions opt;
  opt.antipodal_gap = 0.02;
  const TrainingSet ts = generate(8, 16, 2, TargetKind::kQuadratic, 3, opt);
  EXPECT_NEAR((ts.x[0] + ts.x[1]).norm(), 0.02, 1e-12);
  const SeparationReport r = validate(ts);
  EXPECT_NEAR(r.delta1, 0.02, 1e-12);
  EXPECT_TRUE(r.satisfies_assumption2);
}

TEST(Generate, Errors) {
  EXPECT_THROW(generate(3, 3, 3, TargetKind::kQuadratic, 1), InvalidInputError);
  // Only two antipodal-separated points fit on the line.
  EXPECT_THROW(generate(2, 1, 0, TargetKind::kQuadratic, 1), DegenerateConfigurationError);
}

TEST(Generate, DeterministicPerSeed) {
  const TrainingSet a = generate(5, 8, 2, TargetKind::kTeacherMlp, 42);
  const TrainingSet b = generate(5, 8, 2, TargetKind::kTeacherMlp, 42);
  EXPECT_EQ(serialize(a), serialize(b));
  EXPECT_NE(serialize(a), serialize(generate(5, 8, 2, TargetKind::kTeacherMlp, 43)));
}

TEST(Validate, OrthogonalPair) {
  const TrainingSet ts = oracle::make_set({oracle::unit(3, 0), oracle::unit(3, 1)}, {0, 0}, {}, {});
  const SeparationReport r = validate(ts);
  EXPECT_NEAR(r.delta1, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r.delta1_hat, std::sqrt(2.0), 1e-15);
}

TEST(Validate, AntipodalDegenerate) {
  const TrainingSet ts = oracle::make_set({oracle::unit(3, 0), -oracle::unit(3, 0)}, {0, 0}, {}, {});
  const SeparationReport r = validate(ts);
  EXPECT_EQ(r.delta1, 0.0);
  EXPECT_FALSE(r.satisfies_assumption1);
  EXPECT_TRUE(r.satisfies_assumption2);
}

TEST(Validate, MarginsAgainstPairwiseOracle) {
  const TrainingSet ts = generate(7, 5, 2, TargetKind::kRandomLabels, 21);
  double d1 = 1e9, d1h = 1e9, d2 = 0, yy = 0, hh = 0;
  for (std::size_t i = 0; i < ts.n; ++i) {
    yy += ts.y[i] * ts.y[i];
    for (std::size_t j = 0; j < ts.k; ++j) {
      hh += ts.h[i](j) * ts.h[i](j);
      double dot = 0;
      for (std::size_t c = 0; c < ts.d; ++c) dot += ts.V[i](c, j) * ts.x[i](c);
      d2 = std::max(d2, std::abs(dot));
    }
    for (std::size_t l = 0; l < ts.n; ++l) {
      if (l == i) continue;
      double mn = 0, pl = 0;
      for (std::size_t c = 0; c < ts.d; ++c) {
        mn += (ts.x[i](c) - ts.x[l](c)) * (ts.x[i](c) - ts.x[l](c));
        pl += (ts.x[i](c) + ts.x[l](c)) * (ts.x[i](c) + ts.x[l](c));
      }
      d1 = std::min({d1, std::sqrt(mn), std::sqrt(pl)});
      d1h = std::min(d1h, std::sqrt(mn));
    }
  }
  const SeparationReport r = validate(ts);
  EXPECT_NEAR(r.delta1, d1, 1e-14);
  EXPECT_NEAR(r.delta1_hat, d1h, 1e-14);
  EXPECT_LE(r.delta1, r.delta1_hat);
  EXPECT_NEAR(r.delta2, d2, 1e-14);
  EXPECT_NEAR(r.gamma, std::sqrt(yy) + std::sqrt(hh), 1e-12);
}

TEST(Validate, SingletonConvention) {
  const SeparationReport r = validate(generate(1, 4, 0, TargetKind::kQuadratic, 1));
  EXPECT_TRUE(r.singleton_convention);
  EXPECT_EQ(r.delta1, 2.0);
}

TEST(Serialization, SaveLoadBitExact) {
  const TrainingSet ts = generate(6, 9, 2, TargetKind::kTeacherMlp, 5);
  const auto path = temp_file("roundtrip.txt");
  save(ts, path);
  const TrainingSet back = load(path);
  ASSERT_EQ(back.n, ts.n);
  ASSERT_EQ(back.k, ts.k);
  for (std::size_t i = 0; i < ts.n; ++i) {
    EXPECT_TRUE((back.x[i].array() == ts.x[i].array()).all());
    EXPECT_EQ(back.y[i], ts.y[i]);
    EXPECT_TRUE((back.V[i].array() == ts.V[i].array()).all());
    EXPECT_TRUE((back.h[i].array() == ts.h[i].array()).all());
  }
  std::filesystem::remove(path);
}

TEST(Serialization, RejectsUnnormalizedPoint) {
  TrainingSet ts = generate(2, 3, 1, TargetKind::kQuadratic, 1);
  ts.x[1] *= 0.9;
  try {
    parse_training_set(serialize(ts));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("normalized"), std::string::npos) << e.what();
  }
}

TEST(Serialization, RejectsNonOrthonormalFrame) {
  TrainingSet ts = generate(2, 4, 2, TargetKind::kQuadratic, 1);
  // Column 1 becomes 0.5 c0 + sqrt(0.75) c1: unit length, dot 0.5 with column 0.
  ts.V[0].col(1) = 0.5 * ts.V[0].col(0) + std::sqrt(0.75) * ts.V[0].col(1);
  EXPECT_THROW(parse_training_set(serialize(ts)), ParseError);
}

TEST(Serialization, MalformedRecordNamesTheLine) {
  std::string text = serialize(generate(2, 3, 1, TargetKind::kQuadratic, 1));
  const auto pos = text.find("\ny ");
  text.replace(pos + 3, 1, "zz");
  try {
    parse_training_set(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos) << e.what();
  }
}

TEST(Serialization, CommentsIgnored) {
  const TrainingSet ts = generate(2, 3, 1, TargetKind::kQuadratic, 1);
  std::string text = serialize(ts);
  text.insert(text.find('\n') + 1, "# a comment\n");
  EXPECT_EQ(serialize(parse_training_set(text)), serialize(ts));
}

TEST(TargetKind, ParseRoundTrip) {
  for (auto k : {TargetKind::kRandomLabels, TargetKind::kQuadratic, TargetKind::kTeacherMlp}) {
    EXPECT_EQ(parse_target_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_target_kind("cubic"), InvalidInputError);
}
