#include "sflab/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "sflab/errors.hpp"
#include "sflab/rng.hpp"

namespace sflab {

TargetKind parse_target_kind(std::string_view name) {
  if (name == "random_labels") return TargetKind::kRandomLabels;
  if (name == "quadratic") return TargetKind::kQuadratic;
  if (name == "teacher_mlp") return TargetKind::kTeacherMlp;
  throw InvalidInputError("unknown target kind '" + std::string(name) + "'");
}

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::kRandomLabels:
      return "random_labels";
    case TargetKind::kQuadratic:
      return "quadratic";
    case TargetKind::kTeacherMlp:
      return "teacher_mlp";
  }
  return "unknown";
}

Vector TrainingSet::labels() const {
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) out(i) = y[i];
  return out;
}

Vector TrainingSet::directional_targets() const {
  Vector out(n * k);
  for (std::size_t i = 0; i < n; ++i) out.segment(i * k, k) = h[i];
  return out;
}

TeacherMlp::TeacherMlp(std::size_t d, std::uint64_t seed) : g_(kHidden, d), c_(kHidden) {
  Engine rng = make_engine(seed, kStreamTeacher);
  std::normal_distribution<double> normal;
  for (std::size_t u = 0; u < kHidden; ++u) {
    for (std::size_t j = 0; j < d; ++j) g_(u, j) = normal(rng);
  }
  for (std::size_t u = 0; u < kHidden; ++u) c_(u) = normal(rng);
}

double TeacherMlp::value(const Vector& x) const {
  const Vector z = g_ * x;
  return c_.dot(z.array().tanh().matrix()) / std::sqrt(static_cast<double>(kHidden));
}

Vector TeacherMlp::gradient(const Vector& x) const {
  const Vector t = (g_ * x).array().tanh().matrix();
  const Vector coeff = c_.array() * (1.0 - t.array().square());
  return g_.transpose() * coeff / std::sqrt(static_cast<double>(kHidden));
}

namespace {

Vector gaussian_vector(Engine& rng, std::size_t d) {
  std::normal_distribution<double> normal;
  Vector v(d);
  for (std::size_t j = 0; j < d; ++j) v(j) = normal(rng);
  return v;
}

double antipodal_distance(const Vector& a, const Vector& b) {
  return std::min((a - b).norm(), (a + b).norm());
}

// Orthonormal d × k frame with every column orthogonal to the unit vector x.
Matrix orthogonal_frame(Engine& rng, const Vector& x, std::size_t k) {
  const auto d = static_cast<std::size_t>(x.size());
  Matrix q(d, k);
  std::size_t col = 0;
  std::size_t attempts = 0;
  while (col < k) {
    if (++attempts > 1000 * (k + 1)) {
      throw DegenerateConfigurationError("generate: could not build an orthonormal direction frame");
    }
    Vector v = gaussian_vector(rng, d);
    // Two passes of modified Gram-Schmidt against x and the accepted columns.
    for (int pass = 0; pass < 2; ++pass) {
      v -= x.dot(v) * x;
      for (std::size_t c = 0; c < col; ++c) v -= q.col(c).dot(v) * q.col(c);
    }
    const double norm = v.norm();
    if (norm < 1e-6) continue;
    q.col(col++) = v / norm;
  }
  return q;
}

// Mixes s·x into each column of an orthonormal frame Q ⊥ x and re-orthonormalizes
// the columns symmetrically. The result has v_jᵀx = tilt for every j.
Matrix tilt_frame(const Matrix& q, const Vector& x, double tilt) {
  const auto k = static_cast<double>(q.cols());
  const double s = tilt / std::sqrt(1.0 - k * tilt * tilt);
  Matrix mixed = q;
  mixed.colwise() += s * x;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(mixed.transpose() * mixed);
  const Matrix inv_sqrt =
      eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
      eig.eigenvectors().transpose();
  return mixed * inv_sqrt;
}

}  // namespace

// Draw order on the dataset stream: points x_0..x_{n-1} (with rejections), the
// antipodal replacement direction if requested, one frame per sample, then for
// random_labels y_i followed by h_i per sample. The teacher has its own stream.
TrainingSet generate(std::size_t n, std::size_t d, std::size_t k, TargetKind target,
                     std::uint64_t seed, const GenerateOptions& options) {
  if (n == 0 || d == 0) throw InvalidInputError("generate: n and d must be positive");
  if (k >= d) throw InvalidInputError("generate: need k < d");
  if (options.tilt < 0.0 || (k > 0 && static_cast<double>(k) * options.tilt >= 1.0)) {
    throw InvalidInputError("generate: tilt must satisfy 0 <= k*tilt < 1");
  }
  if (options.antipodal_gap < 0.0 || options.antipodal_gap >= 2.0) {
    throw InvalidInputError("generate: antipodal_gap must lie in [0, 2)");
  }
  if (options.antipodal_gap > 0.0 && n < 2) {
    throw InvalidInputError("generate: an antipodal pair needs n >= 2");
  }

  Engine rng = make_engine(seed, kStreamDataset);
  TrainingSet ts;
  ts.n = n;
  ts.d = d;
  ts.k = k;

  const std::size_t max_attempts = 10 * n * 1000;
  std::size_t attempts = 0;
  while (ts.x.size() < n) {
    if (++attempts > max_attempts) {
      throw DegenerateConfigurationError("generate: rejection sampling exceeded " +
                                         std::to_string(max_attempts) + " attempts");
    }
    Vector cand = gaussian_vector(rng, d);
    const double norm = cand.norm();
    if (norm == 0.0) continue;
    cand /= norm;
    bool ok = true;
    for (const Vector& prev : ts.x) {
      if (antipodal_distance(cand, prev) < options.min_separation) {
        ok = false;
        break;
      }
    }
    if (ok) ts.x.push_back(std::move(cand));
  }

  if (options.antipodal_gap > 0.0) {
    const Vector& x0 = ts.x[0];
    Vector u = orthogonal_frame(rng, x0, 1).col(0);
    // ‖x_0 + x_1‖² = 2 − 2cos θ for x_1 = −cos θ·x_0 + sin θ·u.
    const double c = 1.0 - 0.5 * options.antipodal_gap * options.antipodal_gap;
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    Vector x1 = -c * x0 + s * u;
    ts.x[1] = x1 / x1.norm();
  }

  ts.V.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Matrix q = orthogonal_frame(rng, ts.x[i], k);
    if (options.tilt > 0.0 && k > 0) q = tilt_frame(q, ts.x[i], options.tilt);
    ts.V.push_back(std::move(q));
  }

  ts.y.resize(n);
  ts.h.resize(n);
  switch (target) {
    case TargetKind::kRandomLabels: {
      std::normal_distribution<double> normal;
      for (std::size_t i = 0; i < n; ++i) {
        ts.y[i] = normal(rng);
        ts.h[i] = gaussian_vector(rng, k);
      }
      break;
    }
    case TargetKind::kQuadratic:
      // f*(x) = ‖x‖²/2, ∇f* = x.
      for (std::size_t i = 0; i < n; ++i) {
        ts.y[i] = 0.5 * ts.x[i].squaredNorm();
        ts.h[i] = ts.V[i].transpose() * ts.x[i];
      }
      break;
    case TargetKind::kTeacherMlp: {
      const TeacherMlp teacher(d, seed);
      for (std::size_t i = 0; i < n; ++i) {
        ts.y[i] = teacher.value(ts.x[i]);
        ts.h[i] = ts.V[i].transpose() * teacher.gradient(ts.x[i]);
      }
      break;
    }
  }
  return ts;
}

SeparationReport validate(const TrainingSet& ts) {
  SeparationReport rep;
  rep.k = ts.k;
  if (ts.n == 1) {
    rep.delta1 = 2.0;
    rep.delta1_hat = 2.0;
    rep.singleton_convention = true;
  } else {
    rep.delta1 = std::numeric_limits<double>::infinity();
    rep.delta1_hat = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ts.n; ++i) {
      for (std::size_t j = i + 1; j < ts.n; ++j) {
        const double minus = (ts.x[i] - ts.x[j]).norm();
        const double plus = (ts.x[i] + ts.x[j]).norm();
        rep.delta1 = std::min(rep.delta1, std::min(minus, plus));
        rep.delta1_hat = std::min(rep.delta1_hat, minus);
      }
    }
  }
  for (std::size_t i = 0; i < ts.n; ++i) {
    for (std::size_t j = 0; j < ts.k; ++j) {
      rep.delta2 = std::max(rep.delta2, std::abs(ts.V[i].col(j).dot(ts.x[i])));
    }
  }
  rep.gamma = ts.labels().norm() + ts.directional_targets().norm();
  rep.satisfies_assumption1 = rep.delta1 > 0.0 && static_cast<double>(ts.k) * rep.delta2 < 1.0;
  rep.satisfies_assumption2 = rep.delta1_hat > 0.0;
  return rep;
}

void check_invariants(const TrainingSet& ts) {
  if (ts.x.size() != ts.n || ts.y.size() != ts.n || ts.V.size() != ts.n || ts.h.size() != ts.n) {
    throw InvalidInputError("training set: record count does not match n");
  }
  if (ts.k >= ts.d) throw InvalidInputError("training set: need k < d");
  for (std::size_t i = 0; i < ts.n; ++i) {
    const std::string where = "sample " + std::to_string(i);
    if (static_cast<std::size_t>(ts.x[i].size()) != ts.d ||
        static_cast<std::size_t>(ts.V[i].rows()) != ts.d ||
        static_cast<std::size_t>(ts.V[i].cols()) != ts.k ||
        static_cast<std::size_t>(ts.h[i].size()) != ts.k) {
      throw InvalidInputError(where + ": wrong dimensions");
    }
    if (!ts.x[i].allFinite() || !std::isfinite(ts.y[i]) || !ts.V[i].allFinite() || !ts.h[i].allFinite()) {
      throw InvalidInputError(where + ": non-finite value");
    }
    if (std::abs(ts.x[i].norm() - 1.0) > 1e-12) {
      throw InvalidInputError(where + ": x is not normalized (norm " + std::to_string(ts.x[i].norm()) + ")");
    }
    const Matrix gram = ts.V[i].transpose() * ts.V[i];
    const double dev = (gram - Matrix::Identity(ts.k, ts.k)).cwiseAbs().maxCoeff();
    if (ts.k > 0 && dev > 1e-10) {
      throw InvalidInputError(where + ": V columns are not orthonormal (deviation " + std::to_string(dev) + ")");
    }
  }
}

// ---------------------------------------------------------------------------
// Text format:
//   sflab-dataset 1
//   n <n>
//   d <d>
//   k <k>
//   sample <i>
//   x <d reals>
//   y <real>
//   V <d*k reals, column-major>
//   h <k reals>
// Lines starting with '#' are comments. Reals use 17 significant digits.

namespace {

void append_reals(std::string& out, const double* data, std::size_t count) {
  char buf[40];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", data[i]);
    out += buf;
  }
}

struct LineReader {
  std::istringstream in;
  std::size_t line_no = 0;
  int sample = -1;

  explicit LineReader(std::string_view text) : in(std::string(text)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    std::string where = "line " + std::to_string(line_no);
    if (sample >= 0) where += " (sample " + std::to_string(sample) + ")";
    throw ParseError("dataset parse error at " + where + ": " + msg);
  }

  // Next non-comment line split as keyword + rest.
  std::pair<std::string, std::string> next() {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      const auto space = line.find(' ');
      if (space == std::string::npos) return {line, ""};
      return {line.substr(0, space), line.substr(space + 1)};
    }
    fail("unexpected end of file");
  }

  std::vector<double> reals(const std::string& rest, std::size_t expected) const {
    std::vector<double> values;
    const char* p = rest.c_str();
    while (true) {
      while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (*p == '\0') break;
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) fail("malformed real near '" + std::string(p).substr(0, 20) + "'");
      values.push_back(v);
      p = end;
    }
    if (values.size() != expected) {
      fail("expected " + std::to_string(expected) + " reals, found " + std::to_string(values.size()));
    }
    return values;
  }

  std::size_t header(const char* key) {
    auto [kw, rest] = next();
    if (kw != key) fail(std::string("expected header field '") + key + "'");
    char* end = nullptr;
    const unsigned long long v = std::strtoull(rest.c_str(), &end, 10);
    if (end == rest.c_str()) fail(std::string("malformed value for '") + key + "'");
    return static_cast<std::size_t>(v);
  }

  std::vector<double> field(const char* key, std::size_t expected) {
    auto [kw, rest] = next();
    if (kw != key) fail(std::string("expected field '") + key + "', found '" + kw + "'");
    return reals(rest, expected);
  }
};

}  // namespace

std::string serialize(const TrainingSet& ts) {
  std::string out = "sflab-dataset 1\n";
  out += "n " + std::to_string(ts.n) + "\n";
  out += "d " + std::to_string(ts.d) + "\n";
  out += "k " + std::to_string(ts.k) + "\n";
  for (std::size_t i = 0; i < ts.n; ++i) {
    out += "sample " + std::to_string(i) + "\n";
    out += "x";
    append_reals(out, ts.x[i].data(), ts.d);
    out += "\ny";
    append_reals(out, &ts.y[i], 1);
    out += "\nV";
    append_reals(out, ts.V[i].data(), ts.d * ts.k);  // Eigen default storage is column-major
    out += "\nh";
    append_reals(out, ts.h[i].data(), ts.k);
    out += "\n";
  }
  return out;
}

TrainingSet parse_training_set(std::string_view text) {
  LineReader r(text);
  {
    auto [kw, rest] = r.next();
    if (kw != "sflab-dataset" || rest != "1") r.fail("missing 'sflab-dataset 1' magic line");
  }
  TrainingSet ts;
  ts.n = r.header("n");
  ts.d = r.header("d");
  ts.k = r.header("k");
  if (ts.n == 0 || ts.d == 0) r.fail("n and d must be positive");
  if (ts.k >= ts.d) r.fail("need k < d");
  for (std::size_t i = 0; i < ts.n; ++i) {
    r.sample = static_cast<int>(i);
    if (r.header("sample") != i) r.fail("sample index out of order");
    const auto x = r.field("x", ts.d);
    const auto y = r.field("y", 1);
    const auto v = r.field("V", ts.d * ts.k);
    const auto h = r.field("h", ts.k);
    ts.x.emplace_back(Eigen::Map<const Vector>(x.data(), ts.d));
    ts.y.push_back(y[0]);
    ts.V.emplace_back(Eigen::Map<const Matrix>(v.data(), ts.d, ts.k));
    ts.h.emplace_back(Eigen::Map<const Vector>(h.data(), ts.k));
  }
  try {
    check_invariants(ts);
  } catch (const InvalidInputError& e) {
    throw ParseError(std::string("dataset rejected: ") + e.what());
  }
  return ts;
}

void save(const TrainingSet& ts, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << serialize(ts);
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

TrainingSet load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_training_set(buf.str());
}

}  // namespace sflab
