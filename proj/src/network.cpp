#include "sflab/network.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sflab/errors.hpp"
#include "sflab/rng.hpp"

namespace sflab {

namespace {

inline double relu(double z) { return z > 0.0 ? z : 0.0; }
inline double relu_prime(double z) { return z > 0.0 ? 1.0 : 0.0; }

}  // namespace

double bias_alpha(std::size_t k) { return k == 0 ? 0.5 : 1.0 / (2.0 * static_cast<double>(k)); }

NetParams init(std::size_t m, std::size_t d, std::size_t k, bool has_bias, std::uint64_t seed) {
  if (m == 0 || d == 0) throw InvalidInputError("init: m and d must be positive");
  Engine rng = make_engine(seed, kStreamInit);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);

  NetParams p;
  p.m = m;
  p.d = d;
  p.W.resize(m, d);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < d; ++j) p.W(r, j) = normal(rng);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  p.a.resize(m);
  for (std::size_t r = 0; r < m; ++r) p.a(r) = coin(rng) ? scale : -scale;
  p.has_bias = has_bias;
  if (has_bias) {
    p.b.resize(m);
    for (std::size_t r = 0; r < m; ++r) p.b(r) = normal(rng);
    p.alpha = bias_alpha(k);
    p.beta = std::sqrt(1.0 - p.alpha * p.alpha);
  }
  return p;
}

double preactivation(const NetParams& p, std::size_t r, const Vector& x) {
  const double wx = p.W.row(r).dot(x);
  return p.has_bias ? p.alpha * wx + p.beta * p.b(r) : wx;
}

double forward(const NetParams& p, const Vector& x) {
  double out = 0.0;
  for (std::size_t r = 0; r < p.m; ++r) out += p.a(r) * relu(preactivation(p, r, x));
  return out;
}

namespace {

// Σ_r a_r σ'(z_r) w_r, i.e. the input gradient without the α factor.
Vector rescaled_gradient(const NetParams& p, const Vector& x) {
  Vector g = Vector::Zero(p.d);
  for (std::size_t r = 0; r < p.m; ++r) {
    if (preactivation(p, r, x) > 0.0) g += p.a(r) * p.W.row(r).transpose();
  }
  return g;
}

}  // namespace

Vector input_gradient(const NetParams& p, const Vector& x) {
  Vector g = rescaled_gradient(p, x);
  if (p.has_bias) g *= p.alpha;
  return g;
}

NetOutput directional_output(const NetParams& p, const Vector& x, const Matrix& V) {
  NetOutput out;
  out.value = forward(p, x);
  out.dir_grad = V.transpose() * rescaled_gradient(p, x);
  return out;
}

NeuronJacobian param_jacobian_row(const NetParams& p, const Vector& x, const Matrix& V, std::size_t r) {
  if (r >= p.m) throw InvalidInputError("param_jacobian_row: neuron index out of range");
  const double gate = p.a(r) * relu_prime(preactivation(p, r, x));
  NeuronJacobian jac;
  jac.value_w = (p.has_bias ? gate * p.alpha : gate) * x;
  jac.dir_w = gate * V;
  jac.value_b = p.has_bias ? gate * p.beta : 0.0;
  jac.dir_b = Vector::Zero(V.cols());
  return jac;
}

void check_compatible(const NetParams& p, const TrainingSet& ts) {
  if (p.d != ts.d) {
    throw InvalidInputError("network input dimension " + std::to_string(p.d) +
                            " does not match dataset dimension " + std::to_string(ts.d));
  }
}

Matrix preactivations(const NetParams& p, const TrainingSet& ts) {
  check_compatible(p, ts);
  Matrix xs(ts.d, ts.n);
  for (std::size_t i = 0; i < ts.n; ++i) xs.col(i) = ts.x[i];
  Matrix z = p.W * xs;
  if (p.has_bias) {
    z *= p.alpha;
    z.colwise() += p.beta * p.b;
  }
  return z;
}

std::vector<NetOutput> evaluate(const NetParams& p, const TrainingSet& ts) {
  const Matrix z = preactivations(p, ts);
  const Matrix gated = (z.array() > 0.0).cast<double>().matrix().array().colwise() * p.a.array();
  const Vector values = (z.array().max(0.0).colwise() * p.a.array()).colwise().sum().transpose();
  const Matrix grads = p.W.transpose() * gated;  // d × n, column i = Σ_r a_r σ'(z_ri) w_r
  std::vector<NetOutput> out(ts.n);
  for (std::size_t i = 0; i < ts.n; ++i) {
    out[i].value = values(i);
    out[i].dir_grad = ts.V[i].transpose() * grads.col(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint text format:
//   sflab-checkpoint 1
//   m <m>
//   d <d>
//   bias <0|1>
//   alpha <real>
//   beta <real>
//   w <d reals>      (m lines, row r)
//   a <m reals>
//   b <m reals>      (only when bias = 1)

namespace {

void append_reals(std::string& out, const double* data, std::size_t count, std::size_t stride = 1) {
  char buf[40];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", data[i * stride]);
    out += buf;
  }
}

[[noreturn]] void checkpoint_fail(std::size_t line, const std::string& msg) {
  throw ParseError("checkpoint parse error at line " + std::to_string(line) + ": " + msg);
}

}  // namespace

std::string serialize(const NetParams& p) {
  std::string out = "sflab-checkpoint 1\n";
  out += "m " + std::to_string(p.m) + "\n";
  out += "d " + std::to_string(p.d) + "\n";
  out += std::string("bias ") + (p.has_bias ? "1" : "0") + "\n";
  out += "alpha";
  append_reals(out, &p.alpha, 1);
  out += "\nbeta";
  append_reals(out, &p.beta, 1);
  out += "\n";
  for (std::size_t r = 0; r < p.m; ++r) {
    out += "w";
    append_reals(out, p.W.data() + r, p.d, static_cast<std::size_t>(p.W.rows()));
    out += "\n";
  }
  out += "a";
  append_reals(out, p.a.data(), p.m);
  out += "\n";
  if (p.has_bias) {
    out += "b";
    append_reals(out, p.b.data(), p.m);
    out += "\n";
  }
  return out;
}

NetParams parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  auto next = [&](const std::string& key) -> std::vector<std::string> {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::vector<std::string> tok;
      for (std::string t; ls >> t;) tok.push_back(t);
      if (tok.empty() || tok[0] != key) checkpoint_fail(line_no, "expected '" + key + "'");
      return tok;
    }
    checkpoint_fail(line_no, "unexpected end of file, expected '" + key + "'");
  };
  auto reals = [&](const std::vector<std::string>& tok, std::size_t count) {
    if (tok.size() != count + 1) {
      checkpoint_fail(line_no, "expected " + std::to_string(count) + " values, found " +
                                   std::to_string(tok.size() - 1));
    }
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
      char* end = nullptr;
      v[i] = std::strtod(tok[i + 1].c_str(), &end);
      if (*end != '\0') checkpoint_fail(line_no, "malformed real '" + tok[i + 1] + "'");
    }
    return v;
  };
  auto count = [&](const std::string& key) {
    const auto tok = next(key);
    if (tok.size() != 2) checkpoint_fail(line_no, "malformed '" + key + "'");
    return static_cast<std::size_t>(std::strtoull(tok[1].c_str(), nullptr, 10));
  };

  if (next("sflab-checkpoint").size() != 2) checkpoint_fail(line_no, "bad magic line");
  NetParams p;
  p.m = count("m");
  p.d = count("d");
  if (p.m == 0 || p.d == 0) checkpoint_fail(line_no, "m and d must be positive");
  p.has_bias = count("bias") == 1;
  p.alpha = reals(next("alpha"), 1)[0];
  p.beta = reals(next("beta"), 1)[0];
  p.W.resize(p.m, p.d);
  for (std::size_t r = 0; r < p.m; ++r) {
    const auto row = reals(next("w"), p.d);
    for (std::size_t j = 0; j < p.d; ++j) p.W(r, j) = row[j];
  }
  const auto a = reals(next("a"), p.m);
  p.a = Eigen::Map<const Vector>(a.data(), p.m);
  if (p.has_bias) {
    const auto b = reals(next("b"), p.m);
    p.b = Eigen::Map<const Vector>(b.data(), p.m);
  }
  return p;
}

void save_checkpoint(const NetParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << serialize(p);
}

NetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace sflab
