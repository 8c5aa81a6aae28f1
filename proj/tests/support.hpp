#pragma once

// Independent reference implementations used as test oracles. They are
// written from the defining formulas with plain loops and share no code with
// the library beyond the data types.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sflab/dataset.hpp"
#include "sflab/network.hpp"

namespace oracle {

using sflab::Matrix;
using sflab::NetParams;
using sflab::TrainingSet;
using sflab::Vector;

inline double relu(double z) { return z > 0.0 ? z : 0.0; }
inline double step(double z) { return z > 0.0 ? 1.0 : 0.0; }

inline double pre(const NetParams& p, std::size_t r, const Vector& x) {
  double s = 0.0;
  for (std::size_t c = 0; c < p.d; ++c) s += p.W(r, c) * x(c);
  return p.has_bias ? p.alpha * s + p.beta * p.b(r) : s;
}

inline double forward(const NetParams& p, const Vector& x) {
  double s = 0.0;
  for (std::size_t r = 0; r < p.m; ++r) s += p.a(r) * relu(pre(p, r, x));
  return s;
}

// ∇_x of the network output (including α for the bias net).
inline Vector grad_x(const NetParams& p, const Vector& x) {
  Vector g = Vector::Zero(p.d);
  const double scale = p.has_bias ? p.alpha : 1.0;
  for (std::size_t r = 0; r < p.m; ++r) {
    const double act = step(pre(p, r, x));
    for (std::size_t c = 0; c < p.d; ++c) g(c) += p.a(r) * act * scale * p.W(r, c);
  }
  return g;
}

// Stacked residual (e; S) with S divided by α for the bias net.
inline Vector residual(const NetParams& p, const TrainingSet& ts) {
  Vector r(ts.n * (ts.k + 1));
  for (std::size_t i = 0; i < ts.n; ++i) {
    r(i) = ts.y[i] - oracle::forward(p, ts.x[i]);
    const Vector g = oracle::grad_x(p, ts.x[i]);
    for (std::size_t j = 0; j < ts.k; ++j) {
      double dir = 0.0;
      for (std::size_t c = 0; c < ts.d; ++c) dir += ts.V[i](c, j) * g(c);
      double s = ts.h[i](j) - dir;
      if (p.has_bias) s /= p.alpha;
      r(ts.n + i * ts.k + j) = s;
    }
  }
  return r;
}

inline double loss(const NetParams& p, const TrainingSet& ts) { return 0.5 * oracle::residual(p, ts).squaredNorm(); }

// Jacobian of the stacked network outputs (values, then rescaled directional
// outputs) with respect to (W row-major, then b).
inline Matrix output_jacobian(const NetParams& p, const TrainingSet& ts) {
  const std::size_t rows = ts.n * (ts.k + 1);
  const std::size_t cols = p.m * p.d + (p.has_bias ? p.m : 0);
  Matrix J = Matrix::Zero(rows, cols);
  const double scale = p.has_bias ? p.alpha : 1.0;
  for (std::size_t i = 0; i < ts.n; ++i) {
    for (std::size_t r = 0; r < p.m; ++r) {
      const double act = step(pre(p, r, ts.x[i]));
      for (std::size_t c = 0; c < p.d; ++c) {
        J(i, r * p.d + c) = p.a(r) * act * scale * ts.x[i](c);
        for (std::size_t j = 0; j < ts.k; ++j) {
          // (1/α) ∂(v^T ∇g)/∂w = a σ' v, identical to the no-bias formula.
          J(ts.n + i * ts.k + j, r * p.d + c) = p.a(r) * act * ts.V[i](c, j);
        }
      }
      if (p.has_bias) J(i, p.m * p.d + r) = p.a(r) * act * p.beta;
    }
  }
  return J;
}

inline Vector flatten_params(const NetParams& p) {
  Vector v(p.m * p.d + (p.has_bias ? p.m : 0));
  for (std::size_t r = 0; r < p.m; ++r) {
    for (std::size_t c = 0; c < p.d; ++c) v(r * p.d + c) = p.W(r, c);
  }
  if (p.has_bias) {
    for (std::size_t r = 0; r < p.m; ++r) v(p.m * p.d + r) = p.b(r);
  }
  return v;
}

inline void set_param(NetParams& p, std::size_t idx, double value) {
  if (idx < p.m * p.d) p.W(idx / p.d, idx % p.d) = value;
  else p.b(idx - p.m * p.d) = value;
}

// Smallest |pre-activation| of neuron r over the training set.
inline double min_abs_pre(const NetParams& p, const TrainingSet& ts, std::size_t r) {
  double v = INFINITY;
  for (const auto& x : ts.x) v = std::min(v, std::abs(pre(p, r, x)));
  return v;
}

// Random symmetric matrix with N(0,1) entries.
inline Matrix random_symmetric(std::mt19937_64& eng, std::size_t dim) {
  std::normal_distribution<double> g;
  Matrix m(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m(i, j) = m(j, i) = g(eng);
  }
  return m;
}

inline Matrix random_psd(std::mt19937_64& eng, std::size_t dim) {
  std::normal_distribution<double> g;
  Matrix f(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) f(i, j) = g(eng);
  }
  return f * f.transpose() / static_cast<double>(dim);
}

// Eigenvalues of a symmetric 2×2 matrix, ascending.
inline std::pair<double, double> eig2(double a, double b, double d) {
  const double mid = 0.5 * (a + d);
  const double rad = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  return {mid - rad, mid + rad};
}

// Hand-built training set from explicit points and frames.
inline TrainingSet make_set(std::vector<Vector> x, std::vector<double> y, std::vector<Matrix> V,
                            std::vector<Vector> h) {
  TrainingSet ts;
  ts.n = x.size();
  ts.d = static_cast<std::size_t>(x.front().size());
  ts.k = V.empty() ? 0 : static_cast<std::size_t>(V.front().cols());
  ts.x = std::move(x);
  ts.y = std::move(y);
  ts.V = std::move(V);
  ts.h = std::move(h);
  if (ts.V.empty()) {
    for (std::size_t i = 0; i < ts.n; ++i) {
      ts.V.push_back(Matrix::Zero(static_cast<Eigen::Index>(ts.d), 0));
      ts.h.push_back(Vector::Zero(0));
    }
  }
  return ts;
}

inline Vector unit(std::size_t d, std::size_t i) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(d));
  v(static_cast<Eigen::Index>(i)) = 1.0;
  return v;
}

}  // namespace oracle
