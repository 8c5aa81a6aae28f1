#include "sflab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sflab/errors.hpp"

namespace sflab {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidInputError(std::string(what) + ": matrix has non-finite entries");
  }
}

SymMatrix::SymMatrix(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw InvalidInputError("SymMatrix: matrix is not square");
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(std::size_t dim) {
  SymMatrix s;
  s.m_ = Matrix::Identity(dim, dim);
  return s;
}

SymMatrix SymMatrix::zero(std::size_t dim) {
  SymMatrix s;
  s.m_ = Matrix::Zero(dim, dim);
  return s;
}

BlockMatrix::BlockMatrix(std::size_t n_blocks, std::size_t block_dim)
    : n_blocks_(n_blocks), p_(block_dim), blocks_(n_blocks * n_blocks, Matrix::Zero(block_dim, block_dim)) {}

BlockMatrix BlockMatrix::from_matrix(const Matrix& m, std::size_t block_dim) {
  if (block_dim == 0 || m.rows() != m.cols() || static_cast<std::size_t>(m.rows()) % block_dim != 0) {
    throw InvalidInputError("BlockMatrix: dimension is not a multiple of the block size");
  }
  const std::size_t nb = static_cast<std::size_t>(m.rows()) / block_dim;
  BlockMatrix out(nb, block_dim);
  for (std::size_t a = 0; a < nb; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      out.block(a, b) = m.block(a * block_dim, b * block_dim, block_dim, block_dim);
    }
  }
  return out;
}

Matrix BlockMatrix::flatten() const {
  Matrix out(dim(), dim());
  for (std::size_t a = 0; a < n_blocks_; ++a) {
    for (std::size_t b = 0; b < n_blocks_; ++b) {
      out.block(a * p_, b * p_, p_, p_) = block(a, b);
    }
  }
  return out;
}

namespace {

void check_tol(double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol <= 1e-4)) {
    throw InvalidInputError("lambda_min: rel_tol must lie in (0, 1e-4]");
  }
}

}  // namespace

Vector eigenvalues(const SymMatrix& m) {
  if (m.dim() == 0) {
    throw InvalidInputError("eigenvalues: empty matrix");
  }
  require_finite(m.matrix(), "eigenvalues");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error("eigenvalues: symmetric eigensolver did not converge");
  }
  return solver.eigenvalues();
}

double lambda_min(const SymMatrix& m, double rel_tol) {
  check_tol(rel_tol);
  return eigenvalues(m)(0);
}

double lambda_max(const SymMatrix& m, double rel_tol) {
  check_tol(rel_tol);
  const Vector ev = eigenvalues(m);
  return ev(ev.size() - 1);
}

Matrix kronecker(const Matrix& a, const Matrix& b, std::size_t max_dim) {
  require_finite(a, "kronecker");
  require_finite(b, "kronecker");
  const auto rows = static_cast<std::size_t>(a.rows()) * static_cast<std::size_t>(b.rows());
  const auto cols = static_cast<std::size_t>(a.cols()) * static_cast<std::size_t>(b.cols());
  if (rows > max_dim || cols > max_dim) {
    throw CapacityError("kronecker: product dimension " + std::to_string(rows) + " exceeds limit " +
                        std::to_string(max_dim));
  }
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

SymMatrix kronecker(const SymMatrix& a, const SymMatrix& b, std::size_t max_dim) {
  return SymMatrix(kronecker(a.matrix(), b.matrix(), max_dim));
}

BlockMatrix block_hadamard(const BlockMatrix& a, const BlockMatrix& b) {
  if (a.n_blocks() != b.n_blocks() || a.block_dim() != b.block_dim()) {
    throw InvalidInputError("block_hadamard: block layouts differ");
  }
  BlockMatrix out(a.n_blocks(), a.block_dim());
  for (std::size_t i = 0; i < a.n_blocks(); ++i) {
    for (std::size_t j = 0; j < a.n_blocks(); ++j) {
      out.block(i, j).noalias() = a.block(i, j) * b.block(i, j);
    }
  }
  return out;
}

double gershgorin_lower_bound(const SymMatrix& m) {
  require_finite(m.matrix(), "gershgorin_lower_bound");
  const Matrix& s = m.matrix();
  double bound = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double radius = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (j != i) radius += std::abs(s(i, j));
    }
    bound = std::min(bound, s(i, i) - radius);
  }
  return bound;
}

double frobenius_distance(const SymMatrix& a, const SymMatrix& b) {
  if (a.dim() != b.dim()) {
    throw InvalidInputError("frobenius_distance: dimension mismatch");
  }
  return (a.matrix() - b.matrix()).norm();
}

}  // namespace sflab
