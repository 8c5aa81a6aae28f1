#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace sflab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense symmetric matrix. The constructor symmetrizes its input as (M + Mᵀ)/2,
/// so downstream code may rely on exact symmetry.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m);
  static SymMatrix identity(std::size_t dim);
  static SymMatrix zero(std::size_t dim);

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

/// Square matrix partitioned into an n_blocks × n_blocks grid of p × p blocks.
class BlockMatrix {
 public:
  BlockMatrix(std::size_t n_blocks, std::size_t block_dim);
  /// Partitions a square matrix whose dimension is a multiple of block_dim.
  static BlockMatrix from_matrix(const Matrix& m, std::size_t block_dim);

  std::size_t n_blocks() const { return n_blocks_; }
  std::size_t block_dim() const { return p_; }
  std::size_t dim() const { return n_blocks_ * p_; }

  Matrix& block(std::size_t alpha, std::size_t beta) { return blocks_[alpha * n_blocks_ + beta]; }
  const Matrix& block(std::size_t alpha, std::size_t beta) const {
    return blocks_[alpha * n_blocks_ + beta];
  }

  Matrix flatten() const;

 private:
  std::size_t n_blocks_;
  std::size_t p_;
  std::vector<Matrix> blocks_;
};

/// Largest dimension kronecker() will produce unless told otherwise.
inline constexpr std::size_t kDefaultMaxKroneckerDim = 4096;

/// Smallest eigenvalue via a full dense symmetric eigendecomposition.
/// rel_tol must lie in (0, 1e-4]; the dense solver meets any such tolerance.
double lambda_min(const SymMatrix& m, double rel_tol = 1e-10);
double lambda_max(const SymMatrix& m, double rel_tol = 1e-10);
/// All eigenvalues in ascending order.
Vector eigenvalues(const SymMatrix& m);

SymMatrix kronecker(const SymMatrix& a, const SymMatrix& b,
                    std::size_t max_dim = kDefaultMaxKroneckerDim);
Matrix kronecker(const Matrix& a, const Matrix& b, std::size_t max_dim = kDefaultMaxKroneckerDim);

/// Blockwise matrix product: output block (α,β) = A_{αβ} · B_{αβ}.
BlockMatrix block_hadamard(const BlockMatrix& a, const BlockMatrix& b);

/// min_i (M_ii − Σ_{j≠i} |M_ij|), a lower bound on every eigenvalue.
double gershgorin_lower_bound(const SymMatrix& m);

double frobenius_distance(const SymMatrix& a, const SymMatrix& b);

/// Throws InvalidInputError if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

}  // namespace sflab
