#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace sgo {

// Dense double-precision matrix in row-major storage; the common currency of
// the whole library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Error hierarchy
// ---------------------------------------------------------------------------

class LinalgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public LinalgError {
 public:
  using LinalgError::LinalgError;
};

class NotSymmetricError : public LinalgError {
 public:
  using LinalgError::LinalgError;
};

class NotPsdError : public LinalgError {
 public:
  using LinalgError::LinalgError;
};

class SingularMatrixError : public LinalgError {
 public:
  using LinalgError::LinalgError;
};

class ConvergenceError : public LinalgError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : LinalgError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_ = 0.0;
};

class DivergenceError : public LinalgError {
 public:
  DivergenceError(const std::string& what, int iteration)
      : LinalgError(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_ = 0;
};

// ---------------------------------------------------------------------------
// Decomposition results
// ---------------------------------------------------------------------------

// Eigendecomposition of a symmetric matrix: eigenvalues descending,
// eigenvectors stored column-wise in the same order.
struct SymEig {
  Vector eigenvalues;
  Matrix eigenvectors;
};

// Thin SVD truncated to numerical rank: u is m-by-r, v is n-by-r,
// singular_values holds the r retained values in descending order.
struct Svd {
  Matrix u;
  Vector singular_values;
  Matrix v;
  Index rank = 0;
};

struct MatrixNorms {
  double frobenius = 0.0;
  double spectral = 0.0;
  double trace_norm = 0.0;
  std::optional<double> trace;  // only defined for square inputs
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Product with an explicit inner-dimension check (throws DimensionMismatch).
Matrix matmul(const Matrix& a, const Matrix& b);

// (x + x^T) / 2; throws DimensionMismatch for non-square input.
Matrix symmetrize(const Matrix& x);

// Sum of diagonal entries; throws DimensionMismatch for non-square input.
double trace(const Matrix& x);

double frobenius_norm(const Matrix& x);
double spectral_norm(const Matrix& x);
double trace_norm(const Matrix& x);
MatrixNorms norms(const Matrix& x);

// Symmetric eigendecomposition. Requires near-symmetry
// (||x - x^T||_F <= 1e-8 * ||x||_F), symmetrizes before decomposing, and
// validates the reconstruction ||Q diag(l) Q^T - X||_F <= tol * ||X||_F.
SymEig sym_eig(const Matrix& x, double tol = 1e-10);

// Thin SVD with rank truncation: singular values below rank_tol * s_max are
// dropped. A zero matrix yields rank 0 with empty factors.
Svd svd(const Matrix& x, double rank_tol = 1e-12);

// Q diag(max(l, floor))^p Q^T for symmetric PSD x. Throws NotPsdError if an
// eigenvalue is below -1e-8 * l_max, and SingularMatrixError when a negative
// power meets a zero eigenvalue with floor == 0.
Matrix psd_power(const Matrix& x, double p, double floor = 0.0);

// Loewner order test: a <= b iff l_min(b - a) >= -tol.
bool loewner_leq(const Matrix& a, const Matrix& b, double tol = 1e-9);

}  // namespace sgo
