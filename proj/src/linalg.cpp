#include "sgo/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sgo {

namespace {

std::string shape(const Matrix& x) {
  std::ostringstream os;
  os << x.rows() << "x" << x.cols();
  return os.str();
}

void require_square(const Matrix& x, const char* op) {
  if (x.rows() != x.cols()) {
    throw DimensionMismatch(std::string(op) + " requires a square matrix, got " + shape(x));
  }
}

// Shared symmetry gate for the symmetric-matrix entry points.
Matrix checked_symmetrize(const Matrix& x, const char* op) {
  require_square(x, op);
  const double scale = x.norm();
  const double asym = (x - x.transpose()).norm();
  if (asym > 1e-8 * scale) {
    std::ostringstream os;
    os << op << " requires a symmetric matrix: ||x - x^T||_F = " << asym
       << " exceeds 1e-8 * ||x||_F = " << 1e-8 * scale;
    throw NotSymmetricError(os.str());
  }
  return Matrix(0.5 * (x + x.transpose()));
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul inner dimensions differ: " + shape(a) + " * " + shape(b));
  }
  return a * b;
}

Matrix symmetrize(const Matrix& x) {
  require_square(x, "symmetrize");
  return Matrix(0.5 * (x + x.transpose()));
}

double trace(const Matrix& x) {
  require_square(x, "trace");
  return x.trace();
}

double frobenius_norm(const Matrix& x) { return x.norm(); }

double spectral_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> dec(x);
  return dec.singularValues().size() > 0 ? dec.singularValues()(0) : 0.0;
}

double trace_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> dec(x);
  return dec.singularValues().sum();
}

MatrixNorms norms(const Matrix& x) {
  MatrixNorms out;
  out.frobenius = x.norm();
  if (x.size() > 0) {
    Eigen::JacobiSVD<Matrix> dec(x);
    out.spectral = dec.singularValues().size() > 0 ? dec.singularValues()(0) : 0.0;
    out.trace_norm = dec.singularValues().sum();
  }
  if (x.rows() == x.cols()) out.trace = x.trace();
  return out;
}

SymEig sym_eig(const Matrix& x, double tol) {
  const Matrix xs = checked_symmetrize(x, "sym_eig");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(xs);
  if (solver.info() != Eigen::Success) {
    throw ConvergenceError("sym_eig: eigensolver failed to converge",
                           std::numeric_limits<double>::quiet_NaN());
  }
  SymEig out;
  // The solver returns ascending eigenvalues; flip to descending.
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();

  const Matrix recon =
      out.eigenvectors * out.eigenvalues.asDiagonal() * out.eigenvectors.transpose();
  const double scale = std::max(xs.norm(), 1e-300);
  const double residual = (recon - xs).norm() / scale;
  if (residual > tol) {
    std::ostringstream os;
    os << "sym_eig reconstruction residual " << residual << " exceeds tolerance " << tol;
    throw ConvergenceError(os.str(), residual);
  }
  return out;
}

Svd svd(const Matrix& x, double rank_tol) {
  Svd out;
  Eigen::JacobiSVD<Matrix> dec(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = dec.singularValues();
  const double s_max = s.size() > 0 ? s(0) : 0.0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > 0.0 && s(i) >= rank_tol * s_max) ++r;
  }
  out.rank = r;
  out.u = dec.matrixU().leftCols(r);
  out.singular_values = s.head(r);
  out.v = dec.matrixV().leftCols(r);
  return out;
}

Matrix psd_power(const Matrix& x, double p, double floor) {
  const SymEig eig = sym_eig(x);
  const double l_max = eig.eigenvalues.size() > 0 ? eig.eigenvalues(0) : 0.0;
  const double l_min = eig.eigenvalues.size() > 0 ? eig.eigenvalues(eig.eigenvalues.size() - 1) : 0.0;
  if (l_min < -1e-8 * std::max(l_max, 0.0)) {
    std::ostringstream os;
    os << "psd_power requires a PSD matrix: min eigenvalue " << l_min << " (max " << l_max << ")";
    throw NotPsdError(os.str());
  }
  Vector powered(eig.eigenvalues.size());
  for (Index i = 0; i < eig.eigenvalues.size(); ++i) {
    const double l = std::max({eig.eigenvalues(i), 0.0, floor});
    if (l == 0.0) {
      if (p < 0.0) {
        throw SingularMatrixError(
            "psd_power: negative power of a singular matrix with floor == 0");
      }
      powered(i) = (p == 0.0) ? 1.0 : 0.0;
    } else {
      powered(i) = std::pow(l, p);
    }
  }
  const Matrix result =
      eig.eigenvectors * powered.asDiagonal() * eig.eigenvectors.transpose();
  return Matrix(0.5 * (result + result.transpose()));
}

bool loewner_leq(const Matrix& a, const Matrix& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("loewner_leq shapes differ: " + shape(a) + " vs " + shape(b));
  }
  const Matrix diff = checked_symmetrize(Matrix(b - a), "loewner_leq");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(diff, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw ConvergenceError("loewner_leq: eigensolver failed to converge",
                           std::numeric_limits<double>::quiet_NaN());
  }
  return solver.eigenvalues()(0) >= -tol;
}

}  // namespace sgo
