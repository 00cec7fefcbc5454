#include "sgo/rng.hpp"

#include <Eigen/QR>

#include <cmath>

namespace sgo {

namespace {

std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  return splitmix_finalize(state_);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double Rng::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the argument of log strictly positive.
  const double u1 = 1.0 - next_double();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Rng Rng::child(std::string_view label) const {
  return Rng(splitmix_finalize(seed_ ^ fnv1a(label)));
}

Rng Rng::child(std::uint64_t index) const {
  return Rng(splitmix_finalize(seed_ ^ splitmix_finalize(index + 0x51ED270B0A1ULL)));
}

Matrix random_matrix(Rng& rng, Index rows, Index cols) {
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      out(i, j) = rng.next_gaussian();
    }
  }
  return out;
}

Matrix random_orthogonal(Rng& rng, Index n) {
  const Matrix g = random_matrix(rng, n, n);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix random_spd(Rng& rng, Index n, double cond, double top) {
  const Matrix q = random_orthogonal(rng, n);
  Vector lambda(n);
  for (Index i = 0; i < n; ++i) {
    const double t = (n > 1) ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    lambda(i) = top * std::pow(cond, -t);
  }
  const Matrix x = q * lambda.asDiagonal() * q.transpose();
  return Matrix(0.5 * (x + x.transpose()));
}

Matrix random_psd_rank(Rng& rng, Index n, Index rank, double top) {
  const Matrix q = random_orthogonal(rng, n);
  Vector lambda = Vector::Zero(n);
  for (Index i = 0; i < rank; ++i) {
    const double t = (rank > 1) ? static_cast<double>(i) / static_cast<double>(rank - 1) : 0.0;
    lambda(i) = top * std::pow(10.0, -t);
  }
  const Matrix x = q * lambda.asDiagonal() * q.transpose();
  return Matrix(0.5 * (x + x.transpose()));
}

}  // namespace sgo
