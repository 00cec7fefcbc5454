#include <doctest.h>

#include "sgo/linalg.hpp"
#include "sgo/rng.hpp"

#include <cmath>

using namespace sgo;

namespace {

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

}  // namespace

TEST_CASE("matmul identity and diagonal cases") {
  Rng rng(101);
  const Matrix x = random_matrix(rng, 3, 5);
  CHECK(((Matrix::Identity(3, 3) * x).eval() - matmul(Matrix::Identity(3, 3), x)).norm() == 0.0);
  CHECK((matmul(Matrix::Identity(3, 3), x) - x).norm() == doctest::Approx(0.0));

  const Matrix d = matmul(diag2(2.0, 3.0), diag2(5.0, 7.0));
  CHECK(d(0, 0) == doctest::Approx(10.0));
  CHECK(d(1, 1) == doctest::Approx(21.0));
  CHECK(d(0, 1) == 0.0);
  CHECK(d(1, 0) == 0.0);
}

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(102);
  const Matrix a = random_matrix(rng, 4, 3);
  const Matrix b = random_matrix(rng, 3, 5);
  const Matrix c = matmul(a, b);
  Matrix naive = Matrix::Zero(4, 5);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 5; ++j) {
      for (Index k = 0; k < 3; ++k) naive(i, j) += a(i, k) * b(k, j);
    }
  }
  CHECK((c - naive).norm() <= 1e-12 * naive.norm());
}

TEST_CASE("matmul rejects mismatched shapes") {
  const Matrix a = Matrix::Zero(2, 3);
  const Matrix b = Matrix::Zero(2, 3);
  CHECK_THROWS_AS(matmul(a, b), DimensionMismatch);
}

TEST_CASE("sym_eig orders a diagonal spectrum descending") {
  Matrix x = Matrix::Zero(3, 3);
  x(0, 0) = 3.0;
  x(1, 1) = 1.0;
  x(2, 2) = 2.0;
  const SymEig e = sym_eig(x);
  CHECK(e.eigenvalues(0) == doctest::Approx(3.0));
  CHECK(e.eigenvalues(1) == doctest::Approx(2.0));
  CHECK(e.eigenvalues(2) == doctest::Approx(1.0));
  // Eigenvectors are signed unit coordinate axes permuted to match the order.
  Matrix perm = Matrix::Zero(3, 3);
  perm(0, 0) = 1.0;
  perm(2, 1) = 1.0;
  perm(1, 2) = 1.0;
  CHECK((e.eigenvectors.cwiseAbs() - perm).norm() <= 1e-12);
}

TEST_CASE("sym_eig on a 2x2 with known spectrum") {
  Matrix x(2, 2);
  x << 2.0, 1.0, 1.0, 2.0;
  const SymEig e = sym_eig(x);
  CHECK(e.eigenvalues(0) == doctest::Approx(3.0));
  CHECK(e.eigenvalues(1) == doctest::Approx(1.0));
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(e.eigenvectors(0, 0)) == doctest::Approx(s));
  CHECK(std::abs(e.eigenvectors(1, 0)) == doctest::Approx(s));
  const Matrix recon =
      e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
  CHECK((recon - x).norm() <= 1e-12);
}

TEST_CASE("sym_eig reconstructs a random symmetric matrix") {
  Rng rng(103);
  const Matrix x = symmetrize(random_matrix(rng, 16, 16));
  const SymEig e = sym_eig(x);
  const Matrix recon =
      e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
  CHECK((recon - x).norm() <= 1e-10 * x.norm());
  for (Index i = 0; i + 1 < 16; ++i) CHECK(e.eigenvalues(i) >= e.eigenvalues(i + 1));
  CHECK((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(16, 16)).norm() <= 1e-12);
}

TEST_CASE("sym_eig rejects a non-symmetric input") {
  Matrix x(2, 2);
  x << 0.0, 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(sym_eig(x), NotSymmetricError);
}

TEST_CASE("svd of an antidiagonal 2x2") {
  Matrix x(2, 2);
  x << 0.0, 2.0, 1.0, 0.0;
  const Svd s = svd(x);
  REQUIRE(s.rank == 2);
  CHECK(s.singular_values(0) == doctest::Approx(2.0));
  CHECK(s.singular_values(1) == doctest::Approx(1.0));
  Matrix expect(2, 2);
  expect << 0.0, 1.0, 1.0, 0.0;
  CHECK((Matrix(s.u * s.v.transpose()) - expect).norm() <= 1e-12);
}

TEST_CASE("svd detects rank one") {
  Rng rng(104);
  Matrix u = random_matrix(rng, 6, 1);
  Matrix v = random_matrix(rng, 4, 1);
  const Svd s = svd(Matrix(u * v.transpose()));
  CHECK(s.rank == 1);
  CHECK(s.singular_values(0) == doctest::Approx(u.norm() * v.norm()));
}

TEST_CASE("svd reconstructs a random matrix") {
  Rng rng(105);
  const Matrix x = random_matrix(rng, 8, 5);
  const Svd s = svd(x);
  const Matrix recon = s.u * s.singular_values.asDiagonal() * s.v.transpose();
  CHECK((recon - x).norm() <= 1e-9 * x.norm());
}

TEST_CASE("psd_power closed forms") {
  const Matrix r = psd_power(diag2(4.0, 1.0), -0.5);
  CHECK(r(0, 0) == doctest::Approx(0.5));
  CHECK(r(1, 1) == doctest::Approx(1.0));
  CHECK(std::abs(r(0, 1)) <= 1e-15);

  for (double p : {-0.5, -0.25, 0.25, 0.5, 1.0, 2.0}) {
    const Matrix i5 = psd_power(Matrix::Identity(5, 5), p);
    CHECK((i5 - Matrix::Identity(5, 5)).norm() <= 1e-12);
  }
}

TEST_CASE("psd_power square root squares back") {
  Rng rng(106);
  const Matrix x = random_spd(rng, 12, 100.0, 1.0);
  const Matrix h = psd_power(x, 0.5);
  CHECK((Matrix(h * h) - x).norm() <= 1e-9 * x.norm());
}

TEST_CASE("psd_power input validation") {
  CHECK_THROWS_AS(psd_power(diag2(-1.0, 2.0), 0.5), NotPsdError);
  CHECK_THROWS_AS(psd_power(diag2(0.0, 1.0), -0.5), SingularMatrixError);
  // A spectral floor repairs the singular direction.
  const Matrix f = psd_power(diag2(0.0, 1.0), -0.5, 0.25);
  CHECK(f(0, 0) == doctest::Approx(2.0));
  CHECK(f(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("norms of a diagonal matrix") {
  const MatrixNorms n = norms(diag2(3.0, 4.0));
  CHECK(n.frobenius == doctest::Approx(5.0));
  CHECK(n.spectral == doctest::Approx(4.0));
  CHECK(n.trace_norm == doctest::Approx(7.0));
  REQUIRE(n.trace.has_value());
  CHECK(*n.trace == doctest::Approx(7.0));
}

TEST_CASE("norms of a unit rank-one matrix all agree") {
  Rng rng(107);
  Matrix u = random_matrix(rng, 5, 1);
  Matrix v = random_matrix(rng, 3, 1);
  u /= u.norm();
  v /= v.norm();
  const MatrixNorms n = norms(Matrix(u * v.transpose()));
  CHECK(n.frobenius == doctest::Approx(1.0));
  CHECK(n.spectral == doctest::Approx(1.0));
  CHECK(n.trace_norm == doctest::Approx(1.0));
  CHECK_FALSE(n.trace.has_value());
}

TEST_CASE("norm inequalities on a random rectangular matrix") {
  Rng rng(108);
  const Matrix x = random_matrix(rng, 6, 4);
  const MatrixNorms n = norms(x);
  const Svd s = svd(x);
  CHECK(n.trace_norm >= n.frobenius - 1e-12);
  CHECK(n.frobenius >= n.spectral - 1e-12);
  CHECK(n.trace_norm <= std::sqrt(static_cast<double>(s.rank)) * n.frobenius + 1e-12);
}

TEST_CASE("loewner_leq basic order") {
  const Matrix i4 = Matrix::Identity(4, 4);
  CHECK(loewner_leq(i4, Matrix(2.0 * i4)));
  CHECK_FALSE(loewner_leq(Matrix(2.0 * i4), i4));

  Rng rng(109);
  const Matrix a = random_spd(rng, 4, 10.0, 1.0);
  const Matrix c = random_matrix(rng, 4, 1);
  CHECK(loewner_leq(a, Matrix(a + c * c.transpose())));
}

TEST_CASE("trace identities hold over many random instances") {
  Rng rng(110);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index m = 2 + static_cast<Index>(rng.next_u64() % 7);
    const Index n = 2 + static_cast<Index>(rng.next_u64() % 7);
    const Matrix a = random_matrix(rng, m, n);
    const Matrix b = random_matrix(rng, n, m);
    const double tab = trace(matmul(a, b));
    const double tba = trace(matmul(b, a));
    const double scale = std::max(std::abs(tab), 1.0);
    CHECK(std::abs(tab - tba) <= 1e-10 * scale);
  }
}

TEST_CASE("psd trace equals trace norm and cross-traces are nonnegative") {
  Rng rng(111);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.next_u64() % 7);
    const Matrix g = random_matrix(rng, n, n);
    const Matrix x = symmetrize(Matrix(g * g.transpose()));
    const MatrixNorms nm = norms(x);
    REQUIRE(nm.trace.has_value());
    CHECK(*nm.trace >= -1e-12);
    CHECK(std::abs(*nm.trace - nm.trace_norm) <= 1e-10 * std::max(nm.trace_norm, 1.0));

    const Matrix h = random_matrix(rng, n, n);
    const Matrix y = symmetrize(Matrix(h * h.transpose()));
    CHECK(trace(matmul(x, y)) >= -1e-10 * x.norm() * y.norm());
  }
}

TEST_CASE("sqrt of psd reconstructs across random instances") {
  Rng rng(112);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.next_u64() % 11);
    const Matrix x = random_spd(rng, n, rng.next_uniform(1.0, 1000.0), 1.0);
    const Matrix h = psd_power(x, 0.5);
    CHECK((Matrix(h * h) - x).norm() <= 1e-8 * std::max(1.0, x.norm()));
  }
}

TEST_CASE("svd is idempotent on its own reconstruction") {
  Rng rng(113);
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = 2 + static_cast<Index>(rng.next_u64() % 7);
    const Index n = 2 + static_cast<Index>(rng.next_u64() % 7);
    const Matrix x = random_matrix(rng, m, n);
    const Svd s1 = svd(x);
    const Matrix recon = s1.u * s1.singular_values.asDiagonal() * s1.v.transpose();
    const Svd s2 = svd(Matrix(recon));
    REQUIRE(s1.rank == s2.rank);
    for (Index i = 0; i < s1.rank; ++i) {
      CHECK(std::abs(s1.singular_values(i) - s2.singular_values(i)) <=
            1e-9 * std::max(1.0, s1.singular_values(0)));
    }
  }
}

TEST_CASE("random_orthogonal produces orthonormal columns") {
  Rng rng(114);
  const Matrix q = random_orthogonal(rng, 9);
  CHECK((q.transpose() * q - Matrix::Identity(9, 9)).norm() <= 1e-12);
}

TEST_CASE("random_spd hits the requested extreme eigenvalues") {
  Rng rng(115);
  const Matrix x = random_spd(rng, 6, 50.0, 2.0);
  const SymEig e = sym_eig(x);
  CHECK(e.eigenvalues(0) == doctest::Approx(2.0));
  CHECK(e.eigenvalues(5) == doctest::Approx(2.0 / 50.0));
}
