#include <doctest.h>

#include "sgo/linalg.hpp"
#include "sgo/optim.hpp"
#include "sgo/rng.hpp"

#include <cmath>
#include <vector>

using namespace sgo;

namespace {

OptimizerConfig practical_exact_config() {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::AsgoPractical;
  cfg.kernel = KernelKind::ExactEig;
  cfg.lr = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("full-spectrum preconditioner on a rank-one gradient") {
  OptimizerState st;
  Matrix w = Matrix::Zero(2, 2);
  Matrix g(2, 2);
  g << 2.0, 0.0, 0.0, 0.0;
  asgo_theoretical_step(st, w, g, 1.0, 0.5);
  // Accumulated square is diag(4, 0); its root plus the damping gives
  // diag(2.5, 0.5), so the step is -diag(0.4, 2.0) * g.
  CHECK(w(0, 0) == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(w(0, 1) == 0.0);
  CHECK(w(1, 0) == 0.0);
  CHECK(w(1, 1) == 0.0);
}

TEST_CASE("full-spectrum preconditioner matches an explicit oracle over five steps") {
  Rng rng(301);
  const double lr = 0.3;
  const double eps = 0.1;
  OptimizerState st;
  Matrix w = random_matrix(rng, 8, 4);
  Matrix w_oracle = w;
  Matrix v_oracle = Matrix::Zero(8, 8);
  Rng grad_rng = rng.child("grads");
  for (int t = 0; t < 5; ++t) {
    const Matrix g = random_matrix(grad_rng, 8, 4);
    asgo_theoretical_step(st, w, g, lr, eps);

    v_oracle = symmetrize(Matrix(v_oracle + g * g.transpose()));
    const SymEig e = sym_eig(v_oracle);
    Vector inv = e.eigenvalues;
    for (Index i = 0; i < inv.size(); ++i) {
      inv(i) = 1.0 / (std::sqrt(std::max(inv(i), 0.0)) + eps);
    }
    const Matrix lam_inv = e.eigenvectors * inv.asDiagonal() * e.eigenvectors.transpose();
    w_oracle -= lr * (lam_inv * g);
  }
  CHECK((w - w_oracle).norm() <= 1e-10 * std::max(1.0, w_oracle.norm()));
}

TEST_CASE("full-spectrum preconditioner needs damping when the accumulator is singular") {
  OptimizerState st;
  Matrix w = Matrix::Zero(3, 2);
  Rng rng(302);
  const Matrix g = random_matrix(rng, 3, 2);  // rank two, so the 3x3 square is singular
  CHECK_THROWS_AS(asgo_theoretical_step(st, w, g, 1.0, 0.0), SingularMatrixError);
}

TEST_CASE("accumulator grows monotonically in the semidefinite order") {
  Rng rng(303);
  OptimizerState st;
  Matrix w = Matrix::Zero(6, 3);
  Matrix prev = Matrix::Zero(6, 6);
  for (int t = 0; t < 6; ++t) {
    const Matrix g = random_matrix(rng, 6, 3);
    asgo_theoretical_step(st, w, g, 0.1, 1e-3);
    CHECK(loewner_leq(prev, st.accumulator, 1e-9));
    prev = st.accumulator;
  }
}

TEST_CASE("aligned update norm is exactly the shape-scaled constant") {
  OptimizerConfig cfg = practical_exact_config();
  cfg.lr = 0.1;
  cfg.rms_align = true;
  cfg.eps = 1e-8;
  OptimizerState st;
  Rng rng(304);
  Matrix w = Matrix::Zero(4, 2);
  const Matrix g = random_matrix(rng, 4, 2);
  const StepStats stats = practical_asgo_step(st, w, g, cfg, cfg.lr);
  const double expect = 0.2 * 0.1 * std::sqrt(8.0);
  CHECK(stats.update_frobenius == doctest::Approx(expect).epsilon(1e-12));
  CHECK(stats.update_frobenius == doctest::Approx(0.056568542494923803).epsilon(1e-9));
  CHECK(w.norm() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("memoryless practical step reproduces the orthogonalized direction") {
  Rng rng(305);
  for (int trial = 0; trial < 30; ++trial) {
    const Index m = 2 + static_cast<Index>(rng.next_u64() % 15);
    const Index n = 1 + static_cast<Index>(rng.next_u64() %
                                           static_cast<std::uint64_t>(std::min<Index>(m, 8)));
    const Matrix g = random_matrix(rng, m, n);

    OptimizerState st_a;
    Matrix w_a = Matrix::Zero(m, n);
    practical_asgo_step(st_a, w_a, g, practical_exact_config(), 1.0);

    OptimizerConfig muon_cfg;
    muon_cfg.kind = OptimizerKind::Muon;
    OptimizerState st_m;
    Matrix w_m = Matrix::Zero(m, n);
    muon_step(st_m, w_m, g, muon_cfg, 1.0);

    const Matrix ua = w_a / w_a.norm();
    const Matrix um = w_m / w_m.norm();
    CHECK((ua - um).norm() <= 1e-10);
  }
}

TEST_CASE("per-column scaling on an orthogonal-column gradient matches the gram kernel") {
  Rng rng(306);
  // Columns of an orthogonal matrix scaled independently: the column gram is
  // exactly diagonal, so the diagonal and full kernels agree.
  const Matrix q = random_orthogonal(rng, 5);
  Matrix g = q.leftCols(3);
  g.col(0) *= 2.0;
  g.col(2) *= 0.5;

  OptimizerConfig diag_cfg;
  diag_cfg.kind = OptimizerKind::Dasgo;
  diag_cfg.lr = 0.7;
  OptimizerState st_d;
  Matrix w_d = Matrix::Zero(5, 3);
  dasgo_step(st_d, w_d, g, diag_cfg, 0.7);

  OptimizerConfig full_cfg = practical_exact_config();
  full_cfg.lr = 0.7;
  full_cfg.side_policy = SidePolicy::ForceRight;
  OptimizerState st_f;
  Matrix w_f = Matrix::Zero(5, 3);
  practical_asgo_step(st_f, w_f, g, full_cfg, 0.7);

  CHECK((w_d - w_f).norm() <= 1e-12 * std::max(1.0, w_f.norm()));
}

TEST_CASE("per-column scaling closed form on a diagonal gradient") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Dasgo;
  cfg.lr = 0.25;
  OptimizerState st;
  Matrix w = Matrix::Zero(2, 2);
  Matrix g(2, 2);
  g << 3.0, 0.0, 0.0, 4.0;
  dasgo_step(st, w, g, cfg, 0.25);
  CHECK((w + 0.25 * Matrix::Identity(2, 2)).norm() <= 1e-12);
}

TEST_CASE("per-column scaling skips an all-zero column") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Dasgo;
  OptimizerState st;
  Matrix w = Matrix::Zero(3, 2);
  Matrix g = Matrix::Zero(3, 2);
  g(0, 1) = 2.0;
  dasgo_step(st, w, g, cfg, 1.0);
  CHECK(w.col(0).norm() == 0.0);
  CHECK(w(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("orthogonalized momentum update on an antidiagonal gradient") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Muon;
  OptimizerState st;
  Matrix w = Matrix::Zero(2, 2);
  Matrix g(2, 2);
  g << 0.0, 2.0, 1.0, 0.0;
  muon_step(st, w, g, cfg, 0.5);
  Matrix expect(2, 2);
  expect << 0.0, -0.5, -0.5, 0.0;
  CHECK((w - expect).norm() <= 1e-12);
}

TEST_CASE("orthogonalized momentum accumulates without damping the new gradient") {
  Rng rng(307);
  const Matrix g = random_matrix(rng, 4, 3);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Muon;
  cfg.beta1 = 0.5;
  OptimizerState st;
  Matrix w = Matrix::Zero(4, 3);
  muon_step(st, w, g, cfg, 1.0);
  CHECK((st.momentum - g).norm() <= 1e-14);
  muon_step(st, w, g, cfg, 1.0);
  CHECK((st.momentum - 1.5 * g).norm() <= 1e-14);
}

TEST_CASE("orthogonalized momentum update has unit singular values") {
  Rng rng(308);
  const Matrix g = random_matrix(rng, 5, 3);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Muon;
  OptimizerState st;
  Matrix w = Matrix::Zero(5, 3);
  muon_step(st, w, g, cfg, 0.8);
  const Svd s = svd(w);
  REQUIRE(s.rank == 3);
  for (Index i = 0; i < 3; ++i) CHECK(s.singular_values(i) == doctest::Approx(0.8).epsilon(1e-10));
}

TEST_CASE("orthogonalized momentum leaves weights alone on a zero gradient") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Muon;
  OptimizerState st;
  Matrix w = Matrix::Ones(3, 2);
  muon_step(st, w, Matrix::Zero(3, 2), cfg, 1.0);
  CHECK((w - Matrix::Ones(3, 2)).norm() == 0.0);
}

TEST_CASE("two-sided preconditioner closed form on a rank-one gradient") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Shampoo;
  cfg.eps = 1.0;
  cfg.shampoo_inverse_order = -0.25;
  OptimizerState st;
  Matrix w = Matrix::Zero(2, 2);
  Matrix g(2, 2);
  g << 2.0, 0.0, 0.0, 0.0;
  shampoo_step(st, w, g, cfg, 1.0);
  // Both sides scale by (4 + 1)^(-1/4), so the entry is 2 / sqrt(5).
  CHECK(w(0, 0) == doctest::Approx(-2.0 / std::sqrt(5.0)).epsilon(1e-12));
  CHECK(std::abs(w(0, 1)) + std::abs(w(1, 0)) + std::abs(w(1, 1)) == 0.0);
}

TEST_CASE("two-sided preconditioner matches a per-side oracle") {
  Rng rng(309);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Shampoo;
  cfg.eps = 0.01;
  cfg.shampoo_inverse_order = -0.25;
  cfg.lr = 0.2;
  OptimizerState st;
  Matrix w = random_matrix(rng, 6, 4);
  Matrix w_oracle = w;
  Matrix l = Matrix::Zero(6, 6);
  Matrix r = Matrix::Zero(4, 4);
  Rng grad_rng = rng.child("grads");
  for (int t = 0; t < 4; ++t) {
    const Matrix g = random_matrix(grad_rng, 6, 4);
    shampoo_step(st, w, g, cfg, cfg.lr);

    l = symmetrize(Matrix(l + g * g.transpose()));
    r = symmetrize(Matrix(r + g.transpose() * g));
    const Matrix pl = psd_power(Matrix(l + cfg.eps * Matrix::Identity(6, 6)), -0.25);
    const Matrix pr = psd_power(Matrix(r + cfg.eps * Matrix::Identity(4, 4)), -0.25);
    w_oracle -= cfg.lr * (pl * g * pr);
  }
  CHECK((w - w_oracle).norm() <= 1e-10 * std::max(1.0, w_oracle.norm()));
}

TEST_CASE("dense whitening on a scalar parameter") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::FullMatrixAdagrad;
  OptimizerState st;
  Matrix w = Matrix::Zero(1, 1);
  Matrix g(1, 1);
  g(0, 0) = 3.0;
  full_matrix_adagrad_step(st, w, g, cfg, 0.4);
  CHECK(w(0, 0) == doctest::Approx(-0.4).epsilon(1e-12));
}

TEST_CASE("dense whitening matches a vectorized oracle") {
  Rng rng(310);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::FullMatrixAdagrad;
  cfg.eps = 1e-3;
  OptimizerState st;
  Matrix w = random_matrix(rng, 2, 2);
  Matrix w_oracle = w;
  Matrix h = Matrix::Zero(4, 4);
  Rng grad_rng = rng.child("grads");
  for (int t = 0; t < 3; ++t) {
    const Matrix g = random_matrix(grad_rng, 2, 2);
    full_matrix_adagrad_step(st, w, g, cfg, 0.5);

    Vector gv(4);
    gv << g(0, 0), g(0, 1), g(1, 0), g(1, 1);  // row-major flattening
    h = symmetrize(Matrix(h + gv * gv.transpose()));
    const SymEig e = sym_eig(h);
    Vector inv = e.eigenvalues;
    for (Index i = 0; i < 4; ++i) {
      inv(i) = 1.0 / (std::sqrt(std::max(inv(i), 0.0)) + cfg.eps);
    }
    const Matrix hinv = e.eigenvectors * inv.asDiagonal() * e.eigenvectors.transpose();
    const Vector step = hinv * gv;
    w_oracle(0, 0) -= 0.5 * step(0);
    w_oracle(0, 1) -= 0.5 * step(1);
    w_oracle(1, 0) -= 0.5 * step(2);
    w_oracle(1, 1) -= 0.5 * step(3);
  }
  CHECK((w - w_oracle).norm() <= 1e-10 * std::max(1.0, w_oracle.norm()));
}

TEST_CASE("dense whitening refuses oversized parameters") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::FullMatrixAdagrad;
  cfg.full_matrix_cap = 8;
  OptimizerState st;
  Matrix w = Matrix::Zero(3, 3);
  CHECK_THROWS_AS(full_matrix_adagrad_step(st, w, Matrix::Ones(3, 3), cfg, 0.1),
                  std::invalid_argument);
}

TEST_CASE("elementwise adaptive step approaches the sign direction") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::AdamW;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.999;
  cfg.eps = 1e-12;
  OptimizerState st;
  Matrix w = Matrix::Zero(2, 3);
  Matrix g(2, 3);
  g << 1.0, -2.0, 3.0, -4.0, 5.0, -0.5;
  adamw_step(st, w, g, cfg, 0.01);
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 3; ++j) {
      CHECK(std::abs(w(i, j)) == doctest::Approx(0.01).epsilon(1e-9));
      CHECK(w(i, j) * g(i, j) < 0.0);
    }
  }
}

TEST_CASE("elementwise adaptive step matches a scalar reference for ten steps") {
  Rng rng(311);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::AdamW;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.99;
  cfg.eps = 1e-8;
  cfg.weight_decay = 0.02;
  const double lr = 0.05;
  OptimizerState st;
  Matrix w = random_matrix(rng, 3, 2);
  Matrix w_ref = w;
  Matrix m_ref = Matrix::Zero(3, 2);
  Matrix v_ref = Matrix::Zero(3, 2);
  Rng grad_rng = rng.child("grads");
  for (int t = 1; t <= 10; ++t) {
    const Matrix g = random_matrix(grad_rng, 3, 2);
    adamw_step(st, w, g, cfg, lr);

    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (Index i = 0; i < 3; ++i) {
      for (Index j = 0; j < 2; ++j) {
        m_ref(i, j) = cfg.beta1 * m_ref(i, j) + (1.0 - cfg.beta1) * g(i, j);
        v_ref(i, j) = cfg.beta2 * v_ref(i, j) + (1.0 - cfg.beta2) * g(i, j) * g(i, j);
        const double mhat = m_ref(i, j) / bc1;
        const double vhat = v_ref(i, j) / bc2;
        w_ref(i, j) = (1.0 - lr * cfg.weight_decay) * w_ref(i, j);
        const double denom = std::sqrt(vhat) + cfg.eps;
        if (denom > 0.0) w_ref(i, j) -= lr * mhat / denom;
      }
    }
  }
  CHECK((w - w_ref).norm() <= 1e-10 * std::max(1.0, w_ref.norm()));
}

TEST_CASE("heavy-ball momentum matches its recurrence") {
  Rng rng(312);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Sgd;
  cfg.beta1 = 0.9;
  OptimizerState st;
  Matrix w = Matrix::Zero(3, 3);
  Matrix w_ref = w;
  Matrix buf = Matrix::Zero(3, 3);
  Rng grad_rng = rng.child("grads");
  for (int t = 0; t < 5; ++t) {
    const Matrix g = random_matrix(grad_rng, 3, 3);
    sgd_step(st, w, g, cfg, 0.1);
    buf = cfg.beta1 * buf + g;
    w_ref -= 0.1 * buf;
  }
  CHECK((w - w_ref).norm() <= 1e-12 * std::max(1.0, w_ref.norm()));
}

TEST_CASE("cosine similarity basics") {
  Rng rng(313);
  const Matrix x = random_matrix(rng, 4, 4);
  CHECK(cosine_similarity(x, x) == doctest::Approx(1.0).epsilon(1e-12));

  Matrix a = Matrix::Zero(2, 2);
  Matrix b = Matrix::Zero(2, 2);
  a(0, 0) = 1.5;
  b(1, 1) = -2.0;
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));

  const Matrix y = random_matrix(rng, 4, 4);
  double dot = 0.0;
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) dot += x(i, j) * y(i, j);
  }
  CHECK(cosine_similarity(x, y) == doctest::Approx(dot / (x.norm() * y.norm())).epsilon(1e-14));
}

TEST_CASE("side policy is transpose-covariant") {
  Rng rng(314);
  OptimizerConfig left = practical_exact_config();
  left.side_policy = SidePolicy::ForceLeft;
  left.beta1 = 0.9;
  left.beta2 = 0.9;
  left.eps = 1e-6;
  OptimizerConfig right = left;
  right.side_policy = SidePolicy::ForceRight;

  OptimizerState st_l;
  OptimizerState st_r;
  Matrix w_l = Matrix::Zero(4, 7);
  Matrix w_r = Matrix::Zero(7, 4);
  for (int t = 0; t < 4; ++t) {
    const Matrix g = random_matrix(rng, 4, 7);
    practical_asgo_step(st_l, w_l, g, left, 0.3);
    practical_asgo_step(st_r, w_r, Matrix(g.transpose()), right, 0.3);
    CHECK((w_l - w_r.transpose()).norm() <= 1e-12 * std::max(1.0, w_l.norm()));
  }
}

TEST_CASE("auto side selection matches the forced side of the smaller dimension") {
  Rng rng(315);
  const Matrix g_wide = random_matrix(rng, 3, 6);

  OptimizerConfig auto_cfg = practical_exact_config();
  auto_cfg.beta2 = 0.5;
  OptimizerConfig forced = auto_cfg;
  forced.side_policy = SidePolicy::ForceLeft;  // m < n keeps the m x m gram

  OptimizerState st_a;
  OptimizerState st_f;
  Matrix w_a = Matrix::Zero(3, 6);
  Matrix w_f = Matrix::Zero(3, 6);
  practical_asgo_step(st_a, w_a, g_wide, auto_cfg, 0.2);
  practical_asgo_step(st_f, w_f, g_wide, forced, 0.2);
  CHECK((w_a - w_f).norm() == 0.0);
}

TEST_CASE("stale preconditioner is reused between refreshes") {
  Rng rng(316);
  OptimizerConfig cfg = practical_exact_config();
  cfg.update_freq = 2;
  cfg.eps = 1e-6;
  cfg.beta2 = 0.9;
  OptimizerState st;
  Matrix w = Matrix::Zero(5, 3);
  const Matrix g1 = random_matrix(rng, 5, 3);
  const Matrix g2 = random_matrix(rng, 5, 3);

  practical_asgo_step(st, w, g1, cfg, 0.1);
  const Matrix cached = st.cached_preconditioner;
  practical_asgo_step(st, w, g2, cfg, 0.1);
  // Second step reuses the cached kernel output even though the accumulator moved.
  CHECK((st.cached_preconditioner - cached).norm() == 0.0);
  practical_asgo_step(st, w, g2, cfg, 0.1);
  CHECK((st.cached_preconditioner - cached).norm() > 0.0);
}

TEST_CASE("iterative kernels agree with the exact kernel when well conditioned") {
  Rng rng(317);
  OptimizerConfig exact = practical_exact_config();
  exact.beta2 = 0.0;
  exact.eps = 1e-2;
  OptimizerConfig iter = exact;
  iter.kernel = KernelKind::NewtonSchulz;
  iter.kernel_steps = 40;
  OptimizerConfig pe = exact;
  pe.kernel = KernelKind::PolarExpress;
  pe.kernel_steps = 10;
  OptimizerConfig db = exact;
  db.kernel = KernelKind::DenmanBeavers;
  db.kernel_steps = 40;

  const Matrix g = random_matrix(rng, 6, 4);
  Matrix w_exact = Matrix::Zero(6, 4);
  OptimizerState st_exact;
  practical_asgo_step(st_exact, w_exact, g, exact, 0.5);

  for (const OptimizerConfig& cfg : {iter, pe, db}) {
    OptimizerState st;
    Matrix w = Matrix::Zero(6, 4);
    const StepStats stats = practical_asgo_step(st, w, g, cfg, 0.5);
    CHECK((w - w_exact).norm() <= 1e-3 * w_exact.norm());
    CHECK(std::isfinite(stats.kernel_residual));
  }
}

TEST_CASE("driver splits attention-style heads into independent blocks") {
  Rng rng(318);
  OptimizerConfig cfg = practical_exact_config();
  cfg.beta1 = 0.8;
  cfg.beta2 = 0.9;
  cfg.eps = 1e-6;

  Optimizer opt(cfg);
  std::vector<ParamGroup> groups(1);
  groups[0].weight = Matrix::Zero(4, 6);
  groups[0].heads = 2;
  const Matrix g = random_matrix(rng, 4, 6);
  groups[0].grad = g;
  opt.step(groups, 0.2);

  OptimizerState st_left;
  OptimizerState st_right;
  Matrix w_left = Matrix::Zero(4, 3);
  Matrix w_right = Matrix::Zero(4, 3);
  practical_asgo_step(st_left, w_left, Matrix(g.leftCols(3)), cfg, 0.2);
  practical_asgo_step(st_right, w_right, Matrix(g.rightCols(3)), cfg, 0.2);

  CHECK((groups[0].weight.leftCols(3) - w_left).norm() <= 1e-14);
  CHECK((groups[0].weight.rightCols(3) - w_right).norm() <= 1e-14);
}

TEST_CASE("driver config can widen head splitting for fused projections") {
  Rng rng(319);
  OptimizerConfig cfg = practical_exact_config();
  cfg.qk_groups = 3;
  Optimizer opt(cfg);
  std::vector<ParamGroup> groups(1);
  groups[0].weight = Matrix::Zero(4, 6);
  const Matrix g = random_matrix(rng, 4, 6);
  groups[0].grad = g;
  opt.step(groups, 0.1);

  for (int h = 0; h < 3; ++h) {
    OptimizerState st;
    Matrix w = Matrix::Zero(4, 2);
    practical_asgo_step(st, w, Matrix(g.middleCols(2 * h, 2)), cfg, 0.1);
    CHECK((groups[0].weight.middleCols(2 * h, 2) - w).norm() <= 1e-14);
  }
}

TEST_CASE("driver rejects a head count that does not divide the columns") {
  OptimizerConfig cfg = practical_exact_config();
  Optimizer opt(cfg);
  std::vector<ParamGroup> groups(1);
  groups[0].weight = Matrix::Zero(4, 6);
  groups[0].grad = Matrix::Ones(4, 6);
  groups[0].heads = 4;
  CHECK_THROWS_AS(opt.step(groups, 0.1), std::invalid_argument);
}

TEST_CASE("driver routes vector parameters away from the orthogonalized rule") {
  Rng rng(320);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Muon;
  cfg.beta1 = 0.9;
  cfg.lr = 0.01;
  Optimizer opt(cfg);
  std::vector<ParamGroup> groups(2);
  groups[0].weight = Matrix::Zero(4, 4);
  groups[0].grad = random_matrix(rng, 4, 4);
  groups[1].weight = Matrix::Zero(5, 1);
  groups[1].grad = random_matrix(rng, 5, 1);
  groups[1].vector_param = true;
  opt.step(groups);

  // The vector parameter moved, but not by a unit-singular-value step.
  CHECK(groups[1].weight.norm() > 0.0);
  const Svd s = svd(groups[0].weight);
  CHECK(s.singular_values(0) == doctest::Approx(0.01).epsilon(1e-10));
  CHECK(groups[1].weight.norm() < 0.01 * std::sqrt(5.0) * 1.01);
}

TEST_CASE("driver aggregates update statistics across groups") {
  Rng rng(321);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Sgd;
  Optimizer opt(cfg);
  std::vector<ParamGroup> groups(2);
  groups[0].weight = Matrix::Zero(3, 3);
  groups[0].grad = random_matrix(rng, 3, 3);
  groups[1].weight = Matrix::Zero(2, 4);
  groups[1].grad = random_matrix(rng, 2, 4);
  const StepStats stats = opt.step(groups, 0.5);
  const double expect = 0.5 * std::sqrt(groups[0].grad.squaredNorm() +
                                        groups[1].grad.squaredNorm());
  CHECK(stats.update_frobenius == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("driver refuses a changed group structure") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Sgd;
  Optimizer opt(cfg);
  std::vector<ParamGroup> groups(1);
  groups[0].weight = Matrix::Zero(2, 2);
  groups[0].grad = Matrix::Ones(2, 2);
  opt.step(groups, 0.1);
  std::vector<ParamGroup> extra(2);
  extra[0] = groups[0];
  extra[1].weight = Matrix::Zero(2, 2);
  extra[1].grad = Matrix::Ones(2, 2);
  CHECK_THROWS_AS(opt.step(extra, 0.1), std::invalid_argument);
}

TEST_CASE("config validation rejects inconsistent settings") {
  OptimizerConfig cfg;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = OptimizerConfig{};
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = OptimizerConfig{};
  cfg.kind = OptimizerKind::Shampoo;
  cfg.shampoo_inverse_order = -0.3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = OptimizerConfig{};
  cfg.kernel = KernelKind::PolarExpress;
  cfg.kernel_steps = 11;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = OptimizerConfig{};
  cfg.kind = OptimizerKind::AsgoTheoretical;
  cfg.beta1 = 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = OptimizerConfig{};
  cfg.kind = OptimizerKind::Sgd;
  cfg.weight_decay = 0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = OptimizerConfig{};
  cfg.kind = OptimizerKind::Shampoo;
  cfg.beta1 = 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = OptimizerConfig{};
  cfg.update_freq = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("optimizer names round-trip through their string forms") {
  for (OptimizerKind k :
       {OptimizerKind::AsgoTheoretical, OptimizerKind::AsgoPractical, OptimizerKind::Dasgo,
        OptimizerKind::Muon, OptimizerKind::Shampoo, OptimizerKind::FullMatrixAdagrad,
        OptimizerKind::AdamW, OptimizerKind::Sgd}) {
    CHECK(optimizer_kind_from_string(to_string(k)) == k);
  }
  for (KernelKind k : {KernelKind::ExactEig, KernelKind::NewtonSchulz, KernelKind::PolarExpress,
                       KernelKind::DenmanBeavers}) {
    CHECK(kernel_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(optimizer_kind_from_string("adam"), std::invalid_argument);
}
