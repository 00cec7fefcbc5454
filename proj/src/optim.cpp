#include "sgo/optim.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sgo {

// ---------------------------------------------------------------------------
// Enum <-> string
// ---------------------------------------------------------------------------

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::AsgoTheoretical: return "asgo-theoretical";
    case OptimizerKind::AsgoPractical: return "asgo-practical";
    case OptimizerKind::Dasgo: return "dasgo";
    case OptimizerKind::Muon: return "muon";
    case OptimizerKind::Shampoo: return "shampoo";
    case OptimizerKind::FullMatrixAdagrad: return "full-matrix-adagrad";
    case OptimizerKind::AdamW: return "adamw";
    case OptimizerKind::Sgd: return "sgd";
  }
  return "unknown";
}

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::ExactEig: return "exact-eig";
    case KernelKind::NewtonSchulz: return "newton-schulz";
    case KernelKind::PolarExpress: return "polar-express";
    case KernelKind::DenmanBeavers: return "denman-beavers";
  }
  return "unknown";
}

std::string to_string(SidePolicy p) {
  switch (p) {
    case SidePolicy::AutoMinDim: return "auto-min-dim";
    case SidePolicy::ForceLeft: return "force-left";
    case SidePolicy::ForceRight: return "force-right";
  }
  return "unknown";
}

std::string to_string(PreconditionSource s) {
  switch (s) {
    case PreconditionSource::Gradient: return "gradient";
    case PreconditionSource::Momentum: return "momentum";
  }
  return "unknown";
}

namespace {

[[noreturn]] void bad_enum(const char* what, const std::string& s) {
  throw std::invalid_argument(std::string("unknown ") + what + ": '" + s + "'");
}

}  // namespace

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "asgo-theoretical") return OptimizerKind::AsgoTheoretical;
  if (s == "asgo-practical") return OptimizerKind::AsgoPractical;
  if (s == "dasgo") return OptimizerKind::Dasgo;
  if (s == "muon") return OptimizerKind::Muon;
  if (s == "shampoo") return OptimizerKind::Shampoo;
  if (s == "full-matrix-adagrad") return OptimizerKind::FullMatrixAdagrad;
  if (s == "adamw") return OptimizerKind::AdamW;
  if (s == "sgd") return OptimizerKind::Sgd;
  bad_enum("optimizer kind", s);
}

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "exact-eig") return KernelKind::ExactEig;
  if (s == "newton-schulz") return KernelKind::NewtonSchulz;
  if (s == "polar-express") return KernelKind::PolarExpress;
  if (s == "denman-beavers") return KernelKind::DenmanBeavers;
  bad_enum("kernel kind", s);
}

SidePolicy side_policy_from_string(const std::string& s) {
  if (s == "auto-min-dim") return SidePolicy::AutoMinDim;
  if (s == "force-left") return SidePolicy::ForceLeft;
  if (s == "force-right") return SidePolicy::ForceRight;
  bad_enum("side policy", s);
}

PreconditionSource precondition_source_from_string(const std::string& s) {
  if (s == "gradient") return PreconditionSource::Gradient;
  if (s == "momentum") return PreconditionSource::Momentum;
  bad_enum("precondition source", s);
}

// ---------------------------------------------------------------------------
// Config validation
// ---------------------------------------------------------------------------

void OptimizerConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("OptimizerConfig: " + msg); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0) fail("beta1 must lie in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) fail("beta2 must lie in [0, 1)");
  if (eps < 0.0) fail("eps must be nonnegative");
  if (update_freq < 1) fail("update_freq must be >= 1");
  if (shampoo_inverse_order != -0.25 && shampoo_inverse_order != -0.5) {
    fail("shampoo_inverse_order must be -0.25 or -0.5");
  }
  if (qk_groups < 1) fail("qk_groups must be >= 1");
  if (kernel_steps < 1) fail("kernel_steps must be >= 1");
  if (kernel == KernelKind::PolarExpress && kernel_steps > 10) {
    fail("polar-express kernel supports at most 10 steps");
  }
  if (weight_decay < 0.0) fail("weight_decay must be nonnegative");
  if (weight_decay > 0.0 && kind != OptimizerKind::AdamW && kind != OptimizerKind::Muon) {
    fail("weight_decay is only supported for adamw and muon");
  }
  if (full_matrix_cap < 1) fail("full_matrix_cap must be >= 1");
  switch (kind) {
    case OptimizerKind::AsgoTheoretical:
      if (beta1 != 0.0 || beta2 != 0.0) fail("asgo-theoretical does not use momentum (beta1 = beta2 = 0)");
      if (kernel != KernelKind::ExactEig) fail("asgo-theoretical requires the exact-eig kernel");
      if (rms_align) fail("asgo-theoretical does not support rms_align");
      break;
    case OptimizerKind::Shampoo:
      if (beta1 != 0.0) fail("shampoo does not use first-moment momentum here (beta1 = 0)");
      break;
    case OptimizerKind::FullMatrixAdagrad:
      if (beta1 != 0.0 || beta2 != 0.0) fail("full-matrix-adagrad accumulates without momentum");
      break;
    case OptimizerKind::Sgd:
      if (beta2 != 0.0) fail("sgd does not use beta2");
      break;
    case OptimizerKind::Muon:
      if (beta2 != 0.0) fail("muon does not use beta2");
      break;
    default:
      break;
  }
}

// ---------------------------------------------------------------------------
// Step-rule helpers
// ---------------------------------------------------------------------------

namespace {

void check_same_shape(const Matrix& w, const Matrix& g) {
  if (w.rows() != g.rows() || w.cols() != g.cols()) {
    std::ostringstream os;
    os << "weight is " << w.rows() << "x" << w.cols() << " but gradient is " << g.rows() << "x"
       << g.cols();
    throw DimensionMismatch(os.str());
  }
}

void ensure_zero(Matrix& m, Index rows, Index cols) {
  if (m.rows() != rows || m.cols() != cols) m = Matrix::Zero(rows, cols);
}

void ensure_zero(Vector& v, Index size) {
  if (v.size() != size) v = Vector::Zero(size);
}

// Pseudo-inverse of the square root of a symmetric PSD matrix via an exact
// eigendecomposition, dropping modes below a relative floor.
Matrix sqrt_pinv_exact(const Matrix& x) {
  const SymEig eig = sym_eig(x);
  Vector s(eig.eigenvalues.size());
  for (Index i = 0; i < s.size(); ++i) s(i) = std::sqrt(std::max(eig.eigenvalues(i), 0.0));
  const double s_max = s.size() > 0 ? s.maxCoeff() : 0.0;
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    inv(i) = (s(i) > 1e-12 * s_max && s(i) > 0.0) ? 1.0 / s(i) : 0.0;
  }
  const Matrix r = eig.eigenvectors * inv.asDiagonal() * eig.eigenvectors.transpose();
  return Matrix(0.5 * (r + r.transpose()));
}

// Applies w -= lr * u, optionally rescaled so that the step has RMS-aligned
// Frobenius norm 0.2 * lr * sqrt(m n). Returns the applied step's norm.
double apply_update(Matrix& w, const Matrix& u, double lr, bool rms_align) {
  if (rms_align) {
    const double u_norm = u.norm();
    if (u_norm == 0.0) return 0.0;
    const double scale =
        0.2 * std::sqrt(static_cast<double>(w.rows()) * static_cast<double>(w.cols())) / u_norm;
    w -= (lr * scale) * u;
    return lr * scale * u_norm;
  }
  w -= lr * u;
  return lr * u.norm();
}

// Kernel dispatch used by practical ASGO: inverse square root of a damped
// Gram matrix. Residual is NaN for the exact path.
Matrix inverse_sqrt_kernel(const Matrix& x, const OptimizerConfig& cfg, double* residual) {
  *residual = std::numeric_limits<double>::quiet_NaN();
  switch (cfg.kernel) {
    case KernelKind::ExactEig:
      return sqrt_pinv_exact(x);
    case KernelKind::NewtonSchulz: {
      const NsResult r = ns_sqrt_inverse(x, NsCoefficients::quintic(), cfg.kernel_steps);
      *residual = r.residual;
      return r.inv_sqrt;
    }
    case KernelKind::PolarExpress: {
      const NsResult r = ns_sqrt_inverse(x, polar_express_schedule(), cfg.kernel_steps);
      *residual = r.residual;
      return r.inv_sqrt;
    }
    case KernelKind::DenmanBeavers: {
      const NsResult r = denman_beavers_inv_sqrt(x, cfg.kernel_steps);
      *residual = r.residual;
      return r.inv_sqrt;
    }
  }
  throw std::logic_error("unreachable kernel kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// Update rules
// ---------------------------------------------------------------------------

StepStats asgo_theoretical_step(OptimizerState& st, Matrix& w, const Matrix& g, double lr,
                                double eps) {
  check_same_shape(w, g);
  const Index m = w.rows();
  ensure_zero(st.accumulator, m, m);
  st.accumulator = symmetrize(Matrix(st.accumulator + g * g.transpose()));

  const SymEig eig = sym_eig(st.accumulator);
  Vector s(eig.eigenvalues.size());
  for (Index i = 0; i < s.size(); ++i) s(i) = std::sqrt(std::max(eig.eigenvalues(i), 0.0));
  const double lam_max = eig.eigenvalues.size() > 0 ? eig.eigenvalues.maxCoeff() : 0.0;
  if (eps == 0.0 && (lam_max <= 0.0 || eig.eigenvalues.minCoeff() <= 1e-12 * lam_max)) {
    throw SingularMatrixError(
        "asgo_theoretical_step: accumulated Gram matrix is singular; use eps > 0");
  }
  Vector inv(s.size());
  for (Index i = 0; i < s.size(); ++i) inv(i) = 1.0 / (s(i) + eps);
  const Matrix lambda_inv =
      symmetrize(Matrix(eig.eigenvectors * inv.asDiagonal() * eig.eigenvectors.transpose()));

  StepStats stats;
  stats.update_frobenius = apply_update(w, Matrix(lambda_inv * g), lr, /*rms_align=*/false);
  st.step_count += 1;
  return stats;
}

StepStats practical_asgo_step(OptimizerState& st, Matrix& w, const Matrix& g,
                              const OptimizerConfig& cfg, double lr) {
  check_same_shape(w, g);
  const Index m = w.rows();
  const Index n = w.cols();
  const bool right_side = cfg.side_policy == SidePolicy::ForceRight ||
                          (cfg.side_policy == SidePolicy::AutoMinDim && m >= n);
  const Index side = right_side ? n : m;

  ensure_zero(st.momentum, m, n);
  ensure_zero(st.accumulator, side, side);

  st.momentum = cfg.beta1 * st.momentum + (1.0 - cfg.beta1) * g;
  const Matrix& source =
      (cfg.precondition_source == PreconditionSource::Momentum) ? st.momentum : g;
  const Matrix gram = right_side ? symmetrize(Matrix(source.transpose() * source))
                                 : symmetrize(Matrix(source * source.transpose()));
  st.accumulator = cfg.beta2 * st.accumulator + (1.0 - cfg.beta2) * gram;

  const bool refresh = st.cached_preconditioner.rows() != side ||
                       st.cached_preconditioner.cols() != side ||
                       st.cache_age + 1 >= cfg.update_freq;
  if (refresh) {
    const Matrix x =
        Matrix(st.accumulator + cfg.eps * Matrix::Identity(side, side));
    if (x.norm() == 0.0) {
      st.cached_preconditioner = Matrix::Zero(side, side);
      st.last_kernel_residual = std::numeric_limits<double>::quiet_NaN();
    } else {
      double residual = std::numeric_limits<double>::quiet_NaN();
      st.cached_preconditioner = inverse_sqrt_kernel(x, cfg, &residual);
      st.last_kernel_residual = residual;
    }
    st.cache_age = 0;
  } else {
    st.cache_age += 1;
  }

  const Matrix update = right_side ? Matrix(st.momentum * st.cached_preconditioner)
                                   : Matrix(st.cached_preconditioner * st.momentum);

  StepStats stats;
  stats.update_frobenius = apply_update(w, update, lr, cfg.rms_align);
  stats.kernel_residual = st.last_kernel_residual;
  st.step_count += 1;
  return stats;
}

StepStats dasgo_step(OptimizerState& st, Matrix& w, const Matrix& g, const OptimizerConfig& cfg,
                     double lr) {
  check_same_shape(w, g);
  const Index m = w.rows();
  const Index n = w.cols();
  ensure_zero(st.momentum, m, n);
  ensure_zero(st.diag_accumulator, n);

  st.momentum = cfg.beta1 * st.momentum + (1.0 - cfg.beta1) * g;
  for (Index j = 0; j < n; ++j) {
    st.diag_accumulator(j) =
        cfg.beta2 * st.diag_accumulator(j) + (1.0 - cfg.beta2) * g.col(j).squaredNorm();
  }

  Matrix update = Matrix::Zero(m, n);
  for (Index j = 0; j < n; ++j) {
    const double denom = std::sqrt(st.diag_accumulator(j) + cfg.eps);
    if (denom > 0.0) update.col(j) = st.momentum.col(j) / denom;
  }

  StepStats stats;
  stats.update_frobenius = apply_update(w, update, lr, cfg.rms_align);
  st.step_count += 1;
  return stats;
}

StepStats muon_step(OptimizerState& st, Matrix& w, const Matrix& g, const OptimizerConfig& cfg,
                    double lr) {
  check_same_shape(w, g);
  ensure_zero(st.momentum, w.rows(), w.cols());
  st.momentum = cfg.beta1 * st.momentum + g;

  const Svd dec = svd(st.momentum);
  Matrix update = Matrix::Zero(w.rows(), w.cols());
  if (dec.rank > 0) update = dec.u * dec.v.transpose();

  if (cfg.weight_decay > 0.0) w = ((1.0 - lr * cfg.weight_decay) * w).eval();

  StepStats stats;
  stats.update_frobenius = apply_update(w, update, lr, cfg.rms_align);
  st.step_count += 1;
  return stats;
}

StepStats shampoo_step(OptimizerState& st, Matrix& w, const Matrix& g, const OptimizerConfig& cfg,
                       double lr) {
  check_same_shape(w, g);
  const Index m = w.rows();
  const Index n = w.cols();
  ensure_zero(st.accumulator, m, m);
  ensure_zero(st.accumulator_right, n, n);

  const Matrix left_gram = symmetrize(Matrix(g * g.transpose()));
  const Matrix right_gram = symmetrize(Matrix(g.transpose() * g));
  if (cfg.beta2 == 0.0) {
    st.accumulator += left_gram;
    st.accumulator_right += right_gram;
  } else {
    st.accumulator = cfg.beta2 * st.accumulator + (1.0 - cfg.beta2) * left_gram;
    st.accumulator_right = cfg.beta2 * st.accumulator_right + (1.0 - cfg.beta2) * right_gram;
  }

  const bool refresh = st.cached_preconditioner.rows() != m ||
                       st.cached_preconditioner_right.rows() != n ||
                       st.cache_age + 1 >= cfg.update_freq;
  if (refresh) {
    st.cached_preconditioner = psd_power(
        Matrix(st.accumulator + cfg.eps * Matrix::Identity(m, m)), cfg.shampoo_inverse_order);
    st.cached_preconditioner_right =
        psd_power(Matrix(st.accumulator_right + cfg.eps * Matrix::Identity(n, n)),
                  cfg.shampoo_inverse_order);
    st.cache_age = 0;
  } else {
    st.cache_age += 1;
  }

  const Matrix update = st.cached_preconditioner * g * st.cached_preconditioner_right;

  StepStats stats;
  stats.update_frobenius = apply_update(w, update, lr, cfg.rms_align);
  st.step_count += 1;
  return stats;
}

StepStats full_matrix_adagrad_step(OptimizerState& st, Matrix& w, const Matrix& g,
                                   const OptimizerConfig& cfg, double lr) {
  check_same_shape(w, g);
  const Index dim = w.rows() * w.cols();
  if (dim > cfg.full_matrix_cap) {
    std::ostringstream os;
    os << "full_matrix_adagrad_step: block has " << dim
       << " entries, exceeding full_matrix_cap = " << cfg.full_matrix_cap;
    throw std::invalid_argument(os.str());
  }
  ensure_zero(st.accumulator, dim, dim);

  // Row-major storage makes data() the row-major vectorization.
  Eigen::Map<const Vector> gv(g.data(), dim);
  st.accumulator = symmetrize(Matrix(st.accumulator + gv * gv.transpose()));

  const SymEig eig = sym_eig(st.accumulator);
  Vector s(eig.eigenvalues.size());
  for (Index i = 0; i < s.size(); ++i) s(i) = std::sqrt(std::max(eig.eigenvalues(i), 0.0));
  const double s_max = s.size() > 0 ? s.maxCoeff() : 0.0;
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    const double d = s(i) + cfg.eps;
    if (cfg.eps > 0.0) {
      inv(i) = 1.0 / d;
    } else {
      inv(i) = (s(i) > 1e-12 * s_max && s(i) > 0.0) ? 1.0 / s(i) : 0.0;
    }
  }
  const Vector update_vec =
      eig.eigenvectors * (inv.asDiagonal() * (eig.eigenvectors.transpose() * gv));

  Matrix update(w.rows(), w.cols());
  Eigen::Map<Vector>(update.data(), dim) = update_vec;

  StepStats stats;
  stats.update_frobenius = apply_update(w, update, lr, /*rms_align=*/false);
  st.step_count += 1;
  return stats;
}

StepStats adamw_step(OptimizerState& st, Matrix& w, const Matrix& g, const OptimizerConfig& cfg,
                     double lr) {
  check_same_shape(w, g);
  const Index m = w.rows();
  const Index n = w.cols();
  ensure_zero(st.momentum, m, n);
  ensure_zero(st.second_moment, m, n);

  st.step_count += 1;
  const double t = static_cast<double>(st.step_count);
  st.momentum = cfg.beta1 * st.momentum + (1.0 - cfg.beta1) * g;
  st.second_moment =
      (cfg.beta2 * st.second_moment.array() + (1.0 - cfg.beta2) * g.array().square()).matrix();

  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  Matrix update(m, n);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double m_hat = st.momentum(i, j) / bc1;
      const double v_hat = st.second_moment(i, j) / bc2;
      const double denom = std::sqrt(v_hat) + cfg.eps;
      update(i, j) = (denom > 0.0) ? m_hat / denom : 0.0;
    }
  }

  if (cfg.weight_decay > 0.0) w = ((1.0 - lr * cfg.weight_decay) * w).eval();

  StepStats stats;
  stats.update_frobenius = apply_update(w, update, lr, /*rms_align=*/false);
  return stats;
}

StepStats sgd_step(OptimizerState& st, Matrix& w, const Matrix& g, const OptimizerConfig& cfg,
                   double lr) {
  check_same_shape(w, g);
  ensure_zero(st.momentum, w.rows(), w.cols());
  st.momentum = cfg.beta1 * st.momentum + g;

  StepStats stats;
  stats.update_frobenius = apply_update(w, st.momentum, lr, /*rms_align=*/false);
  st.step_count += 1;
  return stats;
}

double cosine_similarity(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("cosine_similarity requires matching shapes");
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_similarity is undefined for a zero matrix");
  }
  return (a.array() * b.array()).sum() / (na * nb);
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

StepStats Optimizer::step(std::vector<ParamGroup>& groups) { return step(groups, cfg_.lr); }

StepStats Optimizer::step(std::vector<ParamGroup>& groups, double lr) {
  if (states_.empty()) {
    states_.resize(groups.size());
  } else if (states_.size() != groups.size()) {
    throw std::invalid_argument("Optimizer::step: group count changed between steps");
  }

  double sq_norm = 0.0;
  double worst_residual = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    ParamGroup& group = groups[gi];
    check_same_shape(group.weight, group.grad);

    int heads = group.heads >= 1 ? group.heads : 1;
    if (cfg_.qk_groups > 1 && !group.vector_param) heads = cfg_.qk_groups;
    if (group.weight.cols() % heads != 0) {
      std::ostringstream os;
      os << "group '" << group.name << "': " << group.weight.cols()
         << " columns not divisible into " << heads << " heads";
      throw std::invalid_argument(os.str());
    }

    if (states_[gi].empty()) {
      states_[gi].resize(static_cast<std::size_t>(heads));
    } else if (states_[gi].size() != static_cast<std::size_t>(heads)) {
      throw std::invalid_argument("Optimizer::step: head structure changed between steps");
    }

    const Index head_cols = group.weight.cols() / heads;
    for (int h = 0; h < heads; ++h) {
      OptimizerState& st = states_[gi][static_cast<std::size_t>(h)];
      Matrix wb = group.weight.middleCols(h * head_cols, head_cols);
      const Matrix gb = group.grad.middleCols(h * head_cols, head_cols);

      StepStats s;
      OptimizerKind kind = cfg_.kind;
      if (group.vector_param && kind == OptimizerKind::Muon) kind = OptimizerKind::AdamW;
      switch (kind) {
        case OptimizerKind::AsgoTheoretical:
          s = asgo_theoretical_step(st, wb, gb, lr, cfg_.eps);
          break;
        case OptimizerKind::AsgoPractical:
          s = practical_asgo_step(st, wb, gb, cfg_, lr);
          break;
        case OptimizerKind::Dasgo:
          s = dasgo_step(st, wb, gb, cfg_, lr);
          break;
        case OptimizerKind::Muon:
          s = muon_step(st, wb, gb, cfg_, lr);
          break;
        case OptimizerKind::Shampoo:
          s = shampoo_step(st, wb, gb, cfg_, lr);
          break;
        case OptimizerKind::FullMatrixAdagrad:
          s = full_matrix_adagrad_step(st, wb, gb, cfg_, lr);
          break;
        case OptimizerKind::AdamW:
          s = adamw_step(st, wb, gb, cfg_, lr);
          break;
        case OptimizerKind::Sgd:
          s = sgd_step(st, wb, gb, cfg_, lr);
          break;
      }
      group.weight.middleCols(h * head_cols, head_cols) = wb;

      sq_norm += s.update_frobenius * s.update_frobenius;
      if (!std::isnan(s.kernel_residual) &&
          (std::isnan(worst_residual) || s.kernel_residual > worst_residual)) {
        worst_residual = s.kernel_residual;
      }
    }
  }

  StepStats out;
  out.update_frobenius = std::sqrt(sq_norm);
  out.kernel_residual = worst_residual;
  return out;
}

}  // namespace sgo
