#include "sgo/theory.hpp"

#include "sgo/optim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sgo {

// ---------------------------------------------------------------------------
// TrajectoryStats
// ---------------------------------------------------------------------------

void TrajectoryStats::observe(const Matrix& w, const Matrix& g, double loss,
                              const Matrix& w_star, double f_star) {
  if (gram_.rows() != g.rows()) gram_ = Matrix::Zero(g.rows(), g.rows());
  gram_ = symmetrize(Matrix(gram_ + g * g.transpose()));
  losses_.push_back(loss);
  f_gaps_.push_back(loss - f_star);
  grad_trace_norms_.push_back(trace_norm(g));
  const Matrix d = w - w_star;
  d_op_ = std::max(d_op_, spectral_norm(d));
  d_f_ = std::max(d_f_, d.norm());
}

double TrajectoryStats::avg_gap() const {
  if (f_gaps_.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (double v : f_gaps_) total += v;
  return total / static_cast<double>(f_gaps_.size());
}

double TrajectoryStats::avg_grad_trace_norm() const {
  if (grad_trace_norms_.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (double v : grad_trace_norms_) total += v;
  return total / static_cast<double>(grad_trace_norms_.size());
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

namespace {

double sqrt_trace_of_psd(const Matrix& x) {
  const SymEig eig = sym_eig(x);
  double total = 0.0;
  for (Index i = 0; i < eig.eigenvalues.size(); ++i) {
    total += std::sqrt(std::max(eig.eigenvalues(i), 0.0));
  }
  return total;
}

double epsilon_term(double eps, double d_op, double d_f, int t) {
  if (d_op == 0.0 || d_f == 0.0) return 0.0;
  return eps * d_f * d_f / (d_op * static_cast<double>(t));
}

}  // namespace

BoundReport nonsmooth_bound(const TrajectoryStats& stats, double eps, int t) {
  if (t != stats.steps()) {
    std::ostringstream os;
    os << "nonsmooth_bound: t = " << t << " does not match the " << stats.steps()
       << " recorded steps";
    throw std::invalid_argument(os.str());
  }
  if (t < 1) throw std::invalid_argument("nonsmooth_bound: need at least one step");

  BoundReport report;
  report.bound_name = "nonsmooth-convergence";
  report.lhs = stats.avg_gap();
  if (std::isnan(report.lhs)) {
    throw std::invalid_argument("nonsmooth_bound: trajectory has no recorded gaps");
  }
  const double precond =
      sqrt_trace_of_psd(stats.gram()) * stats.d_op() / static_cast<double>(t);
  const double eps_part = epsilon_term(eps, stats.d_op(), stats.d_f(), t);
  report.rhs = precond + eps_part;
  report.slack = report.rhs - report.lhs;
  report.components = {{"preconditioner_term", precond}, {"epsilon_term", eps_part}};
  return report;
}

BoundReport corollary_bound(const Matrix& q, double d_op, double d_f, double eps, int t) {
  if (t < 1) throw std::invalid_argument("corollary_bound: need t >= 1");
  BoundReport report;
  report.bound_name = "gram-family-convergence";
  const double precond = trace_norm(q) * d_op / std::sqrt(static_cast<double>(t));
  const double eps_part = epsilon_term(eps, d_op, d_f, t);
  report.rhs = precond + eps_part;
  report.components = {{"preconditioner_term", precond}, {"epsilon_term", eps_part}};
  return report;
}

BoundReport smooth_bound(double d_op, double d_f, double l_trace_norm, double v_trace_norm,
                         int batch, int t, double eps) {
  if (t < 1 || batch < 1) {
    throw std::invalid_argument("smooth_bound: need t >= 1 and batch >= 1");
  }
  BoundReport report;
  report.bound_name = "smooth-convergence";
  const double smooth_part = 4.0 * d_op * d_op * l_trace_norm / static_cast<double>(t);
  const double variance_part = 2.0 * std::sqrt(2.0) * d_op * v_trace_norm /
                               std::sqrt(static_cast<double>(batch) * static_cast<double>(t));
  const double eps_part = 2.0 * epsilon_term(eps, d_op, d_f, t);
  report.rhs = smooth_part + variance_part + eps_part;
  report.components = {{"smoothness_term", smooth_part},
                       {"variance_term", variance_part},
                       {"epsilon_term", eps_part}};
  return report;
}

MuonRate muon_rate_bound(double l_trace_norm, double f0, double f_star, int t) {
  if (t < 1) throw std::invalid_argument("muon_rate_bound: need t >= 1");
  if (l_trace_norm <= 0.0) throw std::invalid_argument("muon_rate_bound: need ||L||_* > 0");
  const double gap = f0 - f_star;
  if (gap < 0.0) {
    throw std::invalid_argument("muon_rate_bound: f0 must be at least f_star");
  }
  MuonRate rate;
  if (gap == 0.0) return rate;
  rate.eta = std::sqrt(2.0 * gap / (l_trace_norm * static_cast<double>(t)));
  rate.rhs = std::sqrt(l_trace_norm * gap / (2.0 * static_cast<double>(t)));
  return rate;
}

// ---------------------------------------------------------------------------
// Bound-verification drivers
// ---------------------------------------------------------------------------

namespace {

void require_verifiable(const Problem& p, const char* who, bool needs_smoothness,
                        bool needs_noise) {
  if (!p.single_matrix()) {
    throw std::invalid_argument(std::string(who) + ": problem must have one parameter matrix");
  }
  if (!p.minimizer.has_value() || !p.f_star.has_value()) {
    throw std::invalid_argument(std::string(who) + ": problem needs a minimizer and f_star");
  }
  if (needs_smoothness && !p.smoothness.has_value()) {
    throw std::invalid_argument(std::string(who) + ": problem needs a curvature matrix");
  }
  if (needs_noise && !p.noise_bound.has_value()) {
    throw std::invalid_argument(std::string(who) + ": problem needs a noise bound");
  }
}

// One deterministic accumulated-Gram run, recording stats before each step.
TrajectoryStats run_theoretical(const Problem& p, int steps, double lr, double eps) {
  TrajectoryStats stats;
  Matrix w = p.initial[0];
  const Matrix& w_star = (*p.minimizer)[0];
  OptimizerState st;
  for (int t = 0; t < steps; ++t) {
    const Params g = p.grad({w});
    stats.observe(w, g[0], p.eval({w}), w_star, *p.f_star);
    asgo_theoretical_step(st, w, g[0], lr, eps);
  }
  return stats;
}

// Stochastic counterpart: noise drawn from the seed's child stream.
TrajectoryStats run_theoretical_stochastic(const Problem& p, int steps, double lr, double eps,
                                           int batch, std::uint64_t seed) {
  TrajectoryStats stats;
  Matrix w = p.initial[0];
  const Matrix& w_star = (*p.minimizer)[0];
  OptimizerState st;
  Rng rng = Rng(seed).child("noise");
  for (int t = 0; t < steps; ++t) {
    const Params g = p.stoch_grad({w}, batch, rng);
    stats.observe(w, g[0], p.eval({w}), w_star, *p.f_star);
    asgo_theoretical_step(st, w, g[0], lr, eps);
  }
  return stats;
}

}  // namespace

TwoPhaseResult two_phase_nonsmooth(const Problem& p, int steps, double eps) {
  require_verifiable(p, "two_phase_nonsmooth", false, false);
  TwoPhaseResult result;
  result.pilot_lr = spectral_norm(Matrix(p.initial[0] - (*p.minimizer)[0]));
  if (result.pilot_lr == 0.0) {
    throw std::invalid_argument("two_phase_nonsmooth: trajectory starts at the minimizer");
  }
  const TrajectoryStats pilot = run_theoretical(p, steps, result.pilot_lr, eps);
  result.tuned_lr = pilot.d_op();
  const TrajectoryStats tuned = run_theoretical(p, steps, result.tuned_lr, eps);
  result.report = nonsmooth_bound(tuned, eps, steps);
  return result;
}

StochasticBoundCheck stochastic_smooth_check(const Problem& p, int steps, int batch,
                                             const std::vector<std::uint64_t>& seeds,
                                             double eps) {
  require_verifiable(p, "stochastic_smooth_check", true, true);
  if (seeds.empty()) throw std::invalid_argument("stochastic_smooth_check: need seeds");

  const double pilot_lr = spectral_norm(Matrix(p.initial[0] - (*p.minimizer)[0]));
  if (pilot_lr == 0.0) {
    throw std::invalid_argument("stochastic_smooth_check: trajectory starts at the minimizer");
  }
  double pilot_d_op = 0.0;
  for (std::uint64_t seed : seeds) {
    const TrajectoryStats stats =
        run_theoretical_stochastic(p, steps, pilot_lr, eps, batch, seed);
    pilot_d_op = std::max(pilot_d_op, stats.d_op());
  }

  StochasticBoundCheck check;
  check.tuned_lr = pilot_d_op;
  double d_op = 0.0;
  double d_f = 0.0;
  std::vector<double> gaps;
  gaps.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    const TrajectoryStats stats =
        run_theoretical_stochastic(p, steps, check.tuned_lr, eps, batch, seed);
    d_op = std::max(d_op, stats.d_op());
    d_f = std::max(d_f, stats.d_f());
    gaps.push_back(stats.avg_gap());
  }

  double mean_gap = 0.0;
  for (double g : gaps) mean_gap += g;
  mean_gap /= static_cast<double>(gaps.size());
  double var = 0.0;
  for (double g : gaps) var += (g - mean_gap) * (g - mean_gap);
  check.lhs_stderr = gaps.size() > 1
                         ? std::sqrt(var / (static_cast<double>(gaps.size()) *
                                            static_cast<double>(gaps.size() - 1)))
                         : 0.0;

  check.report = smooth_bound(d_op, d_f, trace_norm(*p.smoothness),
                              trace_norm(*p.noise_bound), batch, steps, eps);
  check.report.lhs = mean_gap;
  check.report.slack = check.report.rhs - check.report.lhs;
  check.pass = check.report.slack >= -3.0 * check.lhs_stderr;
  return check;
}

MuonRateCheck muon_rate_check(const Problem& p, int steps) {
  require_verifiable(p, "muon_rate_check", true, false);
  MuonRateCheck check;
  const double f0 = p.eval(p.initial);
  check.rate = muon_rate_bound(trace_norm(*p.smoothness), f0, *p.f_star, steps);

  Matrix w = p.initial[0];
  const Matrix& w_star = (*p.minimizer)[0];
  TrajectoryStats stats;
  OptimizerState st;
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Muon;
  cfg.beta1 = 0.0;
  cfg.lr = check.rate.eta > 0.0 ? check.rate.eta : 1.0;
  for (int t = 0; t < steps; ++t) {
    const Params g = p.grad({w});
    stats.observe(w, g[0], p.eval({w}), w_star, *p.f_star);
    if (check.rate.eta > 0.0) muon_step(st, w, g[0], cfg, check.rate.eta);
  }
  check.lhs = stats.avg_grad_trace_norm();
  check.slack = check.rate.rhs - check.lhs;
  return check;
}

// ---------------------------------------------------------------------------
// Rate proxies
// ---------------------------------------------------------------------------

RateProxies preconditioner_rate_proxies(const std::vector<Matrix>& grads) {
  if (grads.empty()) throw std::invalid_argument("preconditioner_rate_proxies: no gradients");
  const Index m = grads[0].rows();
  const Index n = grads[0].cols();
  Matrix left = Matrix::Zero(m, m);
  Matrix right = Matrix::Zero(n, n);
  for (const Matrix& g : grads) {
    if (g.rows() != m || g.cols() != n) {
      throw DimensionMismatch("preconditioner_rate_proxies: inconsistent gradient shapes");
    }
    left += g * g.transpose();
    right += g.transpose() * g;
  }
  left = symmetrize(left);
  right = symmetrize(right);

  RateProxies proxies;
  proxies.asgo = sqrt_trace_of_psd(left);
  proxies.shampoo = trace(psd_power(left, 0.25)) * trace(psd_power(right, 0.25));
  proxies.adagrad = 0.0;
  for (Index j = 0; j < m; ++j) proxies.adagrad += std::sqrt(std::max(left(j, j), 0.0));
  return proxies;
}

RateComparisonReport rate_comparison_instance(RateInstanceKind kind, Index m, Index n, Index r,
                                              Rng& rng) {
  if (r < 1 || r > std::min(m, n)) {
    throw std::invalid_argument("rate_comparison_instance: need 1 <= r <= min(m, n)");
  }
  constexpr int kSteps = 20;
  RateComparisonReport report;
  std::vector<Matrix> grads;
  Matrix q;

  if (kind == RateInstanceKind::LowrankGrad) {
    const Matrix basis = random_orthogonal(rng, m).leftCols(r);
    grads.reserve(kSteps);
    for (int t = 0; t < kSteps; ++t) {
      grads.push_back(Matrix(basis * random_matrix(rng, r, n)));
    }
    // Gram-direction matrix with exactly r unit eigenvalues.
    q = symmetrize(Matrix(basis * basis.transpose()));

    // Spread-out displacement: every singular value equal, so the operator
    // and Frobenius diameters relate by exactly sqrt(min(m, n)).
    const Index k = std::min(m, n);
    const Matrix pu = random_orthogonal(rng, m).leftCols(k);
    const Matrix pv = random_orthogonal(rng, n).leftCols(k);
    const Matrix displacement = pu * pv.transpose();
    report.d_op = spectral_norm(displacement);
    report.d_f = displacement.norm();
  } else {
    grads.reserve(kSteps);
    for (int t = 0; t < kSteps; ++t) grads.push_back(random_matrix(rng, m, n));
    Matrix mean_gram = Matrix::Zero(m, m);
    for (const Matrix& g : grads) mean_gram += g * g.transpose();
    mean_gram = symmetrize(Matrix(mean_gram / static_cast<double>(kSteps)));
    q = psd_power(mean_gram, 0.5);

    const Matrix pu = random_orthogonal(rng, m).leftCols(r);
    const Matrix pv = random_orthogonal(rng, n).leftCols(r);
    const Matrix displacement = pu * pv.transpose();
    report.d_op = spectral_norm(displacement);
    report.d_f = displacement.norm();
  }

  report.q_trace_norm = trace_norm(q);
  report.q_frobenius = q.norm();
  report.proxies = preconditioner_rate_proxies(grads);
  const double tol = 1e-12 * std::max(1.0, report.proxies.asgo);
  report.chain_ok = report.proxies.asgo <= report.proxies.shampoo + tol &&
                    report.proxies.asgo <= report.proxies.adagrad + tol;
  return report;
}

// ---------------------------------------------------------------------------
// Lemma suite
// ---------------------------------------------------------------------------

namespace {

Index random_dim(Rng& rng) { return 2 + static_cast<Index>(rng.next_u64() % 15); }

double min_eigenvalue(const Matrix& x) {
  const SymEig eig = sym_eig(x);
  return eig.eigenvalues(eig.eigenvalues.size() - 1);
}

void record(LemmaResult& result, double slack, double tol) {
  result.trials += 1;
  if (slack < -tol) result.failures += 1;
  result.worst_slack = std::min(result.worst_slack, slack);
}

}  // namespace

std::vector<LemmaResult> lemma_suite(std::uint64_t seed, int trials) {
  if (trials < 1) throw std::invalid_argument("lemma_suite: need trials >= 1");
  std::vector<LemmaResult> results(5);
  results[0].name = "operator-monotone-power";
  results[1].name = "sqrt-trace-subadditive";
  results[2].name = "sqrt-trace-diagonal";
  results[3].name = "nuclear-energy-split";
  results[4].name = "weighted-mean-bound";

  Rng rng = Rng(seed).child("lemma-suite");

  for (int t = 0; t < trials; ++t) {
    // Operator monotonicity of x -> x^a on PSD matrices, a in (0, 1].
    {
      const Index n = random_dim(rng);
      const Matrix a = random_spd(rng, n, rng.next_uniform(1.0, 100.0), rng.next_uniform(0.5, 4.0));
      const Index bump_rank = 1 + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
      const Matrix b = symmetrize(
          Matrix(a + random_psd_rank(rng, n, bump_rank, rng.next_uniform(0.1, 2.0))));
      double alpha = 0.5;
      if (t % 3 == 1) alpha = 0.25;
      if (t % 3 == 2) alpha = rng.next_uniform(0.05, 0.95);
      const Matrix a_pow = psd_power(a, alpha);
      const Matrix b_pow = psd_power(b, alpha);
      const double scale = std::max({a_pow.norm(), b_pow.norm(), 1.0});
      record(results[0], min_eigenvalue(Matrix(b_pow - a_pow)), 1e-9 * scale);
    }

    // tr((X + Y)^{1/2}) <= tr(X^{1/2}) + tr(Y^{1/2}).
    {
      const Index n = random_dim(rng);
      const Matrix x = random_spd(rng, n, rng.next_uniform(1.0, 50.0), rng.next_uniform(0.5, 3.0));
      const Matrix y = random_spd(rng, n, rng.next_uniform(1.0, 50.0), rng.next_uniform(0.5, 3.0));
      const double lhs = trace(psd_power(Matrix(x + y), 0.5));
      const double rhs = trace(psd_power(x, 0.5)) + trace(psd_power(y, 0.5));
      record(results[1], rhs - lhs, 1e-9 * std::max(rhs, 1.0));
    }

    // tr(X^{1/2}) <= sum_j sqrt(X_jj), equality when X is diagonal.
    {
      const Index n = random_dim(rng);
      Matrix x;
      const bool diagonal_case = (t % 4 == 0);
      if (diagonal_case) {
        Vector d(n);
        for (Index i = 0; i < n; ++i) d(i) = rng.next_uniform(0.0, 3.0);
        x = d.asDiagonal();
      } else {
        const Index rank = 1 + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
        x = random_psd_rank(rng, n, rank, rng.next_uniform(0.5, 3.0));
      }
      const double lhs = trace(psd_power(x, 0.5));
      double rhs = 0.0;
      for (Index j = 0; j < n; ++j) rhs += std::sqrt(std::max(x(j, j), 0.0));
      const double scale = std::max(rhs, 1.0);
      const double slack = rhs - lhs;
      record(results[2], slack, 1e-9 * scale);
      if (diagonal_case && std::abs(slack) > 1e-9 * scale) results[2].failures += 1;
    }

    // ||G||_* <= sqrt(||Lam||_* tr(G^T Lam^{-1} G)) for SPD Lam.
    {
      const Index m = random_dim(rng);
      const Index n = random_dim(rng);
      const Matrix g = random_matrix(rng, m, n);
      const Matrix lam = random_spd(rng, m, rng.next_uniform(1.0, 100.0), rng.next_uniform(0.5, 3.0));
      const Matrix lam_inv = psd_power(lam, -1.0);
      const double lhs = trace_norm(g);
      const double rhs = std::sqrt(trace_norm(lam) * (g.transpose() * lam_inv * g).trace());
      record(results[3], rhs - lhs, 1e-9 * std::max(rhs, 1.0));
    }

    // (1/S) sum x_j <= sqrt((1/S) sum x_j^2 / s_j), S = sum s_j.
    {
      const Index n = 1 + static_cast<Index>(rng.next_u64() % 16);
      Vector x(n), s(n);
      for (Index i = 0; i < n; ++i) s(i) = rng.next_uniform(0.05, 3.0);
      const bool equality_case = (t % 10 == 0);
      if (equality_case) {
        const double c = rng.next_uniform(0.1, 2.0);
        x = c * s;
      } else {
        for (Index i = 0; i < n; ++i) x(i) = rng.next_uniform(0.0, 2.0);
      }
      const double total_s = s.sum();
      const double lhs = x.sum() / total_s;
      const double rhs = std::sqrt((x.array().square() / s.array()).sum() / total_s);
      const double slack = rhs - lhs;
      const double scale = std::max(rhs, 1.0);
      record(results[4], slack, 1e-9 * scale);
      if (equality_case && std::abs(slack) > 1e-12 * scale) results[4].failures += 1;
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// Batch variance
// ---------------------------------------------------------------------------

std::vector<BatchVarianceResult> batch_variance_check(const NoiseModel& noise, Index cols,
                                                      const std::vector<int>& batches, int draws,
                                                      Rng& rng) {
  if (draws < 2) throw std::invalid_argument("batch_variance_check: need draws >= 2");
  const Matrix v2 = noise.v_squared();
  const Index m = v2.rows();

  std::vector<BatchVarianceResult> out;
  out.reserve(batches.size());
  for (int batch : batches) {
    if (batch < 1) throw std::invalid_argument("batch_variance_check: batches must be >= 1");
    double sum_stat = 0.0;
    double sum_stat_sq = 0.0;
    Matrix mean_outer = Matrix::Zero(m, m);
    Matrix mean_outer_sq = Matrix::Zero(m, m);  // entrywise second moments

    for (int d = 0; d < draws; ++d) {
      Matrix avg = Matrix::Zero(m, cols);
      for (int k = 0; k < batch; ++k) avg += noise.sample(cols, rng);
      avg /= static_cast<double>(batch);
      const double stat = avg.squaredNorm();
      sum_stat += stat;
      sum_stat_sq += stat * stat;
      const Matrix outer = avg * avg.transpose();
      mean_outer += outer;
      mean_outer_sq += outer.cwiseProduct(outer);
    }

    BatchVarianceResult r;
    r.batch = batch;
    r.empirical = sum_stat / draws;
    r.expected = v2.trace() / static_cast<double>(batch);
    const double var_stat =
        std::max(0.0, sum_stat_sq / draws - r.empirical * r.empirical);
    r.stderr_mean = std::sqrt(var_stat / draws);
    r.pass = std::abs(r.empirical - r.expected) <= 3.0 * r.stderr_mean;

    mean_outer /= static_cast<double>(draws);
    mean_outer_sq /= static_cast<double>(draws);
    const Matrix entry_var =
        (mean_outer_sq - mean_outer.cwiseProduct(mean_outer)).cwiseMax(0.0);
    const double sigma_f = std::sqrt(entry_var.sum() / draws);
    const Matrix limit = Matrix(v2 / static_cast<double>(batch) +
                                5.0 * sigma_f * Matrix::Identity(m, m));
    r.loewner_pass = loewner_leq(symmetrize(mean_outer), limit, 1e-12);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Epsilon sensitivity probe
// ---------------------------------------------------------------------------

std::vector<ProbeRow> epsilon_sensitivity_probe(const Problem& p, int steps,
                                                const std::vector<double>& eps_list,
                                                const std::vector<std::string>& kernels,
                                                double beta1, double lr, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("epsilon_sensitivity_probe: need steps >= 1");
  (void)seed;  // the reference walk is deterministic; seed reserved for stochastic problems

  Params w = p.initial;
  const std::size_t n_groups = w.size();

  // Reference trajectory state (orthogonalized momentum, beta2 unused).
  OptimizerConfig muon_cfg;
  muon_cfg.kind = OptimizerKind::Muon;
  muon_cfg.beta1 = beta1;
  muon_cfg.lr = lr;
  muon_cfg.eps = 1e-8;  // used only by the vector-parameter fallback
  std::vector<OptimizerState> muon_states(n_groups);

  // One variant state per (group, eps, kernel).
  struct Variant {
    OptimizerConfig cfg;
    std::vector<OptimizerState> states;  // per group
  };
  std::vector<Variant> variants;
  for (double eps : eps_list) {
    for (const std::string& kernel : kernels) {
      Variant v;
      v.cfg.kind = OptimizerKind::AsgoPractical;
      v.cfg.beta1 = beta1;
      v.cfg.beta2 = 0.0;
      v.cfg.eps = eps;
      v.cfg.lr = 1.0;
      v.cfg.kernel = kernel_kind_from_string(kernel);
      v.cfg.kernel_steps = (v.cfg.kernel == KernelKind::PolarExpress) ? 10 : 30;
      v.cfg.precondition_source = PreconditionSource::Momentum;
      v.cfg.validate();
      v.states.resize(n_groups);
      variants.push_back(std::move(v));
    }
  }

  std::vector<ProbeRow> rows;
  for (int t = 0; t < steps; ++t) {
    const Params g = p.grad(w);

    // Reference directions at the current point.
    std::vector<Matrix> muon_dirs(n_groups);
    for (std::size_t gi = 0; gi < n_groups; ++gi) {
      if (p.groups[gi].vector_param) continue;
      OptimizerState& st = muon_states[gi];
      if (st.momentum.rows() != g[gi].rows() || st.momentum.cols() != g[gi].cols()) {
        st.momentum = Matrix::Zero(g[gi].rows(), g[gi].cols());
      }
      st.momentum = beta1 * st.momentum + g[gi];
      const Svd dec = svd(st.momentum);
      muon_dirs[gi] = Matrix::Zero(g[gi].rows(), g[gi].cols());
      if (dec.rank > 0) muon_dirs[gi] = dec.u * dec.v.transpose();
    }

    // Variant directions against the same gradient stream.
    for (Variant& v : variants) {
      for (std::size_t gi = 0; gi < n_groups; ++gi) {
        if (p.groups[gi].vector_param) continue;
        Matrix scratch = w[gi];
        practical_asgo_step(v.states[gi], scratch, g[gi], v.cfg, 1.0);
        const Matrix direction = w[gi] - scratch;
        ProbeRow row;
        row.step = t;
        row.group = static_cast<int>(gi);
        row.eps = v.cfg.eps;
        row.kernel = to_string(v.cfg.kernel);
        if (direction.norm() == 0.0 || muon_dirs[gi].norm() == 0.0) {
          row.cosine_vs_muon = std::numeric_limits<double>::quiet_NaN();
        } else {
          row.cosine_vs_muon = cosine_similarity(direction, muon_dirs[gi]);
        }
        rows.push_back(std::move(row));
      }
    }

    // Advance the reference trajectory (vector groups walk by the fallback).
    for (std::size_t gi = 0; gi < n_groups; ++gi) {
      if (p.groups[gi].vector_param) {
        adamw_step(muon_states[gi], w[gi], g[gi], muon_cfg, lr);
      } else {
        w[gi] -= lr * muon_dirs[gi];
      }
    }
  }
  return rows;
}

}  // namespace sgo
