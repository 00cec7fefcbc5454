#pragma once

#include "sgo/linalg.hpp"
#include "sgo/problems.hpp"
#include "sgo/rng.hpp"

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace sgo {

// ---------------------------------------------------------------------------
// Trajectory instrumentation
// ---------------------------------------------------------------------------

// Records one (W_t, G_t, f(W_t)) triple per step, taken BEFORE the parameter
// update, for a single-matrix problem with a known minimizer.
class TrajectoryStats {
 public:
  void observe(const Matrix& w, const Matrix& g, double loss, const Matrix& w_star,
               double f_star);

  int steps() const { return static_cast<int>(losses_.size()); }
  const std::vector<double>& losses() const { return losses_; }
  const std::vector<double>& f_gaps() const { return f_gaps_; }
  const Matrix& gram() const { return gram_; }  // sum of G_t G_t^T

  double d_op() const { return d_op_; }  // max_t ||W_t - W*||_2
  double d_f() const { return d_f_; }    // max_t ||W_t - W*||_F
  double avg_gap() const;
  double avg_grad_trace_norm() const;

 private:
  std::vector<double> losses_;
  std::vector<double> f_gaps_;
  std::vector<double> grad_trace_norms_;
  Matrix gram_;
  double d_op_ = 0.0;
  double d_f_ = 0.0;
};

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

struct BoundReport {
  std::string bound_name;
  double lhs = std::numeric_limits<double>::quiet_NaN();
  double rhs = std::numeric_limits<double>::quiet_NaN();
  double slack = std::numeric_limits<double>::quiet_NaN();  // rhs - lhs, signed
  std::vector<std::pair<std::string, double>> components;
};

// Average-gap guarantee for the accumulated-Gram method at step size D_op:
// rhs = tr((sum G G^T)^{1/2}) * D_op / T + eps * D_F^2 / (D_op * T).
BoundReport nonsmooth_bound(const TrajectoryStats& stats, double eps, int t);

// Closed-form specialization when every step gradient has Gram Q^2 (rhs only):
// rhs = ||Q||_* D_op / sqrt(T) + eps D_F^2 / (D_op T).
BoundReport corollary_bound(const Matrix& q, double d_op, double d_f, double eps, int t);

// Stochastic smooth rate (rhs only, pure arithmetic):
// rhs = 4 D_op^2 ||L||_* / T + 2 sqrt(2) D_op ||V||_* / sqrt(M T)
//       + 2 eps D_F^2 / (D_op T).
BoundReport smooth_bound(double d_op, double d_f, double l_trace_norm, double v_trace_norm,
                         int batch, int t, double eps);

// Deterministic smooth rate for the orthogonalized-momentum method: the tuned
// step size and the guaranteed bound on the average gradient nuclear norm.
struct MuonRate {
  double eta = 0.0;
  double rhs = 0.0;
};

MuonRate muon_rate_bound(double l_trace_norm, double f0, double f_star, int t);

// ---------------------------------------------------------------------------
// Bound-verification drivers
// ---------------------------------------------------------------------------

// Tunes the accumulated-Gram method's step size to its own trajectory: a pilot
// run at lr = ||W0 - W*||_2 measures the operator diameter, the real run uses
// that diameter as the step size, and the bound is evaluated on the re-measured
// trajectory. Requires a single-matrix problem with minimizer and f_star.
struct TwoPhaseResult {
  double pilot_lr = 0.0;
  double tuned_lr = 0.0;
  BoundReport report;
};

TwoPhaseResult two_phase_nonsmooth(const Problem& p, int steps, double eps);

// Stochastic variant against the smooth rate: runs every seed at the tuned
// step size, averages the per-seed mean gaps, and compares against the rate
// built from the measured diameters, the problem's curvature trace norm, and
// its noise-bound trace norm. The pass criterion allows 3x the seed stderr.
struct StochasticBoundCheck {
  BoundReport report;      // lhs = seed-averaged mean gap
  double lhs_stderr = 0.0; // stderr of the per-seed mean gaps
  double tuned_lr = 0.0;
  bool pass = false;       // slack >= -3 * lhs_stderr
};

StochasticBoundCheck stochastic_smooth_check(const Problem& p, int steps, int batch,
                                             const std::vector<std::uint64_t>& seeds, double eps);

// Deterministic orthogonalized-momentum rate: runs the method at the tuned
// step size from muon_rate_bound and compares the average gradient nuclear
// norm against the guaranteed rhs.
struct MuonRateCheck {
  double lhs = 0.0;
  MuonRate rate;
  double slack = 0.0;
};

MuonRateCheck muon_rate_check(const Problem& p, int steps);

// ---------------------------------------------------------------------------
// Preconditioner-quality comparisons
// ---------------------------------------------------------------------------

struct RateProxies {
  double asgo = 0.0;     // tr((sum G G^T)^{1/2})
  double shampoo = 0.0;  // tr((sum G G^T)^{1/4}) * tr((sum G^T G)^{1/4})
  double adagrad = 0.0;  // sum_j sqrt([sum G G^T]_jj)
};

RateProxies preconditioner_rate_proxies(const std::vector<Matrix>& grads);

enum class RateInstanceKind { LowrankGrad, HighrankDisplacement };

struct RateComparisonReport {
  double q_trace_norm = 0.0;
  double q_frobenius = 0.0;
  double d_op = 0.0;
  double d_f = 0.0;
  RateProxies proxies;
  bool chain_ok = false;  // asgo <= shampoo and asgo <= adagrad
};

// Builds a structured instance (low-rank gradients or a high-rank spread-out
// displacement) and reports the quantities the rate comparison depends on.
RateComparisonReport rate_comparison_instance(RateInstanceKind kind, Index m, Index n, Index r,
                                              Rng& rng);

// ---------------------------------------------------------------------------
// Randomized inequality suite
// ---------------------------------------------------------------------------

struct LemmaResult {
  std::string name;
  int trials = 0;
  int failures = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
};

// Property checks for the matrix inequalities the analysis rests on:
// operator monotonicity of x^a (a in (0,1]), subadditivity of tr sqrt,
// the diagonal bound on tr sqrt, the nuclear-norm energy split, and the
// weighted-mean scalar bound (with exact-equality instances mixed in).
std::vector<LemmaResult> lemma_suite(std::uint64_t seed, int trials);

struct BatchVarianceResult {
  int batch = 0;
  double empirical = 0.0;  // mean ||N_bar||_F^2 over draws
  double expected = 0.0;   // tr(V^2) / batch
  double stderr_mean = 0.0;
  bool pass = false;           // |empirical - expected| <= 3 stderr
  bool loewner_pass = false;   // E[N_bar N_bar^T] <= V^2 / M + 5 sigma I
};

// Monte-Carlo check that batch averaging scales the noise second moment by
// 1/M, in both scalar and Loewner form.
std::vector<BatchVarianceResult> batch_variance_check(const NoiseModel& noise, Index rows_cols,
                                                      const std::vector<int>& batches, int draws,
                                                      Rng& rng);

// ---------------------------------------------------------------------------
// Epsilon sensitivity probe
// ---------------------------------------------------------------------------

struct ProbeRow {
  int step = 0;
  int group = 0;
  double eps = 0.0;
  std::string kernel;
  double cosine_vs_muon = 0.0;
};

// Walks a reference orthogonalized-momentum trajectory on the problem and, at
// every step and matrix-shaped group, measures the cosine between that update
// and the one-sided momentum-Gram update at each (eps, kernel) setting.
std::vector<ProbeRow> epsilon_sensitivity_probe(const Problem& p, int steps,
                                                const std::vector<double>& eps_list,
                                                const std::vector<std::string>& kernels,
                                                double beta1, double lr, std::uint64_t seed);

}  // namespace sgo
