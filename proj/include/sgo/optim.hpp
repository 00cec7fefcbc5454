#pragma once

#include "sgo/linalg.hpp"
#include "sgo/matfun.hpp"

#include <limits>
#include <string>
#include <vector>

namespace sgo {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class OptimizerKind {
  AsgoTheoretical,
  AsgoPractical,
  Dasgo,
  Muon,
  Shampoo,
  FullMatrixAdagrad,
  AdamW,
  Sgd,
};

enum class KernelKind { ExactEig, NewtonSchulz, PolarExpress, DenmanBeavers };

enum class SidePolicy { AutoMinDim, ForceLeft, ForceRight };

enum class PreconditionSource { Gradient, Momentum };

std::string to_string(OptimizerKind k);
std::string to_string(KernelKind k);
std::string to_string(SidePolicy p);
std::string to_string(PreconditionSource s);

OptimizerKind optimizer_kind_from_string(const std::string& s);
KernelKind kernel_kind_from_string(const std::string& s);
SidePolicy side_policy_from_string(const std::string& s);
PreconditionSource precondition_source_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::AsgoPractical;
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double eps = 0.0;
  int update_freq = 1;  // preconditioner refresh period (cache lifetime)
  double shampoo_inverse_order = -0.25;
  PreconditionSource precondition_source = PreconditionSource::Gradient;
  SidePolicy side_policy = SidePolicy::AutoMinDim;
  bool rms_align = false;
  int qk_groups = 1;
  KernelKind kernel = KernelKind::ExactEig;
  int kernel_steps = 10;
  double weight_decay = 0.0;
  int full_matrix_cap = 256;  // largest m*n the full-matrix accumulator accepts

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Parameters and state
// ---------------------------------------------------------------------------

// One trainable block handed to the optimizer each step: current weight,
// current (possibly stochastic) gradient, and how to slice it.
struct ParamGroup {
  Matrix weight;
  Matrix grad;
  int heads = 1;             // split columns into this many independent blocks
  bool vector_param = false; // bias-like parameter; matrix preconditioning is skipped
  std::string name;
};

// Per-block slow state. Which members are populated depends on the optimizer
// kind; unused members stay empty.
struct OptimizerState {
  long step_count = 0;
  Matrix momentum;
  Matrix accumulator;         // left/one-sided Gram accumulator (V or L)
  Matrix accumulator_right;   // Shampoo right accumulator (R)
  Vector diag_accumulator;    // diagonal second moment (column-wise)
  Matrix second_moment;       // element-wise second moment (adamw)
  Matrix cached_preconditioner;
  Matrix cached_preconditioner_right;
  int cache_age = 0;
  double last_kernel_residual = std::numeric_limits<double>::quiet_NaN();
};

struct StepStats {
  double update_frobenius = 0.0;
  double kernel_residual = std::numeric_limits<double>::quiet_NaN();
};

// ---------------------------------------------------------------------------
// Single-block update rules (free functions; the Optimizer class handles
// grouping/heads and dispatches here)
// ---------------------------------------------------------------------------

// Accumulated-Gram one-sided preconditioning with an exact eigendecomposition:
// V += g g^T, step along (V^{1/2} + eps I)^{-1} g.
StepStats asgo_theoretical_step(OptimizerState& st, Matrix& w, const Matrix& g, double lr,
                                double eps);

// Momentum + EMA Gram preconditioning on the smaller side, inverse square root
// through the configured kernel, optional RMS-aligned step scaling.
StepStats practical_asgo_step(OptimizerState& st, Matrix& w, const Matrix& g,
                              const OptimizerConfig& cfg, double lr);

// Diagonal variant: per-column second moments of the Gram diagonal.
StepStats dasgo_step(OptimizerState& st, Matrix& w, const Matrix& g,
                     const OptimizerConfig& cfg, double lr);

// Heavy-ball momentum orthogonalized by compact SVD.
StepStats muon_step(OptimizerState& st, Matrix& w, const Matrix& g,
                    const OptimizerConfig& cfg, double lr);

// Two-sided Kronecker-factored preconditioning.
StepStats shampoo_step(OptimizerState& st, Matrix& w, const Matrix& g,
                       const OptimizerConfig& cfg, double lr);

// Full-matrix accumulator over the vectorized gradient (small blocks only).
StepStats full_matrix_adagrad_step(OptimizerState& st, Matrix& w, const Matrix& g,
                                   const OptimizerConfig& cfg, double lr);

StepStats adamw_step(OptimizerState& st, Matrix& w, const Matrix& g,
                     const OptimizerConfig& cfg, double lr);

StepStats sgd_step(OptimizerState& st, Matrix& w, const Matrix& g,
                   const OptimizerConfig& cfg, double lr);

// tr(A^T B) / (||A||_F ||B||_F); throws std::invalid_argument on zero input.
double cosine_similarity(const Matrix& a, const Matrix& b);

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  const OptimizerConfig& config() const { return cfg_; }

  // Applies one update in place to every group, at the configured lr or an
  // explicit schedule value. Returns aggregate stats over all blocks.
  StepStats step(std::vector<ParamGroup>& groups);
  StepStats step(std::vector<ParamGroup>& groups, double lr);

  // Per-group, per-block state (exposed for tests and diagnostics).
  const std::vector<std::vector<OptimizerState>>& states() const { return states_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<OptimizerState>> states_;
};

}  // namespace sgo
