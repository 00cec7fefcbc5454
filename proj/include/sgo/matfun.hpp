#pragma once

#include "sgo/linalg.hpp"

#include <array>
#include <vector>

namespace sgo {

// Coefficient schedule for the odd-polynomial iterations: each entry (a, b, c)
// drives one step of Y <- aY + Y(bA + cA^2) with A = ZY. A single-entry
// schedule is reused for every step ("fixed"); longer schedules are consumed
// one entry per step.
struct NsCoefficients {
  std::vector<std::array<double, 3>> schedule;

  bool fixed() const { return schedule.size() == 1; }

  // Classic quintic iteration coefficients (2, -3/2, 1/2).
  static NsCoefficients quintic();
};

// Ten-step coefficient schedule tuned for fast sign-function convergence.
NsCoefficients polar_express_schedule();

// Matched inverse square root and square root of an SPD matrix, with the
// residual measured as ||Z X Z - I||_F / sqrt(n) on the (damped) input.
struct NsResult {
  Matrix inv_sqrt;
  Matrix sqrt;
  int iterations = 0;
  double residual = 0.0;
};

// Coupled Newton-Schulz family iteration for X^{-1/2} and X^{1/2}.
// The input is symmetrized and optionally damped by lambda_floor * I before
// iterating; eps is added to the Frobenius normalizer. Throws
// std::invalid_argument when steps exceeds a non-fixed schedule length,
// SingularMatrixError for a zero input, DivergenceError (with the iteration
// index) when an iterate stops being finite.
NsResult ns_sqrt_inverse(const Matrix& x, const NsCoefficients& coeffs, int steps,
                         double eps = 0.0, double lambda_floor = 0.0);

// Denman-Beavers iteration: quadratically convergent X^{1/2} / X^{-1/2} pair
// with per-step matrix inverses. Stops early once
// ||Y_{k+1} - Y_k||_F <= tol * ||Y_k||_F. Throws SingularMatrixError when an
// iterate is not invertible.
NsResult denman_beavers_inv_sqrt(const Matrix& x, int max_steps, double tol = 1e-13);

// Errors of the block matrix-sign construction against the eigendecomposition
// oracle: embedding X into [[0, X/a],[I, 0]] and running the polynomial
// iteration yields X^{1/2}/sqrt(a) in the (1,2) block and sqrt(a) X^{-1/2}
// in the (2,1) block.
struct BlockMsignErrors {
  double sqrt_err = 0.0;
  double inv_sqrt_err = 0.0;
};

BlockMsignErrors block_msign_check(const Matrix& x, const NsCoefficients& coeffs, int steps);

}  // namespace sgo
