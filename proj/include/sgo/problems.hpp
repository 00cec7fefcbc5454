#pragma once

#include "sgo/linalg.hpp"
#include "sgo/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sgo {

// Structured additive gradient noise N = A Z with Z iid N(0, 1/cols), so that
// E[N N^T] = A A^T exactly.
struct NoiseModel {
  Matrix factor;  // the matrix A

  Matrix sample(Index cols, Rng& rng) const;
  Matrix v_squared() const;  // A A^T
  Matrix v() const;          // (A A^T)^{1/2}

  // Builds the model whose second moment is v^2 for a symmetric PSD v.
  static NoiseModel from_v(const Matrix& v);
};

using Params = std::vector<Matrix>;

struct GroupSpec {
  Index rows = 0;
  Index cols = 0;
  bool vector_param = false;
  std::string name;
};

// A differentiable test problem over a list of matrix parameters. Gradients
// are exact; stoch_grad averages `batch` independent noisy draws.
struct Problem {
  std::string name;
  std::vector<GroupSpec> groups;
  Params initial;
  std::function<double(const Params&)> eval;
  std::function<Params(const Params&)> grad;
  std::function<Params(const Params&, int batch, Rng&)> stoch_grad;
  std::optional<Params> minimizer;
  std::optional<Matrix> smoothness;   // curvature matrix L when the loss is quadratic in W
  std::optional<Matrix> noise_bound;  // V with E[N N^T] = V^2
  std::optional<double> f_star;

  bool single_matrix() const { return groups.size() == 1; }
};

// f(W) = 1/2 tr((W - W*)^T L (W - W*)) with optional additive gradient noise.
// L must be symmetric positive definite.
Problem make_quadratic(const Matrix& l, const Matrix& w_star,
                       const std::optional<NoiseModel>& noise, std::uint64_t seed);

// f(W) = 1/2 ||A (W - W*)||_F^2; gradients live in the row space of A^T A and
// have rank at most rank(A).
Problem make_lowrank_regression(const Matrix& a, const Matrix& w_star,
                                const std::optional<NoiseModel>& noise, std::uint64_t seed);

// Convenience: A = B C with B m-by-r and C r-by-m drawn from the seed, W* and
// the initial point m-by-n.
Problem make_lowrank_regression(Index m, Index n, Index r,
                                const std::optional<NoiseModel>& noise, std::uint64_t seed);

// l2-regularized multinomial logistic regression on synthetic clustered data.
// The minimizer is computed by a damped Newton solve at construction and
// cached on disk keyed by the generating parameters.
Problem make_logistic(int n_samples, Index dim, Index classes, std::uint64_t seed,
                      double l2 = 1e-3, const std::string& cache_dir = "");

// One-hidden-layer tanh network with square loss against a noisy teacher.
// Groups: [W1, b1, W2, b2] with the biases flagged vector_param.
Problem make_mlp(Index in, Index hidden, Index out, int n_samples, std::uint64_t seed);

// Central-difference gradient check: returns the maximum relative error over
// every entry of every group.
double finite_diff_check(const Problem& p, const Params& at, double h = 1e-5);

// Resolution order: SGO_CACHE_DIR env var, then <temp>/sgo-cache.
std::string default_cache_dir();

}  // namespace sgo
