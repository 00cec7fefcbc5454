#pragma once

#include "sgo/linalg.hpp"

#include <cstdint>
#include <string_view>

namespace sgo {

// Deterministic, platform-independent random source (SplitMix64 core with a
// Box-Muller Gaussian layer). Distribution implementations are pinned here so
// that byte-identical reruns hold across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double next_double();

  double next_uniform(double lo, double hi);

  // Standard normal via Box-Muller (caches the spare deviate).
  double next_gaussian();

  // Independent child streams derived from the original seed, stable under
  // any number of draws taken from the parent.
  Rng child(std::string_view label) const;
  Rng child(std::uint64_t index) const;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// iid N(0,1) entries filled in row-major order.
Matrix random_matrix(Rng& rng, Index rows, Index cols);

// Haar-ish orthogonal matrix via QR of a Gaussian matrix with the R-diagonal
// sign fix.
Matrix random_orthogonal(Rng& rng, Index n);

// SPD matrix with an exactly log-spaced spectrum: eigenvalues
// top * cond^(-i/(n-1)), i = 0..n-1, in a random orthogonal frame.
Matrix random_spd(Rng& rng, Index n, double cond, double top = 1.0);

// PSD matrix of the given rank whose nonzero eigenvalues are log-spaced over
// one decade below `top`.
Matrix random_psd_rank(Rng& rng, Index n, Index rank, double top = 1.0);

}  // namespace sgo
