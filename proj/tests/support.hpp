#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ccatomo/lattice_model.hpp"

namespace testing {

// Random two-port chain: mu in [-10, 10], J in [10, 50], kappa in [0.5, 2]
// (or zero when lossless), port rates in [0.5, 2] GHz.
inline ccatomo::LatticeSpec random_spec(std::uint64_t seed, std::size_t n, bool lossless = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mu(-10.0, 10.0), hop(10.0, 50.0), rate(0.5, 2.0);
  ccatomo::LatticeSpec s;
  for (std::size_t i = 0; i < n; ++i) s.mu.push_back(mu(rng));
  for (std::size_t i = 0; i + 1 < n; ++i) s.hop.push_back(hop(rng));
  for (std::size_t i = 0; i < n; ++i) s.kappa.push_back(lossless ? 0.0 : rate(rng));
  s.gamma_in = rate(rng);
  s.gamma_out = rate(rng);
  return s;
}

// Grid covering the band of a random_spec chain with room to spare.
inline ccatomo::FrequencyGrid wide_grid(std::size_t points = 2001) {
  return ccatomo::FrequencyGrid::linspace(-130.0, 130.0, points);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing
