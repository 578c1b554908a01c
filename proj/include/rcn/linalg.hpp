#pragma once

#include "rcn/common.hpp"

namespace rcn::linalg {

struct SpectralRadiusResult {
  double radius = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Spectral radius of a square (generally nonsymmetric) matrix by block power
/// iteration with Rayleigh-Ritz extraction.  A block is needed because the
/// dominant eigenvalue of a real random matrix is often a complex pair, on
/// which single-vector power iteration does not settle.  Stops when the
/// dominant Ritz modulus changes by less than `tol` (relative) between
/// iterations.
SpectralRadiusResult spectral_radius(const Matrix& m, double tol = 1e-10, int max_iter = 10000,
                                     int block = 12, std::uint64_t seed = 0x5eed);

/// sigma_min / sigma_max.
double reciprocal_condition(const Matrix& m);

}  // namespace rcn::linalg
