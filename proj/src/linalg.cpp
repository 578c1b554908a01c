#include "rcn/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace rcn::linalg {

SpectralRadiusResult spectral_radius(const Matrix& m, double tol, int max_iter, int block,
                                     std::uint64_t seed) {
  require(m.rows() == m.cols() && m.rows() > 0, "spectral_radius: matrix must be square and nonempty");
  const Index n = m.rows();
  const Index p = std::min<Index>(n, std::max(block, 1));

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix v(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) v(i, j) = gauss(rng);
  v = Eigen::HouseholderQR<Matrix>(v).householderQ() * Matrix::Identity(n, p);

  SpectralRadiusResult res;
  double previous = -1.0;
  for (int it = 1; it <= max_iter; ++it) {
    Matrix w = m * v;
    Matrix h = v.transpose() * w;
    Eigen::EigenSolver<Matrix> ritz(h, false);
    const double lambda = ritz.eigenvalues().cwiseAbs().maxCoeff();
    res.radius = lambda;
    res.iterations = it;
    if (previous >= 0.0 && std::abs(lambda - previous) <= tol * std::max(lambda, 1e-300)) {
      res.converged = true;
      break;
    }
    previous = lambda;
    if (w.norm() == 0.0) {  // nilpotent on the block
      res.converged = true;
      res.radius = 0.0;
      break;
    }
    v = Eigen::HouseholderQR<Matrix>(w).householderQ() * Matrix::Identity(n, p);
  }
  return res;
}

double reciprocal_condition(const Matrix& m) {
  Eigen::BDCSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0.0;
  return s(s.size() - 1) / s(0);
}

}  // namespace rcn::linalg
