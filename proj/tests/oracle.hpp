#pragma once

// Exact-Gamma closed loop on the noise-free logistic map:
// Gamma*(x_prev, x_cur) = T(invert_input(x_prev, x_cur)).

#include "rcn/forecast.hpp"
#include "rcn/reservoir.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

#include <vector>

namespace rcn::testing {

using Quad = boost::multiprecision::number<boost::multiprecision::cpp_bin_float_quad::backend_type,
                                           boost::multiprecision::et_off>;

struct OracleRun {
  std::vector<double> predicted;
  std::vector<double> truth;
};

/// Drives `r` (cast to Scalar) with a logistic orbit from w0 for `washout`
/// steps and then closes the loop with the exact Gamma for `horizon` steps.
template <class Scalar>
OracleRun exact_gamma_logistic(const Reservoir& r, double w0, std::size_t washout, std::size_t horizon) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const BasicReservoir<Scalar> rs = r.cast<Scalar>();
  auto logistic = [](const Scalar& w) { return Scalar(4) * w * (Scalar(1) - w); };

  const std::size_t total = washout + horizon;
  std::vector<Scalar> w(total);
  w[0] = Scalar(w0);
  for (std::size_t n = 1; n < total; ++n) w[n] = logistic(w[n - 1]);

  Mat inputs(static_cast<Index>(washout), 1);
  for (std::size_t n = 0; n < washout; ++n) inputs(static_cast<Index>(n), 0) = w[n];
  const Mat states = drive_states<Scalar>(rs, inputs, Vec::Zero(rs.size()));
  const Index last = static_cast<Index>(washout) - 1;
  Vec u0(1);
  u0(0) = w[washout - 1];
  const Vec x0 = states.row(last).transpose();

  auto gamma = [&](const Vec& xp, const Vec& xc) {
    Vec u(1);
    u(0) = logistic(rs.invert_input(xp, xc)(0));
    return u;
  };
  const auto [pred, st] = closed_loop_with<Scalar>(rs, gamma, u0, x0, horizon, false);
  OracleRun out;
  for (std::size_t k = 0; k < horizon; ++k) {
    out.predicted.push_back(static_cast<double>(pred(static_cast<Index>(k), 0)));
    out.truth.push_back(static_cast<double>(w[washout + k]));
  }
  return out;
}

/// Number of leading steps with |predicted - truth| <= tol.
inline std::size_t agreement_steps(const OracleRun& run, double tol) {
  std::size_t k = 0;
  while (k < run.truth.size() && std::abs(run.predicted[k] - run.truth[k]) <= tol) ++k;
  return k;
}

}  // namespace rcn::testing
