#pragma once

// The driven system g(u, x) = (1 - a) x + a tanh(A u + alpha B x).

#include "rcn/common.hpp"
#include "rcn/systems.hpp"

#include <Eigen/LU>

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

namespace rcn {

/// Distance from +-1 inside which an atanh argument is treated as out of
/// domain by input inversion.
inline constexpr double kAtanhGuard = 1e-12;

/// Raised by input inversion when x_next is not reachable from x.
class InversionDomainError : public Error {
public:
  InversionDomainError(Index component, double argument)
      : Error("input inversion out of domain at component " + std::to_string(component) +
              " (atanh argument " + std::to_string(argument) + ")"),
        component_(component) {}
  Index component() const noexcept { return component_; }

private:
  Index component_;
};

namespace detail {

template <class Scalar>
bool all_finite(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) {
  if constexpr (std::is_floating_point_v<Scalar>) {
    return v.allFinite();
  } else {
    using std::abs;
    for (Index i = 0; i < v.size(); ++i) {
      if (v(i) != v(i)) return false;
      if (abs(v(i)) > Scalar(1e300)) return false;
    }
    return true;
  }
}

template <class Scalar>
Scalar atanh_of(const Scalar& y) {
  if constexpr (std::is_floating_point_v<Scalar>) {
    return std::atanh(y);
  } else {
    using std::log;
    return Scalar(0.5) * log((Scalar(1) + y) / (Scalar(1) - y));
  }
}

}  // namespace detail

template <class Scalar>
class BasicReservoir {
public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  /// Takes the matrices as given; `build()` is the constructor that enforces
  /// the unit spectral radius and invertibility invariants.
  BasicReservoir(Mat input_matrix, Mat recurrence, Scalar leak, Scalar alpha, std::uint64_t seed = 0)
      : a_(std::move(input_matrix)), b_(std::move(recurrence)), leak_(leak), alpha_(alpha), seed_(seed) {
    require(a_.rows() > 0 && a_.rows() == a_.cols() && b_.rows() == a_.rows() && b_.cols() == a_.rows(),
            "reservoir matrices must both be N x N");
    require(leak_ > Scalar(0) && leak_ <= Scalar(1), "leak rate a must lie in (0,1]");
    require(alpha_ >= Scalar(0), "alpha must be nonnegative");
    lu_.compute(a_);
  }

  Index size() const { return a_.rows(); }
  const Mat& input_matrix() const { return a_; }
  const Mat& recurrence_matrix() const { return b_; }
  Scalar leak() const { return leak_; }
  Scalar alpha() const { return alpha_; }
  std::uint64_t seed() const { return seed_; }

  /// g(u, x).  An input with K < N entries is treated as zero-padded to N.
  Vec step(const Vec& u, const Vec& x) const {
    require(u.size() <= size() && u.size() > 0, "step: input dimension exceeds N");
    require(x.size() == size(), "step: state dimension mismatch");
    if (!detail::all_finite<Scalar>(u) || !detail::all_finite<Scalar>(x))
      throw PreconditionError("step: non-finite input or state");
    Vec pre = a_.leftCols(u.size()) * u + alpha_ * (b_ * x);
    using std::tanh;
    Vec out(size());
    for (Index i = 0; i < size(); ++i) out(i) = (Scalar(1) - leak_) * x(i) + leak_ * tanh(pre(i));
    return out;
  }

  /// u = A^{-1}(atanh((x_next - (1-a) x) / a) - alpha B x), the unique input
  /// mapping x to x_next.  Returns the full N-vector (padding included).
  Vec invert_input(const Vec& x, const Vec& x_next) const {
    require(x.size() == size() && x_next.size() == size(), "invert_input: state dimension mismatch");
    Vec arg(size());
    using std::abs;
    for (Index i = 0; i < size(); ++i) {
      const Scalar y = (x_next(i) - (Scalar(1) - leak_) * x(i)) / leak_;
      if (!(abs(y) < Scalar(1) - Scalar(kAtanhGuard))) {
        throw InversionDomainError(i, static_cast<double>(y));
      }
      arg(i) = detail::atanh_of(y);
    }
    Vec rhs = arg - alpha_ * (b_ * x);
    return lu_.solve(rhs);
  }

  template <class T>
  BasicReservoir<T> cast() const {
    return BasicReservoir<T>(a_.template cast<T>(), b_.template cast<T>(), T(leak_), T(alpha_), seed_);
  }

private:
  Mat a_;
  Mat b_;
  Scalar leak_;
  Scalar alpha_;
  std::uint64_t seed_;
  Eigen::PartialPivLU<Mat> lu_;
};

using Reservoir = BasicReservoir<double>;

/// States of a driven reservoir.  Row n of `states` is x_n, and
/// x_{n+1} = g(u_n, x_n) for every input row u_n, so there is one more state
/// than inputs.  The first `washout` + 1 states are transient.
struct StateTrajectory {
  Matrix states;
  TimeSeries inputs;
  std::size_t washout = 0;

  Index length() const { return states.rows(); }
  Vector state(Index n) const { return states.row(n).transpose(); }
  /// Rows washout..end.
  Matrix post_washout() const { return states.bottomRows(states.rows() - static_cast<Index>(washout)); }
};

struct BuildOptions {
  double power_tol = 1e-10;
  int power_max_iter = 10000;
  double min_rcond = 1e-12;
  int max_draws = 100;
};

/// Draws A and B with i.i.d. uniform(-1,1) entries, rescales B to unit
/// spectral radius and redraws while either matrix is numerically singular.
Reservoir build(Index n, double leak, double alpha, std::uint64_t seed, const BuildOptions& opt = {});

/// (v_1, ..., v_K, 0, ..., 0).
Vector pad_input(const Vector& v, Index n);

/// Drives the reservoir from x0 through every input row.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> drive_states(
    const BasicReservoir<Scalar>& r, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0) {
  using Vec = typename BasicReservoir<Scalar>::Vec;
  require(x0.size() == r.size(), "drive: x0 dimension mismatch");
  require(inputs.cols() <= r.size(), "drive: input dimension exceeds N");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> states(inputs.rows() + 1, r.size());
  Vec x = x0;
  states.row(0) = x.transpose();
  for (Index n = 0; n < inputs.rows(); ++n) {
    Vec u = inputs.row(n).transpose();
    x = r.step(u, x);
    states.row(n + 1) = x.transpose();
  }
  return states;
}

StateTrajectory drive(const Reservoir& r, const TimeSeries& inputs, std::size_t washout, const Vector& x0);

/// Convenience overload starting from the zero state.
StateTrajectory drive(const Reservoir& r, const TimeSeries& inputs, std::size_t washout);

struct UspReport {
  bool converged = false;
  std::vector<double> gap_curve;  ///< gap_curve[n]: max over pairs of sup-norm state gap at step n
};

/// Drives `n_pairs` pairs of random initial states with identical inputs.
UspReport verify_usp(const Reservoir& r, const TimeSeries& inputs, std::size_t n_pairs, double tol,
                     std::uint64_t seed = 1);

struct SiReport {
  bool passed = false;
  double max_error = 0.0;  ///< sup-norm round-trip error (infinity when inversion failed)
  explicit operator bool() const { return passed; }
};

/// Random round trips u -> step -> invert_input.  Inputs alternate between
/// a low-dimensional padded vector (K = min(3, N), entries in [-1,1]) and a
/// full N-vector with entries in [-1,1]/sqrt(N); states are uniform in
/// [-1,1]^N.
SiReport verify_si(const Reservoir& r, std::size_t trials, double tol, std::uint64_t seed = 2);

std::string serialize(const Reservoir& r, const std::string& config_hash = {});
Reservoir deserialize_reservoir(const std::string& text);

}  // namespace rcn
