#pragma once

// Closed-loop dynamics of the reservoir coupled to a learned Gamma:
//   x_{k+1} = g(u_k, x_k),  u_{k+1} = Gamma(x_k, x_{k+1}).

#include "rcn/common.hpp"
#include "rcn/readout.hpp"
#include "rcn/reservoir.hpp"
#include "rcn/systems.hpp"

#include <optional>
#include <string>

namespace rcn {

struct ForecastRun {
  Vector u0;
  Vector x0;
  std::size_t horizon = 0;
  Matrix predicted;  ///< horizon x K, rows u_1 .. u_horizon
  Matrix states;     ///< (horizon + 1) x N, rows x_0 .. x_horizon; empty unless recorded
};

struct ForecastOptions {
  /// Abort once a predicted input leaves the training-target box, inflated
  /// about its centre by this factor.  Zero disables the check.
  double escape_factor = 10.0;
  bool record_states = true;
};

/// Raised when the closed loop leaves the inflated training box.
class EscapeError : public DivergenceError {
public:
  using DivergenceError::DivergenceError;
};

/// Generic closed loop for any Gamma(x_prev, x_cur) and scalar type.  Returns
/// (predicted, states); states is empty unless `record_states`.
template <class Scalar, class GammaFn>
std::pair<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>
closed_loop_with(const BasicReservoir<Scalar>& r, GammaFn&& gamma,
                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u0,
                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0, std::size_t horizon,
                 bool record_states = true) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require(x0.size() == r.size(), "closed_loop: x0 dimension mismatch");
  const Index h = static_cast<Index>(horizon);
  Mat predicted(h, u0.size());
  Mat states;
  if (record_states) {
    states.resize(h + 1, r.size());
    states.row(0) = x0.transpose();
  }
  Vec x = x0;
  Vec u = u0;
  for (Index k = 0; k < h; ++k) {
    Vec next = r.step(u, x);
    u = gamma(x, next);
    if (u.size() != u0.size() || !detail::all_finite<Scalar>(u) || !detail::all_finite<Scalar>(next))
      throw DivergenceError("closed_loop: non-finite input or state", static_cast<std::size_t>(k + 1));
    predicted.row(k) = u.transpose();
    if (record_states) states.row(k + 1) = next.transpose();
    x = std::move(next);
  }
  return {std::move(predicted), std::move(states)};
}

/// Closed loop with a trained next-input model.  `u0` is the last observed
/// input and `x0` the state it was applied to.
ForecastRun closed_loop(const Reservoir& r, const ReadoutModel& model, const Vector& u0, const Vector& x0,
                        std::size_t horizon, const ForecastOptions& opt = {});

/// w_hat_n = Gamma_full(x_{n-1}, x_n) / target_scale for every consecutive
/// pair of state rows; the output has one row fewer than `states`.
TimeSeries reconstruct_full(const Reservoir& r, const ReadoutModel& model_full, const Matrix& states);

/// Rows (s_{n-2d}, ..., s_n) of a scalar series, aligned to the latest lag.
TimeSeries delay_embed(const TimeSeries& series, std::size_t d);

/// First step whose error |u_hat - u| exceeds threshold * rms(truth), where
/// rms is the root-mean-square deviation of the truth from its mean.  Returns
/// the length when never exceeded.
std::size_t valid_time(const Matrix& predicted, const Matrix& truth, double threshold);

/// Forecast CSV: the series schema plus a trailing `phase` column
/// (`warmup` rows first, then `forecast`).  `truth_forecast`, when given,
/// supplies w columns for the forecast rows (requires warmup hidden truth).
std::string forecast_csv(const TimeSeries& warmup, const Matrix& predicted,
                         const std::optional<Matrix>& truth_forecast = std::nullopt,
                         const std::string& comment = {});

struct ForecastCsv {
  TimeSeries warmup;
  TimeSeries forecast;
};
ForecastCsv read_forecast_csv(const std::string& text);

}  // namespace rcn
