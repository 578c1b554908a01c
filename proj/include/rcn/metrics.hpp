#pragma once

// Long-term consistency diagnostics.

#include "rcn/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rcn {

struct DensityEstimate {
  std::vector<double> bin_edges;  ///< bins + 1 monotone edges
  std::vector<double> mass;       ///< sums to 1
  double bandwidth = 0.0;         ///< Gaussian smoothing width in bins

  std::size_t bins() const { return mass.size(); }
  double center(std::size_t i) const { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }
};

/// Equal-width histogram over the sample range, smoothed by a Gaussian
/// kernel of `bandwidth` bins and renormalized.
DensityEstimate estimate_density(const Vector& samples, std::size_t bins, double bandwidth);

/// Same on the fixed range [lo, hi]; samples outside are counted in the
/// nearest edge bin so that escaping mass still shows up in comparisons.
DensityEstimate estimate_density(const Vector& samples, std::size_t bins, double bandwidth, double lo, double hi);

/// L1 distance sum |p_i - q_i| in [0, 2].  Bins must match.
double density_distance(const DensityEstimate& p, const DensityEstimate& q);

/// Two-column CSV `bin_center,mass`.
std::string density_csv(const DensityEstimate& d, const std::string& comment = {});

/// RV coefficient trace(Sxy Syx) / sqrt(trace(Sxx^2) trace(Syy^2)) of the
/// sample cross-covariances (rows are paired samples).
double rv_coefficient(const Matrix& in, const Matrix& out);

/// rv_coefficient of (x_{n-1}, x_n) against (x_n, x_{n+1}) over the rows of
/// a state matrix.
double lag_pair_rv(const Matrix& states);

struct LaminarStats {
  std::size_t count = 0;
  double mean = 0.0;
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};

/// Laminar phases are runs of at least `min_len` consecutive steps with
/// |s_{n+lag} - s_n| < tol; everything else is burst.  A lag equal to the
/// period of the ghost orbit detects period-p laminar phases.
LaminarStats laminar_stats(const Vector& series, double tol, std::size_t min_len, std::size_t lag = 1);

struct InjectivityResult {
  double ratio = 0.0;   ///< fraction of state neighbours whose histories are also close
  double chance = 0.0;  ///< fraction of all pairs whose histories are that close
  std::size_t neighbor_pairs = 0;
  double modulus = 0.0;      ///< fitted history/state distance ratio
  double eps_history = 0.0;  ///< history tolerance implied by eps_state
};

struct InjectivityOptions {
  double modulus_quantile = 0.9;
  double slack = 2.0;
  std::size_t max_points = 2000;  ///< points are strided down to at most this many
};

/// Neighbour test for the map from input histories to state pairs.  Point n
/// is E_n = (x_{n-1}, x_n) with history H_n = (w_{n-k_past}, ..., w_{n-1});
/// distances are RMS per coordinate.  Pairs closer than k_past + 1 in time
/// are ignored.  The history tolerance is slack * modulus * eps_state, where
/// the modulus is the `modulus_quantile` quantile of d_H / d_E over pairs
/// that are not state neighbours.  Row n of `states` is x_n and row j of
/// `truth` is w_j.
InjectivityResult injectivity_test(const Matrix& states, const Matrix& truth, std::size_t k_past, double eps_state,
                                   const InjectivityOptions& opt = {});

/// q-quantile (linear interpolation) of the RMS distances between state
/// pairs E_n used by injectivity_test; handy for choosing eps_state.
double state_pair_distance_quantile(const Matrix& states, double q, std::size_t max_points = 2000);

struct EvalReport {
  std::size_t valid_time = 0;
  double density_distance = 0.0;  ///< worst coordinate
  bool bounded = false;
  std::optional<double> rv_coefficient;
  std::optional<LaminarStats> laminar;
  std::optional<LaminarStats> laminar_truth;
  std::optional<double> injectivity_ratio;
  std::map<std::string, double> extra;  ///< per-coordinate distances and other scalars
  std::string config_hash;
};

/// Flat `key = value` text.
std::string to_text(const EvalReport& r);
EvalReport eval_report_from_text(const std::string& text);

/// Linear-interpolation quantile of a copy of `v`.
double quantile(std::vector<double> v, double q);

}  // namespace rcn
