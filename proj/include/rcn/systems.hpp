#pragma once

// Benchmark dynamical systems and observation models.

#include "rcn/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rcn {

enum class SystemKind { lorenz, logistic, henon_intermittent, pomeau_manneville };

std::string to_string(SystemKind k);
SystemKind system_kind_from_string(const std::string& s);

struct SystemSpec {
  SystemKind kind = SystemKind::lorenz;
  /// Named model parameters.  Missing names fall back to the defaults of
  /// `default_parameters(kind)`.
  std::map<std::string, double> parameters;
  double dt = 0.1;  ///< sampling interval, lorenz only
  std::size_t substeps = 10;  ///< RK4 steps per sample, lorenz only
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;  ///< used only when initial_state is empty
  std::vector<double> initial_state;
  std::size_t transient_discard = 0;

  double param(const std::string& name) const;
  /// Throws PreconditionError when an invariant is violated.
  void validate() const;
};

/// lorenz: sigma=10 rho=28 beta=8/3; logistic: r=4;
/// henon_intermittent: a=1.2265 b=0.3; pomeau_manneville: z=0.9.
std::map<std::string, double> default_parameters(SystemKind kind);
std::size_t state_dimension(SystemKind kind);

enum class ObservationMode { identity_scaled, scalar_sin, delay_coords };

std::string to_string(ObservationMode m);
ObservationMode observation_mode_from_string(const std::string& s);

struct ObservationSpec {
  ObservationMode mode = ObservationMode::identity_scaled;
  double scale = 1.0;
  double gamma = 0.0;  ///< scalar_sin; for delay_coords a nonzero gamma selects the sin observable
  std::size_t delay_2d = 0;  ///< delay_coords: half window d, vectors have 2d+1 entries
  double noise_sigma = 0.0;
  bool mean_subtract = false;

  void validate() const;
};

struct TimeSeries {
  Matrix values;  ///< rows are samples, columns the K components
  std::optional<double> dt;
  std::optional<SystemSpec> system;
  std::optional<ObservationSpec> observation;
  /// Offset removed by mean subtraction (one entry per observed channel);
  /// empty when no mean was subtracted.
  Vector offset;
  std::optional<Matrix> hidden_truth;  ///< underlying states w_n, row-aligned with values

  Index length() const { return values.rows(); }
  Index dim() const { return values.cols(); }
  Vector row(Index n) const { return values.row(n).transpose(); }
};

/// Trajectory of the named system after the transient discard.  Lorenz is
/// integrated with fixed-step RK4 (`substeps` internal steps per sample).
/// Throws DivergenceError when a state becomes non-finite or, for Lorenz,
/// leaves the ball |w| < 100.
TimeSeries generate(const SystemSpec& spec);

/// Applies an observation function and additive Gaussian noise.
TimeSeries observe(const TimeSeries& ts, const ObservationSpec& obs, std::uint64_t seed);

/// 10 log10(total variance / (K sigma^2)).
double snr_db(const TimeSeries& signal, double noise_sigma);

/// CSV with header `t,u1,...,uK[,w1,...,wM]`.  Lines starting with '#' are
/// comments; `comment` (if nonempty) is written as the first line.
std::string to_csv(const TimeSeries& ts, const std::string& comment = {});
TimeSeries from_csv(const std::string& text);

/// Extracts `# key: value` comment lines from a CSV document.
std::map<std::string, std::string> csv_comments(const std::string& text);

}  // namespace rcn
