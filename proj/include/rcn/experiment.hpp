#pragma once

// Experiment configuration and the end-to-end pipeline
// generate -> observe -> drive -> train -> forecast -> evaluate.

#include "rcn/common.hpp"
#include "rcn/forecast.hpp"
#include "rcn/metrics.hpp"
#include "rcn/readout.hpp"
#include "rcn/reservoir.hpp"
#include "rcn/systems.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rcn {

enum class RegressorKind { mlp, ridge };

struct ReservoirConfig {
  Index n = 1000;
  double leak = 0.5;
  double alpha = 0.99;
  std::optional<std::uint64_t> seed;  ///< derived from the global seed when unset
};

struct TrainingConfig {
  std::size_t washout = 500;
  std::size_t n_train = 2000;  ///< training pairs after washout
  RegressorKind regressor = RegressorKind::mlp;
  Architecture architecture;
  AdamConfig optimizer;
  double ridge_lambda = 1e-6;
  bool center = true;
  /// Also fit Gamma_full: (x_{n-1}, x_n) -> full_scale * w_n.
  bool full_state = false;
  double full_scale = 0.01;
  std::size_t full_heldout = 1000;  ///< teacher-forced steps used to score Gamma_full
};

struct ForecastConfig {
  std::size_t horizon = 10000;
  double escape_factor = 10.0;
};

struct MetricsConfig {
  std::size_t bins = 50;
  double bandwidth = 2.0;
  double valid_threshold = 0.4;
  double bounded_factor = 1.5;
  /// Length of the clean continuation used as the density reference; the
  /// horizon is used when shorter.
  std::size_t reference_length = 0;
  double laminar_tol = 0.0;  ///< zero disables laminar statistics
  std::size_t laminar_min_len = 20;
  std::size_t laminar_lag = 1;
  std::size_t laminar_channel = 0;
  bool rv = true;
  bool injectivity = false;
  std::size_t k_past = 10;
  double eps_quantile = 0.01;
};

struct GateConfig {
  std::size_t usp_pairs = 2;
  double usp_tol = 1e-6;
  std::size_t si_trials = 100;
  double si_tol = 1e-8;
};

struct ExperimentConfig {
  std::string name = "experiment";
  SystemSpec system;
  ObservationSpec observation;
  ReservoirConfig reservoir;
  TrainingConfig training;
  ForecastConfig forecast;
  MetricsConfig metrics;
  GateConfig gates;
  std::string output_dir = "runs";
  std::uint64_t global_seed = 1;

  /// Throws PreconditionError with the offending key.
  void validate() const;
  /// Number of observed samples consumed by washout and training.
  std::size_t data_length() const { return training.washout + training.n_train + 1; }
};

/// Flat `key = value` lines, `#` comments.  Unknown keys are errors.
ExperimentConfig parse_config(const std::string& text);
/// Applies `key = value` overrides on top of an existing config.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// Canonical text: every key, sorted, one per line.
std::string to_text(const ExperimentConfig& cfg);
/// Hex FNV-1a of the canonical text without output_dir.
std::string config_hash(const ExperimentConfig& cfg);

/// Shipped recipes: lorenz, lorenz_sine, logistic, henon, pomeau.
std::vector<std::string> recipe_names();
/// Annotated recipe file contents.
std::string recipe_text(const std::string& name);
ExperimentConfig recipe(const std::string& name);

/// Observed data for a run: noisy observations for washout + training, the
/// clean continuation for scoring, and the generating series.
struct ExperimentData {
  TimeSeries observed;  ///< noisy, all generated samples
  TimeSeries clean;     ///< noise-free observation of the same samples
  std::size_t train_length = 0;  ///< observed rows used for drive and training
};

ExperimentData make_data(const ExperimentConfig& cfg);
Reservoir make_reservoir(const ExperimentConfig& cfg);

struct GateResult {
  UspReport usp;
  SiReport si;
};
GateResult run_gates(const ExperimentConfig& cfg, const Reservoir& r, const TimeSeries& inputs);

struct TrainedModels {
  StateTrajectory trajectory;  ///< teacher-forced over the training inputs
  ReadoutModel gamma;
  std::optional<ReadoutModel> gamma_full;
};
TrainedModels train_models(const ExperimentConfig& cfg, const Reservoir& r, const TimeSeries& train_inputs);

/// Teacher-forced warmup seed (u_{L-1}, x_{L-1}) followed by the closed loop.
ForecastRun run_forecast(const ExperimentConfig& cfg, const Reservoir& r, const TrainedModels& m,
                         const TimeSeries& train_inputs);

struct Densities {
  std::vector<DensityEstimate> forecast;
  std::vector<DensityEstimate> truth;
};

/// Metrics of a forecast against the clean continuation `truth` (at least
/// horizon rows).  `train_inputs` define the bounding box.
EvalReport evaluate(const ExperimentConfig& cfg, const Matrix& predicted, const Matrix& truth,
                    const Matrix& train_inputs, Densities* densities = nullptr);

struct PipelineResult {
  EvalReport report;
  std::string output_dir;
  GateResult gates;
};

using Logger = std::function<void(const std::string&)>;

/// Full chain with artifacts written to cfg.output_dir.  Errors carry the
/// name of the failing stage.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const Logger& log = {});

}  // namespace rcn
