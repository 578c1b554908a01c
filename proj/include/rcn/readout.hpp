#pragma once

// Learning Gamma: (x_{n-1}, x_n) -> u_n from a driven trajectory.

#include "rcn/common.hpp"
#include "rcn/reservoir.hpp"
#include "rcn/systems.hpp"

#include <string>
#include <vector>

namespace rcn {

enum class TargetKind { next_input, full_state };
enum class Activation { linear, tanh, relu };

std::string to_string(TargetKind k);
TargetKind target_kind_from_string(const std::string& s);
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Right singular vectors of the (optionally centered) state matrix.  All N
/// components are kept, so projection is an orthogonal change of basis.
struct PcaBasis {
  Matrix P;                ///< N x N, columns are principal directions
  Vector singular_values;  ///< nonincreasing
  Vector col_means;        ///< empty when not centered

  Index dim() const { return P.rows(); }
  bool centered() const { return col_means.size() > 0; }
};

PcaBasis fit_pca(const Matrix& rows, bool center = true);
/// Uses the post-washout states of the trajectory.
PcaBasis fit_pca(const StateTrajectory& states, bool center = true);

/// P^T (x - mean).
Vector project(const PcaBasis& basis, const Vector& x);
Vector unproject(const PcaBasis& basis, const Vector& z);
/// Row-wise projection of a state matrix.
Matrix project_rows(const PcaBasis& basis, const Matrix& rows);

/// Training pairs.  Row i of `features` is (z_{n-1}, z_n) for time n =
/// `times[i]`, and row i of `targets` is u_n (next_input) or scale * w_n
/// (full_state).
struct Dataset {
  Matrix features;
  Matrix targets;
  std::vector<Index> times;

  Index size() const { return features.rows(); }
};

/// Pairs (x_{n-1}, x_n) -> target_n for every n > washout that has both a
/// state and a target.  For next_input the target series is normally the
/// driving input itself; full_state uses its hidden truth.
Dataset make_dataset(const StateTrajectory& states, const PcaBasis& basis, const TimeSeries& targets,
                     TargetKind kind, double target_scale = 1.0);

struct Layer {
  Matrix weights;  ///< out x in
  Vector bias;
  Activation activation = Activation::linear;
};

struct Architecture {
  std::vector<Index> hidden{128, 128};
  Activation hidden_activation = Activation::tanh;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  double weight_decay = 0.0;
  /// Trailing fraction of pairs reported as validation; they stay in training.
  double validation_fraction = 0.1;
};

/// Feed-forward network with a linear output layer.
class Regressor {
public:
  Regressor() = default;
  explicit Regressor(std::vector<Layer> layers);

  /// Glorot-uniform weights, zero biases.
  static Regressor initialize(Index in, Index out, const Architecture& arch, std::uint64_t seed);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Index input_dim() const;
  Index output_dim() const;

  Vector predict(const Vector& x) const;
  /// Rows of `x` are samples.
  Matrix predict_rows(const Matrix& x) const;

  /// Mean over samples and outputs of the squared error.
  double mse(const Matrix& x, const Matrix& y) const;

  Index parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& theta);
  /// Gradient of mse(x, y) with respect to parameters(), by backpropagation.
  Vector mse_gradient(const Matrix& x, const Matrix& y) const;

  std::vector<double> training_log;  ///< mean batch loss per epoch
  double train_mse = 0.0;
  double validation_mse = 0.0;
  /// True when the 10-epoch moving average of training_log never increased
  /// by more than 1% (advisory only).
  bool smoothed_monotone = true;

private:
  std::vector<Layer> layers_;
};

Regressor train_regressor(const Dataset& data, const Architecture& arch, const AdamConfig& opt,
                          std::uint64_t seed);

/// Closed-form ridge on (z_{n-1}, z_n, 1): (G^T G + lambda I) W = G^T Y.
/// Throws Error when the normal matrix is singular.
Regressor fit_ridge(const Dataset& data, double lambda);

/// ||G W - Y||_F^2 + lambda ||W||_F^2 for a single-layer linear regressor.
double ridge_objective(const Regressor& reg, const Dataset& data, double lambda);

struct ReadoutModel {
  PcaBasis basis;
  Regressor regressor;
  TargetKind target_kind = TargetKind::next_input;
  double target_scale = 1.0;
  Vector target_lo;  ///< componentwise bounding box of the training targets
  Vector target_hi;
};

ReadoutModel make_model(PcaBasis basis, Regressor regressor, const Dataset& data, TargetKind kind,
                        double target_scale);

/// Gamma(x_prev, x_cur) = NN(P^T x_prev, P^T x_cur).
Vector apply_gamma(const ReadoutModel& model, const Vector& x_prev, const Vector& x_cur);
/// Same map on already projected states.
Vector apply_gamma_projected(const ReadoutModel& model, const Vector& z_prev, const Vector& z_cur);

std::string serialize(const ReadoutModel& model, const std::string& config_hash = {});
ReadoutModel deserialize_model(const std::string& text);

}  // namespace rcn
