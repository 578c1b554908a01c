#include "rcn/readout.hpp"

#include "rcn/textio.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rcn {

std::string to_string(TargetKind k) { return k == TargetKind::next_input ? "next_input" : "full_state"; }

TargetKind target_kind_from_string(const std::string& s) {
  if (s == "next_input") return TargetKind::next_input;
  if (s == "full_state") return TargetKind::full_state;
  throw PreconditionError("unknown target kind '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw PreconditionError("unknown activation '" + s + "'");
}

// ---------------------------------------------------------------------------
// PCA

PcaBasis fit_pca(const Matrix& rows, bool center) {
  require(rows.rows() >= rows.cols(), "fit_pca: need at least N state rows");
  require(rows.cols() > 0, "fit_pca: empty states");
  Matrix x = rows;
  PcaBasis basis;
  if (center) {
    basis.col_means = x.colwise().mean().transpose();
    x.rowwise() -= basis.col_means.transpose();
  }
  const Matrix spread = rows.rowwise() - rows.row(0);
  if (spread.cwiseAbs().maxCoeff() == 0.0) throw Error("fit_pca: all states are identical");
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinV);
  basis.P = svd.matrixV();
  basis.singular_values = svd.singularValues();
  return basis;
}

PcaBasis fit_pca(const StateTrajectory& states, bool center) {
  return fit_pca(states.post_washout(), center);
}

Vector project(const PcaBasis& basis, const Vector& x) {
  require(x.size() == basis.dim(), "project: dimension mismatch");
  if (basis.centered()) return basis.P.transpose() * (x - basis.col_means);
  return basis.P.transpose() * x;
}

Vector unproject(const PcaBasis& basis, const Vector& z) {
  require(z.size() == basis.dim(), "unproject: dimension mismatch");
  Vector x = basis.P * z;
  if (basis.centered()) x += basis.col_means;
  return x;
}

Matrix project_rows(const PcaBasis& basis, const Matrix& rows) {
  require(rows.cols() == basis.dim(), "project_rows: dimension mismatch");
  if (basis.centered()) return (rows.rowwise() - basis.col_means.transpose()) * basis.P;
  return rows * basis.P;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset make_dataset(const StateTrajectory& states, const PcaBasis& basis, const TimeSeries& targets,
                     TargetKind kind, double target_scale) {
  const Index s = states.length();
  const Index t = targets.length();
  // Either one target per driven input (t = s - 1) or one per state (t = s).
  if (t != s && t != s - 1)
    throw Error("make_dataset: " + std::to_string(t) + " targets do not align with " + std::to_string(s) +
                " states");
  const Matrix* y = &targets.values;
  if (kind == TargetKind::full_state) {
    if (!targets.hidden_truth) throw PreconditionError("make_dataset: full_state targets need hidden truth");
    y = &*targets.hidden_truth;
  }
  const Index first = static_cast<Index>(states.washout) + 1;
  const Index last = std::min(s - 1, t - 1);
  require(last - first + 1 >= 1, "make_dataset: post-washout length too short");
  const Index m = last - first + 1;
  const Index n = basis.dim();

  Matrix z = project_rows(basis, states.states.middleRows(first - 1, m + 1));
  Dataset d;
  d.features.resize(m, 2 * n);
  d.features.leftCols(n) = z.topRows(m);
  d.features.rightCols(n) = z.bottomRows(m);
  d.targets = y->middleRows(first, m);
  if (kind == TargetKind::full_state) d.targets *= target_scale;
  d.times.resize(static_cast<std::size_t>(m));
  std::iota(d.times.begin(), d.times.end(), first);
  return d;
}

// ---------------------------------------------------------------------------
// Regressor

namespace {

void activate(Matrix& z, Activation a) {
  switch (a) {
    case Activation::linear: break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
  }
}

// Derivative expressed through the activation output.
void scale_by_derivative(Matrix& delta, const Matrix& out, Activation a) {
  switch (a) {
    case Activation::linear: break;
    case Activation::tanh: delta.array() *= 1.0 - out.array().square(); break;
    case Activation::relu: delta.array() *= (out.array() > 0.0).cast<double>(); break;
  }
}

// Forward pass on column samples; returns activations a_0..a_L.
std::vector<Matrix> forward(const std::vector<Layer>& layers, const Matrix& x_cols) {
  std::vector<Matrix> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(x_cols);
  for (const auto& l : layers) {
    Matrix z = l.weights * acts.back();
    z.colwise() += l.bias;
    activate(z, l.activation);
    acts.push_back(std::move(z));
  }
  return acts;
}

// Fills `grads` (same shapes as layers) with d mse / d theta; returns mse.
double backprop(const std::vector<Layer>& layers, const Matrix& x_cols, const Matrix& y_cols,
                std::vector<Layer>& grads) {
  auto acts = forward(layers, x_cols);
  Matrix delta = acts.back() - y_cols;
  const double count = static_cast<double>(y_cols.size());
  const double loss = delta.squaredNorm() / count;
  delta *= 2.0 / count;
  grads.resize(layers.size());
  for (std::size_t i = layers.size(); i-- > 0;) {
    scale_by_derivative(delta, acts[i + 1], layers[i].activation);
    grads[i].weights.noalias() = delta * acts[i].transpose();
    grads[i].bias = delta.rowwise().sum();
    grads[i].activation = layers[i].activation;
    if (i > 0) delta = layers[i].weights.transpose() * delta;
  }
  return loss;
}

}  // namespace

Regressor::Regressor(std::vector<Layer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), "Regressor: needs at least one layer");
  for (std::size_t i = 1; i < layers_.size(); ++i)
    require(layers_[i].weights.cols() == layers_[i - 1].weights.rows(), "Regressor: layer widths disagree");
}

Regressor Regressor::initialize(Index in, Index out, const Architecture& arch, std::uint64_t seed) {
  require(in > 0 && out > 0, "Regressor: widths must be positive");
  Rng rng(seed);
  std::vector<Layer> layers;
  Index prev = in;
  auto make = [&](Index width, Activation act) {
    const double limit = std::sqrt(6.0 / static_cast<double>(prev + width));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer l;
    l.weights = Matrix::NullaryExpr(width, prev, [&]() { return dist(rng); });
    l.bias = Vector::Zero(width);
    l.activation = act;
    layers.push_back(std::move(l));
    prev = width;
  };
  for (Index w : arch.hidden) {
    require(w > 0, "Regressor: hidden widths must be positive");
    make(w, arch.hidden_activation);
  }
  make(out, Activation::linear);
  return Regressor(std::move(layers));
}

Index Regressor::input_dim() const { return layers_.empty() ? 0 : layers_.front().weights.cols(); }
Index Regressor::output_dim() const { return layers_.empty() ? 0 : layers_.back().weights.rows(); }

Vector Regressor::predict(const Vector& x) const {
  require(x.size() == input_dim(), "Regressor: input dimension mismatch");
  Vector a = x;
  for (const auto& l : layers_) {
    Vector z = l.weights * a + l.bias;
    switch (l.activation) {
      case Activation::linear: break;
      case Activation::tanh: z = z.array().tanh().matrix(); break;
      case Activation::relu: z = z.cwiseMax(0.0); break;
    }
    a = std::move(z);
  }
  return a;
}

Matrix Regressor::predict_rows(const Matrix& x) const {
  require(x.cols() == input_dim(), "Regressor: input dimension mismatch");
  return forward(layers_, x.transpose()).back().transpose();
}

double Regressor::mse(const Matrix& x, const Matrix& y) const {
  return (predict_rows(x) - y).squaredNorm() / static_cast<double>(y.size());
}

Index Regressor::parameter_count() const {
  Index n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

Vector Regressor::parameters() const {
  Vector theta(parameter_count());
  Index k = 0;
  for (const auto& l : layers_) {
    theta.segment(k, l.weights.size()) = Eigen::Map<const Vector>(l.weights.data(), l.weights.size());
    k += l.weights.size();
    theta.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return theta;
}

void Regressor::set_parameters(const Vector& theta) {
  require(theta.size() == parameter_count(), "set_parameters: size mismatch");
  Index k = 0;
  for (auto& l : layers_) {
    Eigen::Map<Vector>(l.weights.data(), l.weights.size()) = theta.segment(k, l.weights.size());
    k += l.weights.size();
    l.bias = theta.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

Vector Regressor::mse_gradient(const Matrix& x, const Matrix& y) const {
  std::vector<Layer> grads;
  backprop(layers_, x.transpose(), y.transpose(), grads);
  Regressor g(std::move(grads));
  return g.parameters();
}

Regressor train_regressor(const Dataset& data, const Architecture& arch, const AdamConfig& opt,
                          std::uint64_t seed) {
  require(data.size() >= 1, "train_regressor: empty dataset");
  require(data.features.rows() == data.targets.rows(), "train_regressor: features/targets disagree");
  require(opt.batch_size >= 1 && opt.epochs >= 1, "train_regressor: batch size and epochs must be positive");
  require(opt.learning_rate > 0.0, "train_regressor: learning rate must be positive");

  Regressor reg = Regressor::initialize(data.features.cols(), data.targets.cols(), arch, seed);
  auto& layers = reg.layers();

  const Matrix xt = data.features.transpose();
  const Matrix yt = data.targets.transpose();
  const Index m = data.size();

  std::vector<Layer> m1(layers.size()), m2(layers.size()), grads;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    m1[i].weights = Matrix::Zero(layers[i].weights.rows(), layers[i].weights.cols());
    m1[i].bias = Vector::Zero(layers[i].bias.size());
    m2[i] = m1[i];
  }

  Rng rng(mix64(seed ^ 0xa5a5a5a5ULL));
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  Matrix xb, yb;
  double b1t = 1.0, b2t = 1.0;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Index start = 0; start < m; start += static_cast<Index>(opt.batch_size)) {
      const Index bs = std::min<Index>(static_cast<Index>(opt.batch_size), m - start);
      xb.resize(xt.rows(), bs);
      yb.resize(yt.rows(), bs);
      for (Index j = 0; j < bs; ++j) {
        const Index src = order[static_cast<std::size_t>(start + j)];
        xb.col(j) = xt.col(src);
        yb.col(j) = yt.col(src);
      }
      const double loss = backprop(layers, xb, yb, grads);
      if (!std::isfinite(loss))
        throw DivergenceError("train_regressor: non-finite loss in epoch " + std::to_string(epoch + 1), epoch + 1);
      epoch_loss += loss * static_cast<double>(bs);

      b1t *= opt.beta1;
      b2t *= opt.beta2;
      const double c1 = 1.0 / (1.0 - b1t);
      const double c2 = 1.0 / (1.0 - b2t);
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (opt.weight_decay > 0.0) grads[i].weights += opt.weight_decay * layers[i].weights;
        auto update = [&](auto& param, auto& mom, auto& vel, const auto& g) {
          mom = opt.beta1 * mom + (1.0 - opt.beta1) * g;
          vel = opt.beta2 * vel + (1.0 - opt.beta2) * g.cwiseProduct(g);
          param.array() -= opt.learning_rate * (mom.array() * c1) / ((vel.array() * c2).sqrt() + opt.epsilon);
        };
        update(layers[i].weights, m1[i].weights, m2[i].weights, grads[i].weights);
        update(layers[i].bias, m1[i].bias, m2[i].bias, grads[i].bias);
      }
    }
    reg.training_log.push_back(epoch_loss / static_cast<double>(m));
  }

  reg.train_mse = reg.mse(data.features, data.targets);
  if (!std::isfinite(reg.train_mse)) throw DivergenceError("train_regressor: non-finite final loss", opt.epochs);
  const Index n_val = static_cast<Index>(std::floor(opt.validation_fraction * static_cast<double>(m)));
  if (n_val > 0) reg.validation_mse = reg.mse(data.features.bottomRows(n_val), data.targets.bottomRows(n_val));

  const auto& log = reg.training_log;
  if (log.size() >= 20) {
    double prev = std::accumulate(log.begin(), log.begin() + 10, 0.0) / 10.0;
    for (std::size_t i = 1; i + 10 <= log.size(); ++i) {
      const double cur = std::accumulate(log.begin() + static_cast<long>(i), log.begin() + static_cast<long>(i + 10), 0.0) / 10.0;
      if (cur > prev * 1.01) reg.smoothed_monotone = false;
      prev = std::min(prev, cur);
    }
  }
  return reg;
}

Regressor fit_ridge(const Dataset& data, double lambda) {
  require(lambda >= 0.0, "fit_ridge: lambda must be nonnegative");
  require(data.size() >= 1, "fit_ridge: empty dataset");
  const Index m = data.size();
  const Index p = data.features.cols();
  Matrix g(m, p + 1);
  g.leftCols(p) = data.features;
  g.col(p).setOnes();
  Matrix normal = g.transpose() * g;
  normal.diagonal().array() += lambda;
  const Matrix rhs = g.transpose() * data.targets;

  Eigen::LDLT<Matrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-15))
    throw Error("fit_ridge: normal matrix is singular (lambda = " + textio::format_double(lambda) + ")");
  Matrix w = ldlt.solve(rhs);
  w += ldlt.solve(rhs - normal * w);  // one step of iterative refinement

  Layer l;
  l.weights = w.topRows(p).transpose();
  l.bias = w.row(p).transpose();
  l.activation = Activation::linear;
  Regressor reg({l});
  reg.train_mse = reg.mse(data.features, data.targets);
  return reg;
}

double ridge_objective(const Regressor& reg, const Dataset& data, double lambda) {
  require(reg.layers().size() == 1 && reg.layers()[0].activation == Activation::linear,
          "ridge_objective: regressor must be a single linear layer");
  const Layer& l = reg.layers()[0];
  const double residual = (reg.predict_rows(data.features) - data.targets).squaredNorm();
  return residual + lambda * (l.weights.squaredNorm() + l.bias.squaredNorm());
}

// ---------------------------------------------------------------------------
// Model

ReadoutModel make_model(PcaBasis basis, Regressor regressor, const Dataset& data, TargetKind kind,
                        double target_scale) {
  require(regressor.input_dim() == 2 * basis.dim(), "make_model: regressor input width must be 2N");
  require(regressor.output_dim() == data.targets.cols(), "make_model: regressor output width mismatch");
  ReadoutModel model;
  model.basis = std::move(basis);
  model.regressor = std::move(regressor);
  model.target_kind = kind;
  model.target_scale = target_scale;
  model.target_lo = data.targets.colwise().minCoeff().transpose();
  model.target_hi = data.targets.colwise().maxCoeff().transpose();
  return model;
}

Vector apply_gamma_projected(const ReadoutModel& model, const Vector& z_prev, const Vector& z_cur) {
  const Index n = model.basis.dim();
  require(z_prev.size() == n && z_cur.size() == n, "apply_gamma: dimension mismatch");
  Vector f(2 * n);
  f.head(n) = z_prev;
  f.tail(n) = z_cur;
  return model.regressor.predict(f);
}

Vector apply_gamma(const ReadoutModel& model, const Vector& x_prev, const Vector& x_cur) {
  return apply_gamma_projected(model, project(model.basis, x_prev), project(model.basis, x_cur));
}

std::string serialize(const ReadoutModel& model, const std::string& config_hash) {
  std::ostringstream os;
  os << "rcn-model 1\n";
  if (!config_hash.empty()) os << "config_hash " << config_hash << '\n';
  os << "target_kind " << to_string(model.target_kind) << '\n';
  os << "target_scale " << textio::format_double(model.target_scale) << '\n';
  const Index n = model.basis.dim();
  os << "N " << n << '\n';
  os << "P\n";
  textio::write_matrix(os, model.basis.P);
  os << "singular_values\n";
  textio::write_matrix(os, model.basis.singular_values.transpose());
  if (model.basis.centered()) {
    os << "col_means\n";
    textio::write_matrix(os, model.basis.col_means.transpose());
  }
  os << "target_box " << model.target_lo.size() << '\n';
  textio::write_matrix(os, model.target_lo.transpose());
  textio::write_matrix(os, model.target_hi.transpose());
  os << "layers " << model.regressor.layers().size() << '\n';
  for (const auto& l : model.regressor.layers()) {
    os << "layer " << l.weights.rows() << ' ' << l.weights.cols() << ' ' << to_string(l.activation) << '\n';
    textio::write_matrix(os, l.weights);
    textio::write_matrix(os, l.bias.transpose());
  }
  os << "train_mse " << textio::format_double(model.regressor.train_mse) << '\n';
  os << "validation_mse " << textio::format_double(model.regressor.validation_mse) << '\n';
  os << "training_log " << model.regressor.training_log.size() << '\n';
  for (double v : model.regressor.training_log) os << textio::format_double(v) << '\n';
  return os.str();
}

ReadoutModel deserialize_model(const std::string& text) {
  std::istringstream in(text);
  std::string tag, tok;
  int version = 0;
  in >> tag >> version;
  if (tag != "rcn-model" || version != 1) throw Error("not a model file (version 1)");
  ReadoutModel model;
  Index n = 0;
  std::vector<Layer> layers;
  double train_mse = 0, val_mse = 0;
  std::vector<double> log;
  std::string key;
  while (in >> key) {
    if (key == "config_hash") in >> tok;
    else if (key == "target_kind") { in >> tok; model.target_kind = target_kind_from_string(tok); }
    else if (key == "target_scale") { in >> tok; model.target_scale = textio::parse_double(tok); }
    else if (key == "N") in >> n;
    else if (key == "P") model.basis.P = textio::read_matrix(in, n, n);
    else if (key == "singular_values") model.basis.singular_values = textio::read_matrix(in, 1, n).transpose();
    else if (key == "col_means") model.basis.col_means = textio::read_matrix(in, 1, n).transpose();
    else if (key == "target_box") {
      Index k = 0;
      in >> k;
      model.target_lo = textio::read_matrix(in, 1, k).transpose();
      model.target_hi = textio::read_matrix(in, 1, k).transpose();
    } else if (key == "layers") {
      std::size_t count = 0;
      in >> count;
      for (std::size_t i = 0; i < count; ++i) {
        Index rows = 0, cols = 0;
        in >> tok >> rows >> cols;
        if (tok != "layer") throw Error("model file: expected 'layer'");
        std::string act;
        in >> act;
        Layer l;
        l.activation = activation_from_string(act);
        l.weights = textio::read_matrix(in, rows, cols);
        l.bias = textio::read_matrix(in, 1, rows).transpose();
        layers.push_back(std::move(l));
      }
    } else if (key == "train_mse") { in >> tok; train_mse = textio::parse_double(tok); }
    else if (key == "validation_mse") { in >> tok; val_mse = textio::parse_double(tok); }
    else if (key == "training_log") {
      std::size_t count = 0;
      in >> count;
      for (std::size_t i = 0; i < count; ++i) {
        in >> tok;
        log.push_back(textio::parse_double(tok));
      }
    } else {
      throw Error("model file: unknown key '" + key + "'");
    }
  }
  if (n <= 0 || model.basis.P.rows() != n || layers.empty()) throw Error("model file: incomplete");
  model.regressor = Regressor(std::move(layers));
  model.regressor.train_mse = train_mse;
  model.regressor.validation_mse = val_mse;
  model.regressor.training_log = std::move(log);
  return model;
}

}  // namespace rcn
