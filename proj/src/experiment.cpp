#include "rcn/experiment.hpp"

#include "rcn/plot.hpp"
#include "rcn/textio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace rcn {

// ---------------------------------------------------------------------------
// Config schema

namespace {

std::string fmt(double v) { return textio::format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long n = textio::parse_int(v);
  if (n < 0) throw PreconditionError("config: " + key + " must be >= 0");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw PreconditionError("config: " + key + " expects true or false, got '" + v + "'");
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  if (textio::trim(v).empty() || v == "none") return out;
  for (const auto& part : textio::split(v, ',')) out.push_back(textio::parse_double(textio::trim(part)));
  return out;
}

struct Field {
  const char* key;
  std::string (*get)(const ExperimentConfig&);
  void (*set)(ExperimentConfig&, const std::string&, const std::string&);
};

#define RCN_FIELD(KEY, GET, SET)                                                                   \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) -> std::string { return GET; },                             \
        [](ExperimentConfig& c, [[maybe_unused]] const std::string& k, const std::string& v) { SET; } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      RCN_FIELD("name", c.name, c.name = v),
      RCN_FIELD("global_seed", std::to_string(c.global_seed), c.global_seed = static_cast<std::uint64_t>(textio::parse_int(v))),
      RCN_FIELD("output_dir", c.output_dir, c.output_dir = v),
      RCN_FIELD("system.kind", to_string(c.system.kind),
                c.system.kind = system_kind_from_string(v);
                c.system.parameters = default_parameters(c.system.kind)),
      RCN_FIELD("system.dt", fmt(c.system.dt), c.system.dt = textio::parse_double(v)),
      RCN_FIELD("system.substeps", fmt(c.system.substeps), c.system.substeps = to_count(k, v)),
      RCN_FIELD("system.initial_state", c.system.initial_state.empty() ? std::string("random") : join(c.system.initial_state),
                c.system.initial_state = (v == "random" ? std::vector<double>{} : to_list(v))),
      RCN_FIELD("system.transient_discard", fmt(c.system.transient_discard), c.system.transient_discard = to_count(k, v)),
      RCN_FIELD("observation.mode", to_string(c.observation.mode), c.observation.mode = observation_mode_from_string(v)),
      RCN_FIELD("observation.scale", fmt(c.observation.scale), c.observation.scale = textio::parse_double(v)),
      RCN_FIELD("observation.gamma", fmt(c.observation.gamma), c.observation.gamma = textio::parse_double(v)),
      RCN_FIELD("observation.delay_2d", fmt(c.observation.delay_2d), c.observation.delay_2d = to_count(k, v)),
      RCN_FIELD("observation.noise_sigma", fmt(c.observation.noise_sigma), c.observation.noise_sigma = textio::parse_double(v)),
      RCN_FIELD("observation.mean_subtract", fmt(c.observation.mean_subtract), c.observation.mean_subtract = to_bool(k, v)),
      RCN_FIELD("reservoir.N", std::to_string(c.reservoir.n), c.reservoir.n = static_cast<Index>(to_count(k, v))),
      RCN_FIELD("reservoir.a", fmt(c.reservoir.leak), c.reservoir.leak = textio::parse_double(v)),
      RCN_FIELD("reservoir.alpha", fmt(c.reservoir.alpha), c.reservoir.alpha = textio::parse_double(v)),
      RCN_FIELD("reservoir.seed", c.reservoir.seed ? std::to_string(*c.reservoir.seed) : std::string("derived"),
                if (v == "derived") c.reservoir.seed.reset();
                else c.reservoir.seed = static_cast<std::uint64_t>(textio::parse_int(v))),
      RCN_FIELD("training.washout", fmt(c.training.washout), c.training.washout = to_count(k, v)),
      RCN_FIELD("training.n_train", fmt(c.training.n_train), c.training.n_train = to_count(k, v)),
      RCN_FIELD("training.regressor", std::string(c.training.regressor == RegressorKind::mlp ? "mlp" : "ridge"),
                if (v == "mlp") c.training.regressor = RegressorKind::mlp;
                else if (v == "ridge") c.training.regressor = RegressorKind::ridge;
                else throw PreconditionError("config: training.regressor must be mlp or ridge")),
      RCN_FIELD("training.hidden",
                [&] {
                  std::vector<double> h(c.training.architecture.hidden.begin(), c.training.architecture.hidden.end());
                  return h.empty() ? std::string("none") : join(h);
                }(),
                c.training.architecture.hidden.clear();
                for (double w : to_list(v)) {
                  if (w < 1 || w != std::floor(w)) throw PreconditionError("config: training.hidden widths must be positive integers");
                  c.training.architecture.hidden.push_back(static_cast<Index>(w));
                }),
      RCN_FIELD("training.activation", to_string(c.training.architecture.hidden_activation),
                c.training.architecture.hidden_activation = activation_from_string(v)),
      RCN_FIELD("training.lr", fmt(c.training.optimizer.learning_rate), c.training.optimizer.learning_rate = textio::parse_double(v)),
      RCN_FIELD("training.beta1", fmt(c.training.optimizer.beta1), c.training.optimizer.beta1 = textio::parse_double(v)),
      RCN_FIELD("training.beta2", fmt(c.training.optimizer.beta2), c.training.optimizer.beta2 = textio::parse_double(v)),
      RCN_FIELD("training.epsilon", fmt(c.training.optimizer.epsilon), c.training.optimizer.epsilon = textio::parse_double(v)),
      RCN_FIELD("training.batch", fmt(c.training.optimizer.batch_size), c.training.optimizer.batch_size = to_count(k, v)),
      RCN_FIELD("training.epochs", fmt(c.training.optimizer.epochs), c.training.optimizer.epochs = to_count(k, v)),
      RCN_FIELD("training.weight_decay", fmt(c.training.optimizer.weight_decay), c.training.optimizer.weight_decay = textio::parse_double(v)),
      RCN_FIELD("training.validation_fraction", fmt(c.training.optimizer.validation_fraction),
                c.training.optimizer.validation_fraction = textio::parse_double(v)),
      RCN_FIELD("training.ridge_lambda", fmt(c.training.ridge_lambda), c.training.ridge_lambda = textio::parse_double(v)),
      RCN_FIELD("training.center", fmt(c.training.center), c.training.center = to_bool(k, v)),
      RCN_FIELD("training.full_state", fmt(c.training.full_state), c.training.full_state = to_bool(k, v)),
      RCN_FIELD("training.full_scale", fmt(c.training.full_scale), c.training.full_scale = textio::parse_double(v)),
      RCN_FIELD("training.full_heldout", fmt(c.training.full_heldout), c.training.full_heldout = to_count(k, v)),
      RCN_FIELD("forecast.horizon", fmt(c.forecast.horizon), c.forecast.horizon = to_count(k, v)),
      RCN_FIELD("forecast.escape_factor", fmt(c.forecast.escape_factor), c.forecast.escape_factor = textio::parse_double(v)),
      RCN_FIELD("metrics.bins", fmt(c.metrics.bins), c.metrics.bins = to_count(k, v)),
      RCN_FIELD("metrics.bandwidth", fmt(c.metrics.bandwidth), c.metrics.bandwidth = textio::parse_double(v)),
      RCN_FIELD("metrics.valid_threshold", fmt(c.metrics.valid_threshold), c.metrics.valid_threshold = textio::parse_double(v)),
      RCN_FIELD("metrics.bounded_factor", fmt(c.metrics.bounded_factor), c.metrics.bounded_factor = textio::parse_double(v)),
      RCN_FIELD("metrics.reference_length", fmt(c.metrics.reference_length), c.metrics.reference_length = to_count(k, v)),
      RCN_FIELD("metrics.laminar_tol", fmt(c.metrics.laminar_tol), c.metrics.laminar_tol = textio::parse_double(v)),
      RCN_FIELD("metrics.laminar_min_len", fmt(c.metrics.laminar_min_len), c.metrics.laminar_min_len = to_count(k, v)),
      RCN_FIELD("metrics.laminar_lag", fmt(c.metrics.laminar_lag), c.metrics.laminar_lag = to_count(k, v)),
      RCN_FIELD("metrics.laminar_channel", fmt(c.metrics.laminar_channel), c.metrics.laminar_channel = to_count(k, v)),
      RCN_FIELD("metrics.rv", fmt(c.metrics.rv), c.metrics.rv = to_bool(k, v)),
      RCN_FIELD("metrics.injectivity", fmt(c.metrics.injectivity), c.metrics.injectivity = to_bool(k, v)),
      RCN_FIELD("metrics.k_past", fmt(c.metrics.k_past), c.metrics.k_past = to_count(k, v)),
      RCN_FIELD("metrics.eps_quantile", fmt(c.metrics.eps_quantile), c.metrics.eps_quantile = textio::parse_double(v)),
      RCN_FIELD("gates.usp_pairs", fmt(c.gates.usp_pairs), c.gates.usp_pairs = to_count(k, v)),
      RCN_FIELD("gates.usp_tol", fmt(c.gates.usp_tol), c.gates.usp_tol = textio::parse_double(v)),
      RCN_FIELD("gates.si_trials", fmt(c.gates.si_trials), c.gates.si_trials = to_count(k, v)),
      RCN_FIELD("gates.si_tol", fmt(c.gates.si_tol), c.gates.si_tol = textio::parse_double(v)),
  };
  return table;
}

#undef RCN_FIELD

constexpr const char* kParamPrefix = "system.param.";

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const std::string k = textio::trim(key);
  const std::string v = textio::trim(value);
  if (k.rfind(kParamPrefix, 0) == 0) {
    const std::string name = k.substr(std::string(kParamPrefix).size());
    const auto defaults = default_parameters(cfg.system.kind);
    if (!defaults.count(name))
      throw PreconditionError("config: '" + name + "' is not a parameter of " + to_string(cfg.system.kind));
    cfg.system.parameters[name] = textio::parse_double(v);
    return;
  }
  for (const auto& f : fields()) {
    if (k == f.key) {
      try {
        f.set(cfg, k, v);
      } catch (const PreconditionError&) {
        throw;
      } catch (const std::exception& e) {
        throw PreconditionError("config: bad value for " + k + ": " + e.what());
      }
      return;
    }
  }
  throw PreconditionError("config: unknown key '" + k + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  cfg.system.parameters = default_parameters(cfg.system.kind);
  // system.kind resets the parameter table, so it has to be applied first.
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string t = textio::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw PreconditionError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    entries.emplace_back(textio::trim(t.substr(0, eq)), textio::trim(t.substr(eq + 1)));
  }
  std::stable_partition(entries.begin(), entries.end(), [](const auto& e) { return e.first == "system.kind"; });
  for (const auto& [k, v] : entries) apply_setting(cfg, k, v);
  return cfg;
}

std::string to_text(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  for (const auto& f : fields()) kv[f.key] = f.get(cfg);
  for (const auto& [name, value] : cfg.system.parameters) kv[kParamPrefix + name] = fmt(value);
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output_dir.clear();
  return hex(fnv1a(to_text(c)));
}

void ExperimentConfig::validate() const {
  system.validate();
  observation.validate();
  require(reservoir.n >= 1, "config: reservoir.N must be >= 1");
  require(reservoir.leak > 0.0 && reservoir.leak <= 1.0, "config: reservoir.a must lie in (0, 1]");
  require(reservoir.alpha > 0.0, "config: reservoir.alpha must be positive");
  require(training.n_train >= 1, "config: training.n_train must be >= 1");
  require(training.n_train + 2 >= static_cast<std::size_t>(reservoir.n),
          "config: training.n_train must be at least reservoir.N - 2 for the PCA");
  require(training.optimizer.batch_size >= 1, "config: training.batch must be >= 1");
  require(training.optimizer.learning_rate > 0.0, "config: training.lr must be positive");
  require(training.ridge_lambda >= 0.0, "config: training.ridge_lambda must be >= 0");
  require(!training.full_state || training.full_scale != 0.0, "config: training.full_scale must be nonzero");
  require(!training.full_state || training.full_heldout >= 2, "config: training.full_heldout must be >= 2");
  require(forecast.horizon >= 1, "config: forecast.horizon must be >= 1");
  require(forecast.escape_factor >= 0.0, "config: forecast.escape_factor must be >= 0");
  require(metrics.bins >= 2, "config: metrics.bins must be >= 2");
  require(metrics.bandwidth >= 0.0, "config: metrics.bandwidth must be >= 0");
  require(metrics.valid_threshold > 0.0, "config: metrics.valid_threshold must be positive");
  require(metrics.bounded_factor >= 1.0, "config: metrics.bounded_factor must be >= 1");
  require(metrics.laminar_tol >= 0.0, "config: metrics.laminar_tol must be >= 0");
  require(metrics.laminar_lag >= 1 && metrics.laminar_min_len >= 1, "config: laminar lag and min_len must be >= 1");
  require(metrics.eps_quantile > 0.0 && metrics.eps_quantile < 1.0, "config: metrics.eps_quantile must lie in (0, 1)");
  require(gates.usp_pairs >= 1 && gates.si_trials >= 1, "config: gate counts must be >= 1");
  require(gates.usp_tol > 0.0 && gates.si_tol > 0.0, "config: gate tolerances must be positive");
  const std::size_t k = observation.mode == ObservationMode::identity_scaled
                            ? state_dimension(system.kind)
                            : (observation.mode == ObservationMode::scalar_sin ? 1 : 2 * observation.delay_2d + 1);
  require(static_cast<Index>(k) <= reservoir.n, "config: input dimension exceeds reservoir.N");
  require(metrics.laminar_tol == 0.0 || metrics.laminar_channel < k, "config: metrics.laminar_channel out of range");
}

// ---------------------------------------------------------------------------
// Recipes

namespace {

struct RecipeSource {
  const char* name;
  const char* text;
};

const RecipeSource kRecipes[] = {
    {"lorenz", R"(# Lorenz forecast from noisy scaled full-state input.
name = lorenz
global_seed = 1
system.kind = lorenz
system.param.sigma = 10              # standard Lorenz values
system.param.rho = 28
system.param.beta = 2.6666666666666665
system.dt = 0.1                      # sampled every 0.1 time units
system.substeps = 10                 # RK4 step dt/10
system.transient_discard = 500
observation.mode = identity_scaled
observation.scale = 0.01             # u = w/100 + noise
observation.noise_sigma = 0.01       # noise std 0.01 (about 18 dB)
observation.mean_subtract = false
reservoir.N = 1000
reservoir.a = 0.5
reservoir.alpha = 0.99
training.washout = 500
training.n_train = 2000
training.regressor = mlp             # feed-forward network, Adam, MSE
training.hidden = 128,128
training.lr = 0.001
training.epochs = 300
forecast.horizon = 50000             # 50,000 predicted points
metrics.bins = 50
metrics.bandwidth = 2
metrics.reference_length = 50000
metrics.injectivity = true
)"},
    {"lorenz_sine", R"(# Lorenz forecast from a scalar sine observable, plus full-state
# reconstruction through Gamma_full.
name = lorenz_sine
global_seed = 1
system.kind = lorenz
system.dt = 0.1
system.transient_discard = 500
observation.mode = scalar_sin
observation.scale = 0.1              # (1/10) sum of sines
observation.gamma = 0.1
observation.noise_sigma = 0.01       # same noise as lorenz
reservoir.N = 1000
reservoir.a = 0.5
reservoir.alpha = 0.99
training.washout = 500
training.n_train = 2000
training.hidden = 128,128
training.lr = 0.001
training.epochs = 300
training.full_state = true           # Gamma_full
training.full_scale = 0.01           # target w/100
training.full_heldout = 1000
forecast.horizon = 5000
metrics.bins = 50
metrics.reference_length = 50000
)"},
    {"logistic", R"(# Full logistic map, zero-mean input with noise.
name = logistic
global_seed = 1
system.kind = logistic
system.param.r = 4                   # full logistic map
system.transient_discard = 100
observation.mode = identity_scaled
observation.scale = 1                # u = w - mean(w) + noise
observation.mean_subtract = true
observation.noise_sigma = 0.01       # about 30 dB
reservoir.N = 1000
reservoir.a = 0.5
reservoir.alpha = 0.99
training.washout = 500
training.n_train = 2000
training.hidden = 128,128
training.lr = 0.003
training.epochs = 2000
forecast.horizon = 10000             # 10000 prediction steps
metrics.bins = 50
metrics.bandwidth = 2
metrics.reference_length = 100000
)"},
    {"henon", R"(# Intermittent Henon map near the period-7 tangent bifurcation.
name = henon
global_seed = 1
system.kind = henon_intermittent
system.param.a = 1.2265              # period-7 type-I intermittency
system.param.b = 0.3
system.transient_discard = 1000
observation.mode = identity_scaled
observation.scale = 0.1              # u = (w - mean(w))/10 + noise
observation.mean_subtract = true
observation.noise_sigma = 0.001      # about 40 dB
reservoir.N = 1000
reservoir.a = 0.5
reservoir.alpha = 0.99
training.washout = 1000
training.n_train = 5000
training.hidden = 128,128
training.lr = 0.001
training.epochs = 300
forecast.horizon = 20000
metrics.bins = 50
metrics.reference_length = 100000
metrics.laminar_tol = 0.005          # in input units
metrics.laminar_min_len = 20
metrics.laminar_lag = 7              # period of the ghost orbit
)"},
    {"pomeau", R"(# Pomeau-Manneville map.
name = pomeau
global_seed = 1
system.kind = pomeau_manneville
system.param.z = 0.9
system.transient_discard = 1000
observation.mode = identity_scaled
observation.scale = 1                # u = w - mean(w) + noise
observation.mean_subtract = true
observation.noise_sigma = 0.01       # about 26 dB
reservoir.N = 1000
reservoir.a = 0.5
reservoir.alpha = 0.99
training.washout = 1000
training.n_train = 5000
training.hidden = 128,128
training.lr = 0.001
training.epochs = 300
forecast.horizon = 20000
metrics.bins = 50
metrics.reference_length = 100000
metrics.laminar_tol = 0.01
metrics.laminar_min_len = 5
)"},
};

}  // namespace

std::vector<std::string> recipe_names() {
  std::vector<std::string> out;
  for (const auto& r : kRecipes) out.emplace_back(r.name);
  return out;
}

std::string recipe_text(const std::string& name) {
  for (const auto& r : kRecipes)
    if (name == r.name) return r.text;
  throw PreconditionError("unknown recipe '" + name + "'");
}

ExperimentConfig recipe(const std::string& name) { return parse_config(recipe_text(name)); }

// ---------------------------------------------------------------------------
// Pipeline stages

namespace {

TimeSeries slice(const TimeSeries& ts, Index begin, Index count) {
  TimeSeries out;
  out.values = ts.values.middleRows(begin, count);
  out.dt = ts.dt;
  out.system = ts.system;
  out.observation = ts.observation;
  out.offset = ts.offset;
  if (ts.hidden_truth) out.hidden_truth = ts.hidden_truth->middleRows(begin, count);
  return out;
}

std::size_t continuation_length(const ExperimentConfig& cfg) {
  std::size_t n = std::max(cfg.forecast.horizon, cfg.metrics.reference_length);
  if (cfg.training.full_state) n = std::max(n, cfg.training.full_heldout);
  return n;
}

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (Error& e) {
    e.tag(stage);
    throw;
  } catch (const std::exception& e) {
    throw Error(e.what(), stage);
  }
}

double pearson(const Vector& a, const Vector& b) {
  const Vector x = a.array() - a.mean();
  const Vector y = b.array() - b.mean();
  const double d = std::sqrt(x.squaredNorm() * y.squaredNorm());
  return d > 0.0 ? x.dot(y) / d : 0.0;
}

}  // namespace

ExperimentData make_data(const ExperimentConfig& cfg) {
  cfg.validate();
  SystemSpec spec = cfg.system;
  const std::size_t lead = cfg.observation.mode == ObservationMode::delay_coords ? 2 * cfg.observation.delay_2d : 0;
  spec.n_samples = cfg.data_length() + continuation_length(cfg) + lead;
  spec.seed = derive_seed(cfg.global_seed, "system");
  const TimeSeries w = generate(spec);
  ExperimentData d;
  const std::uint64_t noise_seed = derive_seed(cfg.global_seed, "noise");
  d.observed = observe(w, cfg.observation, noise_seed);
  ObservationSpec clean = cfg.observation;
  clean.noise_sigma = 0.0;
  d.clean = observe(w, clean, noise_seed);
  d.train_length = cfg.data_length();
  return d;
}

Reservoir make_reservoir(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.reservoir.seed.value_or(derive_seed(cfg.global_seed, "reservoir"));
  return build(cfg.reservoir.n, cfg.reservoir.leak, cfg.reservoir.alpha, seed);
}

GateResult run_gates(const ExperimentConfig& cfg, const Reservoir& r, const TimeSeries& inputs) {
  GateResult g;
  g.usp = verify_usp(r, inputs, cfg.gates.usp_pairs, cfg.gates.usp_tol, derive_seed(cfg.global_seed, "usp"));
  g.si = verify_si(r, cfg.gates.si_trials, cfg.gates.si_tol, derive_seed(cfg.global_seed, "si"));
  return g;
}

TrainedModels train_models(const ExperimentConfig& cfg, const Reservoir& r, const TimeSeries& train_inputs) {
  TrainedModels m;
  m.trajectory = drive(r, train_inputs, cfg.training.washout);
  PcaBasis basis = fit_pca(m.trajectory, cfg.training.center);
  auto fit = [&](const Dataset& data, const char* stream) {
    if (cfg.training.regressor == RegressorKind::ridge) return fit_ridge(data, cfg.training.ridge_lambda);
    return train_regressor(data, cfg.training.architecture, cfg.training.optimizer,
                           derive_seed(cfg.global_seed, stream));
  };
  const Dataset data = make_dataset(m.trajectory, basis, train_inputs, TargetKind::next_input);
  m.gamma = make_model(basis, fit(data, "train"), data, TargetKind::next_input, 1.0);
  if (cfg.training.full_state) {
    const Dataset full =
        make_dataset(m.trajectory, basis, train_inputs, TargetKind::full_state, cfg.training.full_scale);
    m.gamma_full = make_model(basis, fit(full, "train_full"), full, TargetKind::full_state, cfg.training.full_scale);
  }
  return m;
}

ForecastRun run_forecast(const ExperimentConfig& cfg, const Reservoir& r, const TrainedModels& m,
                         const TimeSeries& train_inputs) {
  const Index last = train_inputs.length() - 1;
  ForecastOptions opt;
  opt.escape_factor = cfg.forecast.escape_factor;
  opt.record_states = m.gamma_full.has_value();
  return closed_loop(r, m.gamma, train_inputs.row(last), m.trajectory.state(last), cfg.forecast.horizon, opt);
}

EvalReport evaluate(const ExperimentConfig& cfg, const Matrix& predicted, const Matrix& truth,
                    const Matrix& train_inputs, Densities* densities) {
  require(truth.rows() >= predicted.rows(), "evaluate: truth shorter than the forecast");
  require(truth.cols() == predicted.cols() && train_inputs.cols() == predicted.cols(),
          "evaluate: channel counts differ");
  EvalReport rep;
  const Index h = predicted.rows();
  rep.valid_time = valid_time(predicted, truth.topRows(h), cfg.metrics.valid_threshold);

  const Vector lo = train_inputs.colwise().minCoeff().transpose();
  const Vector hi = train_inputs.colwise().maxCoeff().transpose();
  const Vector centre = 0.5 * (lo + hi);
  const Vector half = 0.5 * cfg.metrics.bounded_factor * (hi - lo);
  rep.bounded = predicted.allFinite();
  for (Index n = 0; rep.bounded && n < h; ++n)
    rep.bounded = ((predicted.row(n).transpose() - centre).cwiseAbs().array() <= half.array()).all();

  rep.density_distance = 0.0;
  for (Index k = 0; k < predicted.cols(); ++k) {
    const Vector t = truth.col(k);
    const Vector p = predicted.col(k);
    double a = t.minCoeff(), b = t.maxCoeff();
    if (!(b > a)) a -= 0.5, b += 0.5;
    DensityEstimate dt = estimate_density(t, cfg.metrics.bins, cfg.metrics.bandwidth, a, b);
    DensityEstimate dp = estimate_density(p, cfg.metrics.bins, cfg.metrics.bandwidth, a, b);
    const double dist = density_distance(dp, dt);
    rep.extra["density_distance.u" + std::to_string(k + 1)] = dist;
    rep.density_distance = std::max(rep.density_distance, dist);
    if (densities) {
      densities->forecast.push_back(std::move(dp));
      densities->truth.push_back(std::move(dt));
    }
  }

  if (cfg.metrics.laminar_tol > 0.0) {
    const auto c = static_cast<Index>(cfg.metrics.laminar_channel);
    const auto& m = cfg.metrics;
    rep.laminar = laminar_stats(predicted.col(c), m.laminar_tol, m.laminar_min_len, m.laminar_lag);
    rep.laminar_truth = laminar_stats(truth.col(c), m.laminar_tol, m.laminar_min_len, m.laminar_lag);
  }
  return rep;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, const Logger& log_fn) {
  auto log = [&](const std::string& s) {
    if (log_fn) log_fn(s);
  };
  staged("config", [&] {
    cfg.validate();
    return 0;
  });
  const std::string hash = config_hash(cfg);
  const std::string tag = "config_hash: " + hash;
  namespace fs = std::filesystem;
  const fs::path out = cfg.output_dir;
  auto write = [&](const std::string& file, const std::string& body) {
    textio::write_file((out / file).string(), body);
  };
  log("config " + cfg.name + " hash " + hash);

  const ExperimentData data = staged("generate", [&] { return make_data(cfg); });
  const auto l = static_cast<Index>(data.train_length);
  const TimeSeries train = slice(data.observed, 0, l);
  const Index cont = data.clean.length() - l;
  const TimeSeries truth = slice(data.clean, l, cont);
  if (cfg.observation.noise_sigma > 0.0) {
    const TimeSeries clean_train = slice(data.clean, 0, l);
    log("snr " + textio::format_double(snr_db(clean_train, cfg.observation.noise_sigma)) + " dB");
  }

  const Reservoir r = staged("build", [&] { return make_reservoir(cfg); });
  PipelineResult result;
  result.gates = staged("gates", [&] { return run_gates(cfg, r, train); });
  {
    std::ostringstream g;
    g << "# " << tag << '\n';
    g << "usp.converged = " << (result.gates.usp.converged ? "true" : "false") << '\n';
    g << "usp.final_gap = " << textio::format_double(result.gates.usp.gap_curve.back()) << '\n';
    g << "si.passed = " << (result.gates.si.passed ? "true" : "false") << '\n';
    g << "si.max_error = " << textio::format_double(result.gates.si.max_error) << '\n';
    write("gates.txt", g.str());
    log("usp final gap " + textio::format_double(result.gates.usp.gap_curve.back()) + ", si max error " +
        textio::format_double(result.gates.si.max_error));
  }
  if (!result.gates.usp.converged)
    throw Error("reservoir fails the unique-solution gate: final gap " +
                    textio::format_double(result.gates.usp.gap_curve.back()),
                "gates");
  if (!result.gates.si.passed)
    throw Error("reservoir fails the SI round-trip gate: max error " + textio::format_double(result.gates.si.max_error),
                "gates");

  write("config.txt", "# " + tag + '\n' + to_text(cfg));
  write("series.csv", to_csv(train, tag));
  write("truth.csv", to_csv(truth, tag));
  write("reservoir.txt", serialize(r, hash));

  const TrainedModels models = staged("train", [&] { return train_models(cfg, r, train); });
  log("train mse " + textio::format_double(models.gamma.regressor.train_mse) + ", validation mse " +
      textio::format_double(models.gamma.regressor.validation_mse));
  write("model.txt", serialize(models.gamma, hash));
  if (models.gamma_full) write("model_full.txt", serialize(*models.gamma_full, hash));

  const ForecastRun run = staged("forecast", [&] { return run_forecast(cfg, r, models, train); });
  const Index h = run.predicted.rows();
  write("forecast.csv",
        forecast_csv(train, run.predicted,
                     truth.hidden_truth ? std::optional<Matrix>(truth.hidden_truth->topRows(h)) : std::nullopt, tag));
  log("forecast " + std::to_string(h) + " steps");

  Densities dens;
  EvalReport rep = staged("evaluate", [&] { return evaluate(cfg, run.predicted, truth.values, train.values, &dens); });
  rep.config_hash = hash;

  staged("evaluate", [&] {
    const Matrix post = models.trajectory.post_washout();
    if (cfg.metrics.rv) {
      if (post.rows() - 2 >= 2 * post.cols() + 1) rep.rv_coefficient = lag_pair_rv(post);
      else log("rv skipped: needs at least 2N + 1 state pairs");
    }
    if (cfg.metrics.injectivity && train.hidden_truth) {
      const Matrix w = train.hidden_truth->bottomRows(l - static_cast<Index>(cfg.training.washout));
      const double eps = state_pair_distance_quantile(post, cfg.metrics.eps_quantile);
      const InjectivityResult inj = injectivity_test(post, w, cfg.metrics.k_past, eps);
      rep.injectivity_ratio = inj.ratio;
      rep.extra["injectivity_chance"] = inj.chance;
      rep.extra["injectivity_pairs"] = static_cast<double>(inj.neighbor_pairs);
    }
    if (models.gamma_full) {
      // Teacher-forced states over the held-out continuation.
      const auto held = static_cast<Index>(cfg.training.full_heldout);
      const TimeSeries all = slice(data.observed, 0, l + held);
      const Matrix states = drive_states<double>(r, all.values, Vector::Zero(r.size()));
      const TimeSeries rec = reconstruct_full(r, *models.gamma_full, states.middleRows(l - 1, held + 1));
      const Matrix& w = *all.hidden_truth;
      for (Index k = 0; k < w.cols(); ++k)
        rep.extra["full_corr.w" + std::to_string(k + 1)] = pearson(rec.values.col(k), w.col(k).tail(held));
      const TimeSeries fc = reconstruct_full(r, *models.gamma_full, run.states);
      write("forecast_full.csv", to_csv(fc, tag));
    }
    rep.extra["train_mse"] = models.gamma.regressor.train_mse;
    rep.extra["validation_mse"] = models.gamma.regressor.validation_mse;
    return 0;
  });
  write("report.txt", to_text(rep));

  for (std::size_t k = 0; k < dens.forecast.size(); ++k) {
    const std::string ch = "u" + std::to_string(k + 1);
    write("density_" + ch + ".csv", density_csv(dens.forecast[k], tag));
    write("density_truth_" + ch + ".csv", density_csv(dens.truth[k], tag));
    write("density_" + ch + ".svg",
          plot::densities({"invariant density of " + ch, ch, "mass"}, {dens.truth[k], dens.forecast[k]},
                          {"actual", "predicted"}));
  }
  {
    const Index shown = std::min<Index>(h, 500);
    plot::Series a{{}, {}, "actual"}, p{{}, {}, "predicted"};
    for (Index n = 0; n < shown; ++n) {
      a.x.push_back(static_cast<double>(n));
      a.y.push_back(truth.values(n, 0));
      p.x.push_back(static_cast<double>(n));
      p.y.push_back(run.predicted(n, 0));
    }
    write("series.svg", plot::lines({"forecast u1", "step", "u1"}, {a, p}));
    plot::Series ta{{}, {}, "actual"}, tp{{}, {}, "predicted"};
    const bool planar = run.predicted.cols() >= 2;
    auto cloud = [&](const Matrix& m, plot::Series& s) {
      const Index rows = std::min<Index>(m.rows(), h);
      for (std::size_t i : plot::thin(static_cast<std::size_t>(rows - 1), 5000)) {
        const auto n = static_cast<Index>(i);
        s.x.push_back(m(n, 0));
        s.y.push_back(planar ? m(n, 1) : m(n + 1, 0));
      }
    };
    cloud(truth.values, ta);
    cloud(run.predicted, tp);
    write("attractor.svg", plot::scatter({"attractor", "u1", planar ? "u2" : "u1 (next step)"}, {ta, tp}));
  }

  log("valid_time " + std::to_string(rep.valid_time) + ", density distance " +
      textio::format_double(rep.density_distance) + ", bounded " + (rep.bounded ? "yes" : "no"));
  result.report = std::move(rep);
  result.output_dir = out.string();
  return result;
}

}  // namespace rcn
