#include "rcn/systems.hpp"

#include "rcn/forecast.hpp"
#include "rcn/textio.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace rcn {

std::string to_string(SystemKind k) {
  switch (k) {
    case SystemKind::lorenz: return "lorenz";
    case SystemKind::logistic: return "logistic";
    case SystemKind::henon_intermittent: return "henon_intermittent";
    case SystemKind::pomeau_manneville: return "pomeau_manneville";
  }
  return "?";
}

SystemKind system_kind_from_string(const std::string& s) {
  if (s == "lorenz") return SystemKind::lorenz;
  if (s == "logistic") return SystemKind::logistic;
  if (s == "henon_intermittent" || s == "henon") return SystemKind::henon_intermittent;
  if (s == "pomeau_manneville" || s == "pm") return SystemKind::pomeau_manneville;
  throw PreconditionError("unknown system kind '" + s + "'");
}

std::string to_string(ObservationMode m) {
  switch (m) {
    case ObservationMode::identity_scaled: return "identity_scaled";
    case ObservationMode::scalar_sin: return "scalar_sin";
    case ObservationMode::delay_coords: return "delay_coords";
  }
  return "?";
}

ObservationMode observation_mode_from_string(const std::string& s) {
  if (s == "identity_scaled") return ObservationMode::identity_scaled;
  if (s == "scalar_sin") return ObservationMode::scalar_sin;
  if (s == "delay_coords") return ObservationMode::delay_coords;
  throw PreconditionError("unknown observation mode '" + s + "'");
}

std::map<std::string, double> default_parameters(SystemKind kind) {
  switch (kind) {
    case SystemKind::lorenz: return {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}};
    case SystemKind::logistic: return {{"r", 4.0}};
    case SystemKind::henon_intermittent: return {{"a", 1.2265}, {"b", 0.3}};
    case SystemKind::pomeau_manneville: return {{"z", 0.9}};
  }
  return {};
}

std::size_t state_dimension(SystemKind kind) {
  switch (kind) {
    case SystemKind::lorenz: return 3;
    case SystemKind::logistic: return 1;
    case SystemKind::henon_intermittent: return 2;
    case SystemKind::pomeau_manneville: return 1;
  }
  return 0;
}

double SystemSpec::param(const std::string& name) const {
  if (auto it = parameters.find(name); it != parameters.end()) return it->second;
  auto defaults = default_parameters(kind);
  if (auto it = defaults.find(name); it != defaults.end()) return it->second;
  throw PreconditionError("system '" + to_string(kind) + "' has no parameter '" + name + "'");
}

void SystemSpec::validate() const {
  require(n_samples > 0, "n_samples must be positive");
  auto defaults = default_parameters(kind);
  for (const auto& [name, value] : parameters) {
    require(defaults.count(name) == 1, "unknown parameter '" + name + "' for " + to_string(kind));
    require(std::isfinite(value), "parameter '" + name + "' is not finite");
  }
  require(initial_state.empty() || initial_state.size() == state_dimension(kind),
          "initial_state has wrong dimension for " + to_string(kind));
  switch (kind) {
    case SystemKind::lorenz:
      require(dt > 0.0 && std::isfinite(dt), "lorenz requires dt > 0");
      require(substeps >= 10, "lorenz requires at least 10 substeps per sample");
      require(param("sigma") > 0 && param("rho") > 0 && param("beta") > 0,
              "lorenz parameters must be positive");
      break;
    case SystemKind::logistic:
      require(param("r") > 0.0 && param("r") <= 4.0, "logistic r must lie in (0,4]");
      for (double v : initial_state) require(v >= 0.0 && v <= 1.0, "logistic x0 must lie in [0,1]");
      break;
    case SystemKind::henon_intermittent:
      require(param("a") > 0.0 && param("b") > 0.0 && param("b") < 1.0,
              "henon requires a > 0 and 0 < b < 1");
      break;
    case SystemKind::pomeau_manneville:
      require(param("z") > 0.0, "pomeau_manneville requires z > 0");
      for (double v : initial_state) require(v >= 0.0 && v < 1.0, "pomeau_manneville x0 must lie in [0,1)");
      break;
  }
}

void ObservationSpec::validate() const {
  require(scale != 0.0 && std::isfinite(scale), "observation scale must be nonzero");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "noise_sigma must be >= 0");
  require(std::isfinite(gamma), "gamma must be finite");
}

namespace {

using State3 = std::array<double, 3>;

State3 lorenz_field(const State3& w, double sigma, double rho, double beta) {
  return {sigma * (w[1] - w[0]), w[0] * (rho - w[2]) - w[1], w[0] * w[1] - beta * w[2]};
}

State3 rk4_step(const State3& w, double h, double sigma, double rho, double beta) {
  auto axpy = [](const State3& x, double s, const State3& k) {
    return State3{x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]};
  };
  State3 k1 = lorenz_field(w, sigma, rho, beta);
  State3 k2 = lorenz_field(axpy(w, h / 2, k1), sigma, rho, beta);
  State3 k3 = lorenz_field(axpy(w, h / 2, k2), sigma, rho, beta);
  State3 k4 = lorenz_field(axpy(w, h, k3), sigma, rho, beta);
  State3 out;
  for (int i = 0; i < 3; ++i) out[i] = w[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return out;
}

Vector default_initial_state(const SystemSpec& spec) {
  const std::size_t dim = state_dimension(spec.kind);
  Vector w(dim);
  if (!spec.initial_state.empty()) {
    for (std::size_t i = 0; i < dim; ++i) w(i) = spec.initial_state[i];
    return w;
  }
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (spec.kind) {
    case SystemKind::lorenz:
      w << 2 * unit(rng) - 1, 2 * unit(rng) - 1, 20 + 2 * unit(rng) - 1;
      break;
    case SystemKind::henon_intermittent:
      w << 0.2 * unit(rng) - 0.1, 0.2 * unit(rng) - 0.1;
      break;
    default:
      w(0) = 0.05 + 0.9 * unit(rng);
  }
  return w;
}

}  // namespace

TimeSeries generate(const SystemSpec& spec) {
  spec.validate();
  const std::size_t dim = state_dimension(spec.kind);
  const std::size_t total = spec.transient_discard + spec.n_samples;
  Matrix w(static_cast<Index>(spec.n_samples), static_cast<Index>(dim));
  Vector cur = default_initial_state(spec);

  auto record = [&](std::size_t n) {
    if (!cur.allFinite()) throw DivergenceError(to_string(spec.kind) + " produced a non-finite state", n);
    if (n >= spec.transient_discard) w.row(static_cast<Index>(n - spec.transient_discard)) = cur.transpose();
  };

  switch (spec.kind) {
    case SystemKind::lorenz: {
      const double sigma = spec.param("sigma"), rho = spec.param("rho"), beta = spec.param("beta");
      const double h = spec.dt / static_cast<double>(spec.substeps);
      State3 s{cur(0), cur(1), cur(2)};
      for (std::size_t n = 0; n < total; ++n) {
        if (n > 0) {
          for (std::size_t k = 0; k < spec.substeps; ++k) s = rk4_step(s, h, sigma, rho, beta);
        }
        cur << s[0], s[1], s[2];
        record(n);
        if (cur.norm() >= 100.0) throw DivergenceError("lorenz left the ball |w| < 100", n);
      }
      break;
    }
    case SystemKind::logistic: {
      const double r = spec.param("r");
      for (std::size_t n = 0; n < total; ++n) {
        if (n > 0) cur(0) = r * cur(0) * (1.0 - cur(0));
        record(n);
      }
      break;
    }
    case SystemKind::henon_intermittent: {
      const double a = spec.param("a"), b = spec.param("b");
      for (std::size_t n = 0; n < total; ++n) {
        if (n > 0) {
          const double x = cur(0), y = cur(1);
          cur(0) = 1.0 - a * x * x + y;
          cur(1) = b * x;
        }
        record(n);
        if (cur.cwiseAbs().maxCoeff() > 1e3) throw DivergenceError("henon orbit escaped", n);
      }
      break;
    }
    case SystemKind::pomeau_manneville: {
      const double z = spec.param("z");
      for (std::size_t n = 0; n < total; ++n) {
        if (n > 0) {
          const double x = cur(0);
          cur(0) = std::fmod(x + std::pow(x, 1.0 + z), 1.0);
        }
        record(n);
      }
      break;
    }
  }

  TimeSeries ts;
  ts.values = w;
  if (spec.kind == SystemKind::lorenz) ts.dt = spec.dt;
  ts.system = spec;
  ts.hidden_truth = w;
  return ts;
}

TimeSeries observe(const TimeSeries& ts, const ObservationSpec& obs, std::uint64_t seed) {
  obs.validate();
  require(ts.length() > 0, "observe: empty series");
  const Matrix& w = ts.values;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto add_noise = [&](Matrix& m) {
    if (obs.noise_sigma == 0.0) return;
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) += obs.noise_sigma * noise(rng);
  };

  TimeSeries out;
  out.dt = ts.dt;
  out.system = ts.system;
  out.observation = obs;
  out.hidden_truth = ts.hidden_truth ? ts.hidden_truth : std::optional<Matrix>(w);

  auto sin_sum = [&]() {
    Vector s = (obs.gamma * w.array()).sin().rowwise().sum().matrix();
    return s;
  };

  switch (obs.mode) {
    case ObservationMode::identity_scaled: {
      Matrix u = w;
      if (obs.mean_subtract) {
        out.offset = w.colwise().mean().transpose();
        u.rowwise() -= out.offset.transpose();
      }
      u *= obs.scale;
      add_noise(u);
      out.values = std::move(u);
      break;
    }
    case ObservationMode::scalar_sin: {
      Vector s = sin_sum();
      if (obs.mean_subtract) {
        out.offset = Vector::Constant(1, s.mean());
        s.array() -= out.offset(0);
      }
      Matrix u = obs.scale * s;
      add_noise(u);
      out.values = std::move(u);
      break;
    }
    case ObservationMode::delay_coords: {
      require(ts.length() > static_cast<Index>(2 * obs.delay_2d),
              "observe: delay window exceeds series length");
      Vector s = obs.gamma != 0.0 ? sin_sum() : Vector(w.col(0));
      if (obs.mean_subtract) {
        out.offset = Vector::Constant(1, s.mean());
        s.array() -= out.offset(0);
      }
      Matrix scalar = obs.scale * s;
      add_noise(scalar);
      TimeSeries sc;
      sc.values = std::move(scalar);
      sc.dt = ts.dt;
      sc.hidden_truth = out.hidden_truth;
      TimeSeries emb = delay_embed(sc, obs.delay_2d);
      out.values = std::move(emb.values);
      out.hidden_truth = std::move(emb.hidden_truth);
      break;
    }
  }
  return out;
}

double snr_db(const TimeSeries& signal, double noise_sigma) {
  require(signal.length() > 1, "snr_db: signal needs at least two samples");
  require(noise_sigma > 0.0, "snr_db: noise_sigma must be positive");
  const Matrix& v = signal.values;
  Matrix centered = v.rowwise() - v.colwise().mean();
  const double var_total = centered.squaredNorm() / static_cast<double>(v.rows());
  if (!(var_total > 0.0)) throw Error("snr_db: signal has zero variance");
  return 10.0 * std::log10(var_total / (static_cast<double>(v.cols()) * noise_sigma * noise_sigma));
}

std::string to_csv(const TimeSeries& ts, const std::string& comment) {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << '\n';
  os << 't';
  for (Index k = 0; k < ts.dim(); ++k) os << ",u" << (k + 1);
  const Index m = ts.hidden_truth ? ts.hidden_truth->cols() : 0;
  if (ts.hidden_truth)
    require(ts.hidden_truth->rows() == ts.length(), "to_csv: hidden_truth is not aligned with values");
  for (Index k = 0; k < m; ++k) os << ",w" << (k + 1);
  os << '\n';
  const double dt = ts.dt.value_or(1.0);
  for (Index n = 0; n < ts.length(); ++n) {
    os << textio::format_double(static_cast<double>(n) * dt);
    for (Index k = 0; k < ts.dim(); ++k) os << ',' << textio::format_double(ts.values(n, k));
    for (Index k = 0; k < m; ++k) os << ',' << textio::format_double((*ts.hidden_truth)(n, k));
    os << '\n';
  }
  return os.str();
}

TimeSeries from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::string t = textio::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (header.empty()) {
      header = textio::split(t, ',');
      for (auto& h : header) h = textio::trim(h);
      if (header.empty() || header.front() != "t") throw Error("csv: header must start with 't'");
      continue;
    }
    auto cells = textio::split(t, ',');
    if (cells.size() != header.size()) throw Error("csv: row has " + std::to_string(cells.size()) +
                                                   " cells, header has " + std::to_string(header.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (header[c] == "phase") continue;
      row.push_back(textio::parse_double(cells[c]));
    }
    rows.push_back(std::move(row));
  }
  if (header.empty()) throw Error("csv: missing header");

  std::vector<Index> ucols, wcols;
  Index col = 0;
  for (const auto& h : header) {
    if (h == "phase") continue;
    if (h.size() > 1 && h[0] == 'u') ucols.push_back(col);
    else if (h.size() > 1 && h[0] == 'w') wcols.push_back(col);
    else if (h != "t") throw Error("csv: unexpected column '" + h + "'");
    ++col;
  }
  TimeSeries ts;
  const Index n = static_cast<Index>(rows.size());
  ts.values.resize(n, static_cast<Index>(ucols.size()));
  Matrix w(n, static_cast<Index>(wcols.size()));
  for (Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < ucols.size(); ++k) ts.values(i, static_cast<Index>(k)) = rows[i][ucols[k]];
    for (std::size_t k = 0; k < wcols.size(); ++k) w(i, static_cast<Index>(k)) = rows[i][wcols[k]];
  }
  if (!wcols.empty()) ts.hidden_truth = std::move(w);
  if (n > 1) {
    const double dt = rows[1][0] - rows[0][0];
    if (dt != 1.0) ts.dt = dt;
  }
  return ts;
}

std::map<std::string, std::string> csv_comments(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = textio::trim(line);
    if (t.empty()) continue;
    if (t.front() != '#') break;
    t = textio::trim(t.substr(1));
    for (const auto& item : textio::split(t, ';')) {
      auto colon = item.find(':');
      if (colon == std::string::npos) continue;
      out[textio::trim(item.substr(0, colon))] = textio::trim(item.substr(colon + 1));
    }
  }
  return out;
}

}  // namespace rcn
