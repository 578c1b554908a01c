#include "rcn/reservoir.hpp"

#include "rcn/linalg.hpp"
#include "rcn/textio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rcn {

namespace {

Matrix uniform_matrix(Index n, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace

Reservoir build(Index n, double leak, double alpha, std::uint64_t seed, const BuildOptions& opt) {
  require(n >= 1, "build: N must be at least 1");
  require(leak > 0.0 && leak <= 1.0, "build: leak rate a must lie in (0,1]");
  require(alpha > 0.0, "build: alpha must be positive");
  Rng rng(seed);
  for (int draw = 0; draw < opt.max_draws; ++draw) {
    Matrix a = uniform_matrix(n, rng);
    Matrix b = uniform_matrix(n, rng);
    if (linalg::reciprocal_condition(a) <= opt.min_rcond) continue;
    if (linalg::reciprocal_condition(b) <= opt.min_rcond) continue;
    auto rho = linalg::spectral_radius(b, opt.power_tol, opt.power_max_iter, 12, mix64(seed + draw));
    if (!rho.converged || !(rho.radius > 0.0)) continue;
    b /= rho.radius;
    return Reservoir(std::move(a), std::move(b), leak, alpha, seed);
  }
  throw Error("build: no admissible reservoir after " + std::to_string(opt.max_draws) + " draws");
}

Vector pad_input(const Vector& v, Index n) {
  require(v.size() <= n, "pad_input: input dimension K exceeds N");
  Vector out = Vector::Zero(n);
  out.head(v.size()) = v;
  return out;
}

StateTrajectory drive(const Reservoir& r, const TimeSeries& inputs, std::size_t washout, const Vector& x0) {
  require(inputs.length() > static_cast<Index>(washout), "drive: input series not longer than washout");
  StateTrajectory traj;
  traj.states = drive_states<double>(r, inputs.values, x0);
  traj.inputs = inputs;
  traj.washout = washout;
  return traj;
}

StateTrajectory drive(const Reservoir& r, const TimeSeries& inputs, std::size_t washout) {
  return drive(r, inputs, washout, Vector::Zero(r.size()));
}

UspReport verify_usp(const Reservoir& r, const TimeSeries& inputs, std::size_t n_pairs, double tol,
                     std::uint64_t seed) {
  require(inputs.length() >= 100, "verify_usp: need at least 100 inputs");
  require(n_pairs >= 1, "verify_usp: need at least one pair");
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const Index n = r.size();
  UspReport rep;
  rep.gap_curve.assign(static_cast<std::size_t>(inputs.length()) + 1, 0.0);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    Vector x = Vector::NullaryExpr(n, [&]() { return dist(rng); });
    Vector y = Vector::NullaryExpr(n, [&]() { return dist(rng); });
    rep.gap_curve[0] = std::max(rep.gap_curve[0], (x - y).cwiseAbs().maxCoeff());
    for (Index t = 0; t < inputs.length(); ++t) {
      Vector u = inputs.row(t);
      x = r.step(u, x);
      y = r.step(u, y);
      auto& g = rep.gap_curve[static_cast<std::size_t>(t) + 1];
      g = std::max(g, (x - y).cwiseAbs().maxCoeff());
    }
  }
  rep.converged = rep.gap_curve.back() < tol;
  return rep;
}

SiReport verify_si(const Reservoir& r, std::size_t trials, double tol, std::uint64_t seed) {
  require(trials >= 1, "verify_si: trials must be at least 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const Index n = r.size();
  const Index k_low = std::min<Index>(3, n);
  const double full_scale = 1.0 / std::sqrt(static_cast<double>(n));
  SiReport rep;
  for (std::size_t t = 0; t < trials; ++t) {
    Vector u = (t % 2 == 0) ? pad_input(Vector::NullaryExpr(k_low, [&]() { return dist(rng); }), n)
                            : Vector(Vector::NullaryExpr(n, [&]() { return full_scale * dist(rng); }));
    Vector x = Vector::NullaryExpr(n, [&]() { return dist(rng); });
    double err = std::numeric_limits<double>::infinity();
    try {
      Vector back = r.invert_input(x, r.step(u, x));
      if (back.allFinite()) err = (back - u).cwiseAbs().maxCoeff();
    } catch (const InversionDomainError&) {
    }
    rep.max_error = std::max(rep.max_error, err);
  }
  rep.passed = rep.max_error < tol;
  return rep;
}

std::string serialize(const Reservoir& r, const std::string& config_hash) {
  std::ostringstream os;
  os << "rcn-reservoir 1\n";
  if (!config_hash.empty()) os << "config_hash " << config_hash << '\n';
  os << "N " << r.size() << '\n';
  os << "leak " << textio::format_double(r.leak()) << '\n';
  os << "alpha " << textio::format_double(r.alpha()) << '\n';
  os << "seed " << r.seed() << '\n';
  os << "A\n";
  textio::write_matrix(os, r.input_matrix());
  os << "B\n";
  textio::write_matrix(os, r.recurrence_matrix());
  return os.str();
}

Reservoir deserialize_reservoir(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "rcn-reservoir" || version != 1) throw Error("not a reservoir file (version 1)");
  Index n = 0;
  double leak = 0, alpha = 0;
  std::uint64_t seed = 0;
  Matrix a, b;
  std::string key;
  while (in >> key) {
    if (key == "config_hash") in >> tag;
    else if (key == "N") in >> n;
    else if (key == "leak") { in >> tag; leak = textio::parse_double(tag); }
    else if (key == "alpha") { in >> tag; alpha = textio::parse_double(tag); }
    else if (key == "seed") in >> seed;
    else if (key == "A") a = textio::read_matrix(in, n, n);
    else if (key == "B") b = textio::read_matrix(in, n, n);
    else throw Error("reservoir file: unknown key '" + key + "'");
  }
  if (n <= 0 || a.rows() != n || b.rows() != n) throw Error("reservoir file: incomplete");
  return Reservoir(std::move(a), std::move(b), leak, alpha, seed);
}

}  // namespace rcn
