#include "oracle.hpp"

#include "rcn/forecast.hpp"
#include "rcn/readout.hpp"
#include "rcn/reservoir.hpp"
#include "rcn/systems.hpp"

#include <doctest.h>

using namespace rcn;

namespace {

TimeSeries lorenz_inputs(std::size_t n, std::uint64_t seed = 5) {
  SystemSpec s;
  s.kind = SystemKind::lorenz;
  s.n_samples = n;
  s.seed = seed;
  s.transient_discard = 200;
  ObservationSpec o;
  o.scale = 0.01;
  o.noise_sigma = 0.01;
  return observe(generate(s), o, 1);
}

ReadoutModel ridge_model(const Reservoir& r, const TimeSeries& in, std::size_t washout, StateTrajectory* out = nullptr,
                        double lambda = 1e-6) {
  StateTrajectory t = drive(r, in, washout);
  PcaBasis b = fit_pca(t);
  const Dataset d = make_dataset(t, b, in, TargetKind::next_input);
  ReadoutModel m = make_model(b, fit_ridge(d, lambda), d, TargetKind::next_input, 1.0);
  if (out) *out = std::move(t);
  return m;
}

}  // namespace

TEST_SUITE("forecast") {

TEST_CASE("zero Gamma gives zero inputs and the zero-input solution") {
  const Reservoir r = build(30, 0.5, 0.99, 3);
  ReadoutModel m;
  m.basis.P = Matrix::Identity(30, 30);
  Layer l;
  l.weights = Matrix::Zero(2, 60);
  l.bias = Vector::Zero(2);
  m.regressor = Regressor({l});
  Vector u0(2);
  u0 << 0.3, -0.2;
  // Linearized contraction is about 1 - a(1 - alpha) = 0.995 per step.
  const ForecastRun run = closed_loop(r, m, u0, Vector::Constant(30, 0.2), 4000);
  CHECK(run.predicted.cwiseAbs().maxCoeff() == 0.0);
  CHECK(run.states.row(4000).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(run.states.rows() == 4001);
}

TEST_CASE("exact-Gamma oracle follows the logistic orbit for at least 50 steps") {
  const Reservoir r = build(100, 0.5, 0.99, 7);
  const auto quad = testing::exact_gamma_logistic<testing::Quad>(r, 0.3141, 200, 80);
  CHECK(testing::agreement_steps(quad, 1e-6) >= 50);
  const auto dbl = testing::exact_gamma_logistic<double>(r, 0.3141, 200, 80);
  // In double precision the doubling map amplifies round-off by 2 per step.
  const std::size_t k = testing::agreement_steps(dbl, 1e-6);
  MESSAGE("double-precision exact-Gamma horizon: " << k << " steps");
  CHECK(k >= 15);
  // Against the scored truth the oracle also beats the 0.4 valid-time threshold.
  Matrix p(80, 1), t(80, 1);
  for (Index i = 0; i < 80; ++i) p(i, 0) = quad.predicted[static_cast<std::size_t>(i)], t(i, 0) = quad.truth[static_cast<std::size_t>(i)];
  CHECK(valid_time(p, t, 0.4) >= 50);
}

TEST_CASE("loop identity: inversion of consecutive closed-loop states gives the applied input") {
  const Reservoir r = build(60, 0.5, 0.99, 9);
  const TimeSeries in = lorenz_inputs(900);
  StateTrajectory t;
  // Heavy shrinkage keeps the loop inside the inversion domain.
  const ReadoutModel m = ridge_model(r, in, 200, &t, 1e-2);
  const Index last = in.length() - 1;
  ForecastOptions opt;
  opt.escape_factor = 0;
  const ForecastRun run = closed_loop(r, m, in.row(last), t.state(last), 300, opt);
  Vector u = in.row(last);
  for (Index k = 0; k < 300; ++k) {
    const Vector back = r.invert_input(run.states.row(k).transpose(), run.states.row(k + 1).transpose());
    CHECK((back.head(3) - u).cwiseAbs().maxCoeff() < 1e-9);
    u = run.predicted.row(k).transpose();
  }
  CHECK(run.states.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("warmup independence after washout") {
  const Reservoir r = build(80, 0.5, 0.99, 10);
  const TimeSeries in = lorenz_inputs(1200);
  StateTrajectory t;
  const ReadoutModel m = ridge_model(r, in, 300, &t);
  Rng rng(3);
  std::uniform_real_distribution<double> d(-1, 1);
  Vector x0b(80);
  for (Index i = 0; i < 80; ++i) x0b(i) = d(rng);
  const Matrix sa = drive_states<double>(r, in.values, Vector::Zero(80));
  const Matrix sb = drive_states<double>(r, in.values, x0b);
  const Index last = in.length() - 1;
  ForecastOptions opt;
  opt.escape_factor = 0;
  const ForecastRun a = closed_loop(r, m, in.row(last), sa.row(last).transpose(), 100, opt);
  const ForecastRun b = closed_loop(r, m, in.row(last), sb.row(last).transpose(), 100, opt);
  CHECK((a.predicted - b.predicted).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("escape from the training box is reported with its step") {
  const Reservoir r = build(20, 0.5, 0.99, 2);
  ReadoutModel m;
  m.basis.P = Matrix::Identity(20, 20);
  Layer l;
  l.weights = Matrix::Zero(1, 40);
  l.bias = Vector::Constant(1, 50.0);
  m.regressor = Regressor({l});
  m.target_lo = Vector::Constant(1, -1);
  m.target_hi = Vector::Constant(1, 1);
  try {
    (void)closed_loop(r, m, Vector::Zero(1), Vector::Zero(20), 10);
    FAIL("expected escape");
  } catch (const EscapeError& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("reconstruct_full against an exactly linear truth") {
  const Index n = 12;
  const Reservoir r = build(n, 0.5, 0.99, 4);
  SystemSpec s;
  s.kind = SystemKind::lorenz;
  s.n_samples = 400;
  s.seed = 1;
  ObservationSpec o;
  o.scale = 0.01;
  TimeSeries in = observe(generate(s), o, 1);
  StateTrajectory t = drive(r, in, 20);
  // Hidden truth defined as a fixed linear function of the state pair.
  Rng rng(2);
  Matrix w(2, 2 * n);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
  Matrix truth = Matrix::Zero(in.length(), 2);
  for (Index k = 1; k < in.length(); ++k) {
    Vector f(2 * n);
    f << t.state(k - 1), t.state(k);
    truth.row(k) = (w * f).transpose();
  }
  in.hidden_truth = truth;
  const PcaBasis b = fit_pca(t, false);
  const Dataset d = make_dataset(t, b, in, TargetKind::full_state, 1.0);
  const ReadoutModel m = make_model(b, fit_ridge(d, 0.0), d, TargetKind::full_state, 1.0);
  const TimeSeries rec = reconstruct_full(r, m, t.states.middleRows(100, 51));
  CHECK(rec.length() == 50);
  CHECK((rec.values - truth.middleRows(101, 50)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS(reconstruct_full(r, m, t.states.middleRows(0, 1)));
}

TEST_CASE("delay_embed") {
  TimeSeries s;
  s.values = (Matrix(4, 1) << 1, 2, 3, 4).finished();
  const TimeSeries id = delay_embed(s, 0);
  CHECK(id.values == s.values);
  const TimeSeries e = delay_embed(s, 1);
  REQUIRE(e.length() == 2);
  CHECK(e.values == (Matrix(2, 3) << 1, 2, 3, 2, 3, 4).finished());
  CHECK_THROWS(delay_embed(s, 2));
}

TEST_CASE("valid_time") {
  Matrix t(100, 2);
  for (Index i = 0; i < 100; ++i) t.row(i) << std::sin(0.1 * i), std::cos(0.3 * i);
  CHECK(valid_time(t, t, 0.4) == 100);
  const double rms = std::sqrt((t.rowwise() - t.colwise().mean()).squaredNorm() / 100.0);
  const Matrix shifted = t.array() + 10.0 * rms / std::sqrt(2.0);
  CHECK(valid_time(shifted, t, 0.4) == 0);
  CHECK_THROWS_AS(valid_time(t, Matrix::Ones(100, 2), 0.4), Error);
}

TEST_CASE("forecast csv round trip") {
  TimeSeries warm;
  warm.values = Matrix::Random(5, 2);
  warm.dt = 0.1;
  warm.hidden_truth = Matrix::Random(5, 3);
  const Matrix pred = Matrix::Random(4, 2);
  const Matrix truth = Matrix::Random(4, 3);
  const std::string csv = forecast_csv(warm, pred, truth, "config_hash: 01");
  const ForecastCsv back = read_forecast_csv(csv);
  CHECK(back.warmup.values == warm.values);
  CHECK(back.forecast.values == pred);
  REQUIRE(back.forecast.hidden_truth);
  CHECK(*back.forecast.hidden_truth == truth);
  CHECK(csv.find("t,u1,u2,w1,w2,w3,phase") != std::string::npos);
}

}  // TEST_SUITE
