#include "rcn/linalg.hpp"
#include "rcn/reservoir.hpp"
#include "rcn/systems.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace rcn;

namespace {

TimeSeries lorenz_inputs(std::size_t n, std::uint64_t seed = 3) {
  SystemSpec s;
  s.kind = SystemKind::lorenz;
  s.n_samples = n;
  s.seed = seed;
  s.transient_discard = 200;
  ObservationSpec o;
  o.scale = 0.01;
  return observe(generate(s), o, 1);
}

double dense_radius(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Vector uniform(Index n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

}  // namespace

TEST_SUITE("reservoir") {

TEST_CASE("N=1 normalises B to plus or minus one") {
  const Reservoir r = build(1, 0.5, 0.99, 17);
  CHECK(std::abs(r.recurrence_matrix()(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spectral radius of B is one against a dense eigensolver") {
  for (Index n : {50, 200}) {
    const Reservoir r = build(n, 0.5, 0.99, 5);
    CHECK(std::abs(dense_radius(r.recurrence_matrix()) - 1.0) < 1e-8);
  }
}

TEST_CASE("block power iteration matches the dense radius on random matrices") {
  Rng rng(8);
  for (Index n : {7, 60, 300}) {
    Matrix m(n, n);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto res = linalg::spectral_radius(m, 1e-12, 20000, 12, 3);
    CHECK(res.converged);
    CHECK(std::abs(res.radius - dense_radius(m)) < 1e-8 * dense_radius(m));
  }
}

TEST_CASE("build is seed deterministic and invertible") {
  const Reservoir a = build(40, 0.5, 0.99, 123);
  const Reservoir b = build(40, 0.5, 0.99, 123);
  CHECK(a.input_matrix() == b.input_matrix());
  CHECK(a.recurrence_matrix() == b.recurrence_matrix());
  CHECK(linalg::reciprocal_condition(a.input_matrix()) > 1e-12);
  CHECK(linalg::reciprocal_condition(a.recurrence_matrix()) > 1e-12);
  CHECK(a.input_matrix().cwiseAbs().maxCoeff() <= 1.0);
  CHECK_THROWS_AS(build(0, 0.5, 0.99, 1), PreconditionError);
  CHECK_THROWS_AS(build(4, 0.0, 0.99, 1), PreconditionError);
  CHECK_THROWS_AS(build(4, 0.5, 0.0, 1), PreconditionError);
}

TEST_CASE("step basics") {
  const Reservoir r = build(10, 0.5, 0.99, 1);
  CHECK(r.step(Vector::Zero(10), Vector::Zero(10)).cwiseAbs().maxCoeff() == 0.0);
  const Reservoir s(Matrix::Ones(1, 1), Matrix::Ones(1, 1), 1.0, 0.99, 0);
  CHECK(s.step(Vector::Constant(1, 0.5), Vector::Zero(1))(0) == doctest::Approx(0.4621171573).epsilon(1e-10));
  Vector bad = Vector::Zero(10);
  bad(3) = std::nan("");
  CHECK_THROWS(r.step(bad, Vector::Zero(10)));
}

TEST_CASE("step equals a straight-line re-evaluation") {
  const Index n = 20;
  const Reservoir r = build(n, 0.3, 0.8, 9);
  Rng rng(4);
  const Matrix& a = r.input_matrix();
  const Matrix& b = r.recurrence_matrix();
  for (int trial = 0; trial < 5; ++trial) {
    const Vector u = uniform(n, rng);
    const Vector x = uniform(n, rng);
    const Vector got = r.step(u, x);
    for (Index i = 0; i < n; ++i) {
      long double pre = 0;
      for (Index j = 0; j < n; ++j) pre += static_cast<long double>(a(i, j)) * u(j) + 0.8L * b(i, j) * x(j);
      const long double want = (1.0L - 0.3L) * x(i) + 0.3L * std::tanh(pre);
      CHECK(std::abs(static_cast<long double>(got(i)) - want) < 1e-14L);
    }
  }
}

TEST_CASE("pad_input") {
  Vector v(1);
  v << 0.3;
  const Vector p = pad_input(v, 3);
  CHECK(p.size() == 3);
  CHECK(p(0) == 0.3);
  CHECK(p(1) == 0.0);
  CHECK(p(2) == 0.0);
  const Vector w = Vector::LinSpaced(4, -1, 1);
  CHECK(pad_input(w, 4) == w);
  CHECK(pad_input(w, 9).norm() == w.norm());
  CHECK_THROWS_AS(pad_input(w, 3), PreconditionError);
}

TEST_CASE("drive alignment and confinement") {
  const Reservoir r = build(30, 0.5, 0.99, 2);
  TimeSeries zero;
  zero.values = Matrix::Zero(20, 3);
  CHECK(drive(r, zero, 5).states.cwiseAbs().maxCoeff() == 0.0);

  const TimeSeries in = lorenz_inputs(300);
  const StateTrajectory t = drive(r, in, 50);
  REQUIRE(t.length() == in.length() + 1);
  for (Index n = 0; n < in.length(); ++n) {
    const Vector next = r.step(in.row(n), t.state(n));
    CHECK((next - t.state(n + 1)).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(t.states.cwiseAbs().maxCoeff() < 1.0);
  CHECK(t.post_washout().rows() == in.length() + 1 - 50);
  CHECK_THROWS_AS(drive(r, in, 300), PreconditionError);
}

TEST_CASE("invert_input round trip and domain errors") {
  const Index n = 100;
  const Reservoir r = build(n, 0.5, 0.99, 12);
  CHECK(r.invert_input(Vector::Zero(n), Vector::Zero(n)).cwiseAbs().maxCoeff() == 0.0);
  Rng rng(6);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Vector u = uniform(n, rng) / std::sqrt(static_cast<double>(n));
    const Vector x = uniform(n, rng);
    worst = std::max(worst, (r.invert_input(x, r.step(u, x)) - u).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);

  const Vector x = uniform(n, rng);
  Vector next = r.step(Vector::Zero(n), x);
  next(7) = 0.5 * x(7) + 0.5;
  try {
    (void)r.invert_input(x, next);
    FAIL("expected a domain error");
  } catch (const InversionDomainError& e) {
    CHECK(e.component() == 7);
  }
}

TEST_CASE("low-dimensional inputs are zero padded for inversion") {
  const Reservoir r = build(50, 0.5, 0.99, 3);
  Vector u(3);
  u << 0.2, -0.4, 0.1;
  const Vector x = Vector::Constant(50, 0.1);
  const Vector back = r.invert_input(x, r.step(u, x));
  CHECK((back.head(3) - u).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(back.tail(47).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("verify_usp: exact (1-a) contraction when alpha is zero") {
  const Reservoir r = Reservoir(build(40, 0.5, 0.99, 1).input_matrix(), build(40, 0.5, 0.99, 1).recurrence_matrix(),
                                0.5, 0.0, 1);
  const UspReport rep = verify_usp(r, lorenz_inputs(200), 3, 1e-6);
  REQUIRE(rep.gap_curve.size() > 40);
  for (std::size_t k = 1; k < 40; ++k)
    CHECK(rep.gap_curve[k] == doctest::Approx(0.5 * rep.gap_curve[k - 1]).epsilon(1e-9));
  CHECK(rep.converged);
}

TEST_CASE("verify_usp converges at alpha 0.99 and fails at alpha 50") {
  const TimeSeries in = lorenz_inputs(600);
  CHECK(verify_usp(build(200, 0.5, 0.99, 4), in, 2, 1e-6).converged);
  const UspReport bad = verify_usp(build(200, 0.5, 50.0, 4), in, 2, 1e-6);
  CHECK_FALSE(bad.converged);
  CHECK(bad.gap_curve.back() > 1e-3);
  TimeSeries shorter;
  shorter.values = in.values.topRows(50);
  CHECK_THROWS_AS(verify_usp(build(20, 0.5, 0.99, 4), shorter, 2, 1e-6), PreconditionError);
}

TEST_CASE("verify_si") {
  const Reservoir r = build(60, 0.5, 0.99, 21);
  CHECK(verify_si(r, 50, 1e-8).passed);
  Matrix a = r.input_matrix();
  a.col(0).setZero();
  const Reservoir broken(a, r.recurrence_matrix(), 0.5, 0.99, 0);
  const SiReport rep = verify_si(broken, 50, 1e-8);
  CHECK_FALSE(rep.passed);
  CHECK(rep.max_error > 1e-8);
  CHECK_THROWS_AS(verify_si(r, 0, 1e-8), PreconditionError);
}

TEST_CASE("serialization reproduces step bit for bit") {
  const Reservoir r = build(25, 0.4, 0.9, 77);
  const Reservoir back = deserialize_reservoir(serialize(r, "cafe"));
  CHECK(back.seed() == 77);
  CHECK(back.leak() == 0.4);
  CHECK(back.alpha() == 0.9);
  Rng rng(1);
  const Vector u = uniform(25, rng), x = uniform(25, rng);
  CHECK((back.step(u, x) - r.step(u, x)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(deserialize_reservoir("rcn-model 1\n"));
}

}  // TEST_SUITE
