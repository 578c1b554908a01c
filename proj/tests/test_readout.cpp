#include "rcn/readout.hpp"
#include "rcn/reservoir.hpp"
#include "rcn/systems.hpp"

#include <doctest.h>

#include <cmath>

using namespace rcn;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Dataset linear_data(Index m, Index in, Index out, Rng& rng, double noise = 0.0) {
  Dataset d;
  d.features = random_matrix(m, in, rng);
  const Matrix w = random_matrix(out, in, rng, 0.5);
  const Vector b = random_matrix(out, 1, rng, 0.2);
  d.targets = (d.features * w.transpose()).rowwise() + b.transpose();
  if (noise > 0) d.targets += random_matrix(m, out, rng, noise);
  d.times.resize(static_cast<std::size_t>(m));
  return d;
}

struct LorenzFixture {
  Reservoir r = build(40, 0.5, 0.99, 11);
  TimeSeries inputs;
  StateTrajectory traj;
  PcaBasis basis;

  LorenzFixture() {
    SystemSpec s;
    s.kind = SystemKind::lorenz;
    s.n_samples = 700;
    s.seed = 2;
    s.transient_discard = 100;
    ObservationSpec o;
    o.scale = 0.01;
    o.noise_sigma = 0.01;
    inputs = observe(generate(s), o, 3);
    traj = drive(r, inputs, 100);
    basis = fit_pca(traj);
  }
};

}  // namespace

TEST_SUITE("readout") {

TEST_CASE("pca of orthonormal rows") {
  const PcaBasis b = fit_pca(Matrix::Identity(6, 6), false);
  CHECK((b.singular_values.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((b.P.transpose() * b.P - Matrix::Identity(6, 6)).norm() < 1e-8);
  CHECK_FALSE(b.centered());
}

TEST_CASE("pca is lossless and sorted") {
  Rng rng(3);
  const Matrix x = random_matrix(80, 12, rng);
  for (bool center : {false, true}) {
    const PcaBasis b = fit_pca(x, center);
    CHECK((b.P.transpose() * b.P - Matrix::Identity(12, 12)).norm() < 1e-8);
    for (Index i = 1; i < 12; ++i) CHECK(b.singular_values(i) <= b.singular_values(i - 1));
    const Matrix z = project_rows(b, x);
    Matrix back = z * b.P.transpose();
    if (center) back.rowwise() += b.col_means.transpose();
    CHECK((back - x).norm() / x.norm() < 1e-8);
  }
  CHECK_THROWS_AS(fit_pca(Matrix::Ones(20, 4)), Error);
  CHECK_THROWS_AS(fit_pca(random_matrix(3, 5, rng)), PreconditionError);
}

TEST_CASE("project and unproject") {
  Rng rng(5);
  PcaBasis id;
  id.P = Matrix::Identity(5, 5);
  const Vector x = random_matrix(5, 1, rng);
  CHECK(project(id, x) == x);
  const PcaBasis b = fit_pca(random_matrix(40, 5, rng), false);
  CHECK(std::abs(project(b, x).norm() - x.norm()) < 1e-10);
  const PcaBasis c = fit_pca(random_matrix(40, 5, rng), true);
  CHECK((unproject(c, project(c, x)) - x).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS(project(c, Vector::Zero(4)));
}

TEST_CASE("a 3-state trajectory gives 2 training pairs") {
  const Reservoir r = build(2, 0.5, 0.99, 1);
  TimeSeries in;
  in.values = (Matrix(3, 1) << 0.1, -0.2, 0.3).finished();
  StateTrajectory t;
  t.states = drive_states<double>(r, in.values.topRows(2), Vector::Zero(2));
  t.washout = 0;
  PcaBasis id;
  id.P = Matrix::Identity(2, 2);
  const Dataset d = make_dataset(t, id, in, TargetKind::next_input);
  CHECK(d.size() == 2);
  CHECK(d.targets(0, 0) == -0.2);
  CHECK(d.targets(1, 0) == 0.3);
  TimeSeries wrong;
  wrong.values = Matrix::Zero(7, 1);
  CHECK_THROWS_AS(make_dataset(t, id, wrong, TargetKind::next_input), Error);
}

TEST_CASE("dataset alignment: SI inversion of a pair gives the previous input") {
  LorenzFixture f;
  const Dataset d = make_dataset(f.traj, f.basis, f.inputs, TargetKind::next_input);
  CHECK(d.size() == f.inputs.length() - 1 - 100);
  for (std::size_t i = 0; i < d.times.size(); i += 37) {
    const Index n = d.times[i];
    const Vector u = f.r.invert_input(f.traj.state(n - 1), f.traj.state(n));
    CHECK((u.head(3) - f.inputs.row(n - 1)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((d.targets.row(static_cast<Index>(i)).transpose() - f.inputs.row(n)).cwiseAbs().maxCoeff() == 0.0);
  }
  const Dataset full = make_dataset(f.traj, f.basis, f.inputs, TargetKind::full_state, 0.01);
  CHECK(full.targets.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(full.targets(0, 0) == doctest::Approx(0.01 * (*f.inputs.hidden_truth)(101, 0)));
}

TEST_CASE("backprop matches central differences on random small networks") {
  Rng rng(2024);
  std::uniform_int_distribution<int> width(1, 6);
  const Activation acts[] = {Activation::tanh, Activation::linear, Activation::tanh};
  for (int net = 0; net < 20; ++net) {
    Architecture arch;
    arch.hidden.clear();
    const int depth = net % 3;
    for (int l = 0; l < depth; ++l) arch.hidden.push_back(width(rng));
    arch.hidden_activation = acts[net % 3];
    const Index in = width(rng), out = width(rng), m = 7;
    Regressor reg = Regressor::initialize(in, out, arch, static_cast<std::uint64_t>(net));
    Vector theta = reg.parameters();
    theta += random_matrix(theta.size(), 1, rng, 0.1);
    reg.set_parameters(theta);
    const Matrix x = random_matrix(m, in, rng), y = random_matrix(m, out, rng);
    const Vector g = reg.mse_gradient(x, y);
    Vector fd(theta.size());
    const double h = 1e-5;
    for (Index i = 0; i < theta.size(); ++i) {
      Vector tp = theta, tm = theta;
      tp(i) += h;
      tm(i) -= h;
      reg.set_parameters(tp);
      const double fp = reg.mse(x, y);
      reg.set_parameters(tm);
      const double fm = reg.mse(x, y);
      fd(i) = (fp - fm) / (2 * h);
    }
    reg.set_parameters(theta);
    CHECK((g - fd).norm() / std::max(fd.norm(), 1e-12) <= 1e-4);
  }
}

TEST_CASE("linear network reaches the least-squares optimum on linear data") {
  Rng rng(8);
  const Dataset d = linear_data(400, 6, 2, rng);
  Architecture lin;
  lin.hidden.clear();
  AdamConfig opt;
  opt.learning_rate = 1e-2;
  opt.epochs = 600;
  const Regressor reg = train_regressor(d, lin, opt, 1);
  CHECK(reg.train_mse < 1e-6);
  CHECK(reg.training_log.size() == 600);
}

TEST_CASE("zero targets train to zero output") {
  Rng rng(9);
  Dataset d = linear_data(200, 4, 2, rng);
  d.targets.setZero();
  AdamConfig opt;
  opt.learning_rate = 1e-2;
  opt.epochs = 2000;
  Architecture linear;
  linear.hidden.clear();
  CHECK(train_regressor(d, linear, opt, 4).train_mse < 1e-10);
  // With a hidden layer Adam stalls near its epsilon scale, still tiny.
  Architecture arch;
  arch.hidden = {8};
  CHECK(train_regressor(d, arch, opt, 4).train_mse < 1e-5);
}

TEST_CASE("training is deterministic for a fixed seed") {
  Rng rng(10);
  const Dataset d = linear_data(150, 5, 1, rng, 0.1);
  Architecture arch;
  arch.hidden = {16, 16};
  AdamConfig opt;
  opt.epochs = 20;
  const Regressor a = train_regressor(d, arch, opt, 99);
  const Regressor b = train_regressor(d, arch, opt, 99);
  CHECK(a.training_log == b.training_log);
  CHECK(a.parameters() == b.parameters());
  const Regressor c = train_regressor(d, arch, opt, 100);
  CHECK(a.parameters() != c.parameters());
}

TEST_CASE("non-finite loss aborts training") {
  Rng rng(12);
  Dataset d = linear_data(50, 3, 1, rng);
  d.targets(4, 0) = std::numeric_limits<double>::infinity();
  Architecture arch;
  arch.hidden = {4};
  AdamConfig opt;
  opt.epochs = 3;
  CHECK_THROWS_AS(train_regressor(d, arch, opt, 1), DivergenceError);
}

TEST_CASE("ridge: exact fit, shrinkage and singularity") {
  Rng rng(13);
  const Dataset d = linear_data(100, 8, 3, rng);
  const Regressor r0 = fit_ridge(d, 0.0);
  CHECK((r0.predict_rows(d.features) - d.targets).cwiseAbs().maxCoeff() < 1e-8);
  const Regressor big = fit_ridge(d, 1e12);
  CHECK(big.layers()[0].weights.cwiseAbs().maxCoeff() < 1e-6);
  Dataset dup = d;
  dup.features.col(1) = dup.features.col(0);
  CHECK_THROWS_AS(fit_ridge(dup, 0.0), Error);
  CHECK_NOTHROW(fit_ridge(dup, 1e-3));
}

TEST_CASE("ridge on the Lorenz dataset beats gradient descent on its own objective") {
  LorenzFixture f;
  const Dataset d = make_dataset(f.traj, f.basis, f.inputs, TargetKind::next_input);
  const double lambda = 1e-6;
  const Regressor ridge = fit_ridge(d, lambda);
  // Full-batch gradient descent on the same objective from zero weights.
  Regressor gd = ridge;
  gd.set_parameters(Vector::Zero(ridge.parameter_count()));
  const Index m = d.size();
  Matrix g(m, d.features.cols() + 1);
  g << d.features, Vector::Ones(m);
  const double lip = 2.0 * (g.transpose() * g).eigenvalues().real().maxCoeff() + 2 * lambda;
  for (int it = 0; it < 3000; ++it) {
    Vector grad = gd.mse_gradient(d.features, d.targets) * static_cast<double>(d.targets.size());
    grad += 2 * lambda * gd.parameters();
    gd.set_parameters(gd.parameters() - grad / lip);
  }
  CHECK(ridge_objective(ridge, d, lambda) <= ridge_objective(gd, d, lambda) + 1e-8);
}

TEST_CASE("sign flips of the PCA basis leave the ridge optimum unchanged") {
  LorenzFixture f;
  PcaBasis flipped = f.basis;
  for (Index j = 0; j < flipped.P.cols(); j += 2) flipped.P.col(j) *= -1.0;
  const Dataset a = make_dataset(f.traj, f.basis, f.inputs, TargetKind::next_input);
  const Dataset b = make_dataset(f.traj, flipped, f.inputs, TargetKind::next_input);
  const double ra = fit_ridge(a, 1e-6).train_mse, rb = fit_ridge(b, 1e-6).train_mse;
  CHECK(std::abs(ra - rb) <= 1e-10 * std::max(ra, 1e-12) + 1e-14);
}

TEST_CASE("apply_gamma composes projection and regressor") {
  Rng rng(14);
  const Index n = 4;
  PcaBasis id;
  id.P = Matrix::Identity(n, n);
  Layer l;
  l.weights = random_matrix(2, 2 * n, rng);
  l.bias = random_matrix(2, 1, rng);
  ReadoutModel m;
  m.basis = id;
  m.regressor = Regressor({l});
  const Vector xp = random_matrix(n, 1, rng), xc = random_matrix(n, 1, rng);
  Vector f(2 * n);
  f << xp, xc;
  CHECK((apply_gamma(m, xp, xc) - (l.weights * f + l.bias)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS(apply_gamma(m, Vector::Zero(3), xc));
}

TEST_CASE("held-in pairs are reproduced within the training residual") {
  LorenzFixture f;
  const Dataset d = make_dataset(f.traj, f.basis, f.inputs, TargetKind::next_input);
  const ReadoutModel m = make_model(f.basis, fit_ridge(d, 1e-6), d, TargetKind::next_input, 1.0);
  double sq = 0;
  for (Index i = 0; i < d.size(); ++i) {
    const Index n = d.times[static_cast<std::size_t>(i)];
    sq += (apply_gamma(m, f.traj.state(n - 1), f.traj.state(n)) - d.targets.row(i).transpose()).squaredNorm();
  }
  CHECK(sq / static_cast<double>(d.targets.size()) == doctest::Approx(m.regressor.train_mse).epsilon(1e-8));
}

TEST_CASE("model serialization round trip is bit exact") {
  LorenzFixture f;
  const Dataset d = make_dataset(f.traj, f.basis, f.inputs, TargetKind::next_input);
  Architecture arch;
  arch.hidden = {8};
  AdamConfig opt;
  opt.epochs = 3;
  const ReadoutModel m = make_model(f.basis, train_regressor(d, arch, opt, 5), d, TargetKind::next_input, 1.0);
  const ReadoutModel back = deserialize_model(serialize(m, "beef"));
  CHECK(back.regressor.training_log == m.regressor.training_log);
  for (Index n = 200; n < 260; ++n)
    CHECK((apply_gamma(back, f.traj.state(n - 1), f.traj.state(n)) - apply_gamma(m, f.traj.state(n - 1), f.traj.state(n)))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  CHECK(back.target_lo == m.target_lo);
}

}  // TEST_SUITE
