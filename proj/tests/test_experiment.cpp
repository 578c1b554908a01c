#include "rcn/experiment.hpp"
#include "rcn/textio.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace rcn;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config text round trip") {
  for (const auto& name : recipe_names()) {
    CAPTURE(name);
    const ExperimentConfig c = recipe(name);
    CHECK_NOTHROW(c.validate());
    const std::string text = to_text(c);
    CHECK(to_text(parse_config(text)) == text);
    CHECK(config_hash(parse_config(text)) == config_hash(c));
    CHECK(config_hash(c).size() == 16);
  }
}

TEST_CASE("hash ignores output_dir and tracks everything else") {
  ExperimentConfig c = recipe("logistic");
  const std::string h = config_hash(c);
  c.output_dir = "/tmp/elsewhere";
  CHECK(config_hash(c) == h);
  apply_setting(c, "training.epochs", "7");
  CHECK(config_hash(c) != h);
}

TEST_CASE("shipped recipe files match the built-in recipes") {
  for (const auto& name : recipe_names()) {
    CAPTURE(name);
    CHECK(slurp(std::string(RCN_SOURCE_DIR) + "/recipes/" + name + ".cfg") == recipe_text(name));
  }
}

TEST_CASE("system.kind resets parameters before explicit ones apply") {
  const ExperimentConfig c = parse_config("system.param.r = 3.9\nsystem.kind = logistic\n");
  CHECK(c.system.kind == SystemKind::logistic);
  CHECK(c.system.param("r") == 3.9);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("no.such.key = 1\n"), PreconditionError);
  CHECK_THROWS_AS(parse_config("training.regressor = svm\n"), PreconditionError);
  ExperimentConfig c = recipe("logistic");
  c.training.n_train = 0;
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c = recipe("logistic");
  c.reservoir.n = 5000;
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  CHECK_THROWS_AS(recipe("fig9"), PreconditionError);
}

TEST_CASE("evaluate a perfect forecast") {
  ExperimentConfig c = recipe("logistic");
  c.forecast.horizon = 2000;
  c.reservoir.n = 50;
  c.training.n_train = 200;
  const ExperimentData d = make_data(c);
  const Matrix truth = d.clean.values.bottomRows(2000);
  const EvalReport r = evaluate(c, truth, truth, d.observed.values.topRows(d.train_length));
  CHECK(r.valid_time == 2000);
  CHECK(r.density_distance == 0.0);
  CHECK(r.bounded);
}

TEST_CASE("make_data shapes and the clean twin") {
  ExperimentConfig c = recipe("lorenz");
  c.reservoir.n = 50;
  c.training.washout = 10;
  c.training.n_train = 100;
  c.forecast.horizon = 300;
  c.metrics.reference_length = 0;
  const ExperimentData d = make_data(c);
  CHECK(d.train_length == 111);
  CHECK(d.observed.length() >= 411);
  CHECK(d.clean.length() == d.observed.length());
  const Matrix diff = d.observed.values - d.clean.values;
  const double sd = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
  CHECK(sd == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("small pipeline end to end") {
  ExperimentConfig c = recipe("logistic");
  c.reservoir.n = 40;
  c.training.n_train = 300;
  c.training.washout = 100;
  c.training.optimizer.epochs = 5;
  c.forecast.horizon = 500;
  c.metrics.reference_length = 0;
  c.output_dir = "test_pipeline_out";
  const PipelineResult r = run_pipeline(c);
  CHECK(r.report.config_hash == config_hash(c));
  const EvalReport back = eval_report_from_text(slurp(c.output_dir + "/report.txt"));
  CHECK(back.valid_time == r.report.valid_time);
  CHECK(slurp(c.output_dir + "/forecast.csv").find("config_hash: " + config_hash(c)) != std::string::npos);
}

}  // TEST_SUITE
