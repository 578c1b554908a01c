// causal_embed: command-line front end for the experiment pipeline.

#include "rcn/experiment.hpp"
#include "rcn/plot.hpp"
#include "rcn/textio.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace rcn;

namespace {

struct Common {
  std::string config;
  std::string recipe;
  std::string output;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config file")->check(CLI::ExistingFile);
  app->add_option("--recipe", c.recipe, "shipped recipe (lorenz, lorenz_sine, logistic, henon, pomeau)");
  app->add_option("--output", c.output, "output directory");
  app->add_option("--seed", c.seed, "global seed override");
  app->add_option("--set", c.sets, "key=value override, repeatable");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config.empty()) cfg = parse_config(textio::read_file(c.config));
  else if (!c.recipe.empty()) cfg = recipe(c.recipe);
  else throw Error("either --config or --recipe is required", "config");
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + s + "'", "config");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) cfg.global_seed = *c.seed;
  if (const char* env = std::getenv("CAUSAL_EMBED_OUTPUT"); env && *env) cfg.output_dir = env;
  if (!c.output.empty()) cfg.output_dir = c.output;
  else if (c.config.empty() && !std::getenv("CAUSAL_EMBED_OUTPUT") && cfg.output_dir == "runs")
    cfg.output_dir = (fs::path("runs") / cfg.name).string();
  return cfg;
}

std::string out_path(const ExperimentConfig& cfg, const std::string& file) {
  return (fs::path(cfg.output_dir) / file).string();
}

// config_hash recorded in a text artifact: a `config_hash X` line in
// reservoir/model files or a `# config_hash: X` comment in CSVs.
std::string artifact_hash(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  for (int i = 0; i < 4 && std::getline(in, line); ++i) {
    const std::string t = textio::trim(line);
    if (t.rfind("config_hash ", 0) == 0) return textio::trim(t.substr(12));
    if (!t.empty() && t.front() == '#') {
      const auto c = csv_comments(t + '\n');
      if (auto it = c.find("config_hash"); it != c.end()) return it->second;
    }
  }
  return {};
}

void check_hash(const std::string& what, const std::string& found, const std::string& expected, bool force) {
  if (found.empty() || found == expected) return;
  if (force) {
    std::cerr << "warning: " << what << " has config hash " << found << ", expected " << expected << '\n';
    return;
  }
  throw Error(what + " was produced by config " + found + ", not " + expected + " (use --force to override)",
              "config");
}

std::string states_text(const StateTrajectory& t, const std::string& hash) {
  std::ostringstream os;
  os << "rcn-states 1\nconfig_hash " << hash << '\n'
     << t.states.rows() << ' ' << t.states.cols() << ' ' << t.washout << '\n';
  textio::write_matrix(os, t.states);
  return os.str();
}

StateTrajectory read_states(const std::string& text) {
  std::istringstream in(text);
  std::string tag, key, hash;
  int version = 0;
  in >> tag >> version;
  if (tag != "rcn-states" || version != 1) throw Error("not a states file", "drive");
  in >> key >> hash;
  Index rows = 0, cols = 0;
  std::size_t washout = 0;
  in >> rows >> cols >> washout;
  StateTrajectory t;
  t.states = textio::read_matrix(in, rows, cols);
  t.washout = washout;
  return t;
}

Reservoir reservoir_for(const ExperimentConfig& cfg, const std::string& path, const std::string& hash, bool force) {
  if (path.empty()) return make_reservoir(cfg);
  const std::string text = textio::read_file(path);
  check_hash(path, artifact_hash(text), hash, force);
  return deserialize_reservoir(text);
}

TimeSeries read_series(const std::string& path, const std::string& hash, bool force) {
  const std::string text = textio::read_file(path);
  check_hash(path, artifact_hash(text), hash, force);
  return from_csv(text);
}

void print_report(const EvalReport& r) { std::cout << to_text(r); }

int run(int argc, char** argv) {
  CLI::App app{"Reservoir forecasting experiments: generate, drive, train, forecast, evaluate."};
  app.require_subcommand(1);
  Common common;
  bool force = false;
  std::string series_path, states_path, reservoir_path, model_path, forecast_path, truth_path, csv_path, svg_path;
  std::string plot_kind = "line", column = "u1";

  auto* gen = app.add_subcommand("generate", "simulate the system and write the observed series");
  add_common(gen, common);

  auto* drv = app.add_subcommand("drive", "drive the reservoir with a series and store its states");
  add_common(drv, common);
  drv->add_option("--series", series_path, "series CSV")->required()->check(CLI::ExistingFile);
  drv->add_option("--reservoir", reservoir_path, "reservoir file (built from the config when absent)");
  drv->add_flag("--force", force, "accept artifacts from a different config");

  auto* trn = app.add_subcommand("train", "fit Gamma on driven states");
  add_common(trn, common);
  trn->add_option("--series", series_path, "series CSV used as targets")->required()->check(CLI::ExistingFile);
  trn->add_option("--states", states_path, "states file from drive")->required()->check(CLI::ExistingFile);
  trn->add_flag("--force", force, "accept artifacts from a different config");

  auto* fc = app.add_subcommand("forecast", "run the closed loop from the end of a series");
  add_common(fc, common);
  fc->add_option("--series", series_path, "warmup series CSV")->required()->check(CLI::ExistingFile);
  fc->add_option("--reservoir", reservoir_path, "reservoir file")->check(CLI::ExistingFile);
  fc->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  fc->add_flag("--force", force, "accept artifacts from a different config");

  auto* ev = app.add_subcommand("evaluate", "score a forecast CSV against a truth CSV");
  add_common(ev, common);
  ev->add_option("--forecast", forecast_path, "forecast CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--truth", truth_path, "truth CSV (clean continuation)")->required()->check(CLI::ExistingFile);
  ev->add_flag("--force", force, "accept artifacts from a different config");

  auto* ver = app.add_subcommand("verify", "run the USP and SI gates on the configured reservoir");
  add_common(ver, common);
  ver->add_option("--reservoir", reservoir_path, "reservoir file")->check(CLI::ExistingFile);
  ver->add_flag("--force", force, "accept artifacts from a different config");

  auto* pipe = app.add_subcommand("pipeline", "run every stage and write all artifacts");
  add_common(pipe, common);

  auto* plt = app.add_subcommand("plot", "render a CSV as SVG");
  plt->add_option("--csv", csv_path, "series, forecast or density CSV")->required()->check(CLI::ExistingFile);
  plt->add_option("--kind", plot_kind, "line, scatter or density")
      ->check(CLI::IsMember({"line", "scatter", "density"}));
  plt->add_option("--column", column, "column to plot (line and scatter)");
  plt->add_option("--out", svg_path, "SVG path (default: CSV path with .svg)");

  auto* lst = app.add_subcommand("recipes", "list or print the shipped recipes");
  std::string show;
  lst->add_option("name", show, "recipe to print");

  CLI11_PARSE(app, argc, argv);

  auto log = [](const std::string& s) { std::cerr << s << '\n'; };

  if (*lst) {
    if (show.empty())
      for (const auto& n : recipe_names()) std::cout << n << '\n';
    else std::cout << recipe_text(show);
    return 0;
  }

  if (*plt) {
    const std::string text = textio::read_file(csv_path);
    if (svg_path.empty()) svg_path = fs::path(csv_path).replace_extension(".svg").string();
    std::string svg;
    if (plot_kind == "density") {
      plot::Series s;
      std::istringstream in(text);
      std::string line;
      bool header = true;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
          header = false;
          continue;
        }
        const auto parts = textio::split(line, ',');
        s.x.push_back(textio::parse_double(parts.at(0)));
        s.y.push_back(textio::parse_double(parts.at(1)));
      }
      svg = plot::lines({"density", "value", "mass"}, {s});
    } else {
      const bool is_forecast = text.find(",phase") != std::string::npos;
      TimeSeries warm, pred;
      if (is_forecast) {
        auto f = read_forecast_csv(text);
        warm = std::move(f.warmup);
        pred = std::move(f.forecast);
      } else {
        warm = from_csv(text);
      }
      auto col = [&](const TimeSeries& t) -> Vector {
        if (t.length() == 0) return {};
        if (column.size() >= 2 && (column[0] == 'u' || column[0] == 'w')) {
          const auto k = static_cast<Index>(textio::parse_int(column.substr(1))) - 1;
          const Matrix& m = column[0] == 'u' ? t.values : *t.hidden_truth;
          if (column[0] == 'w' && !t.hidden_truth) throw Error("no hidden truth columns", "plot");
          if (k < 0 || k >= m.cols()) throw Error("no column " + column, "plot");
          return m.col(k);
        }
        throw Error("column must look like u1 or w2", "plot");
      };
      std::vector<plot::Series> series;
      Index offset = 0;
      for (const TimeSeries* t : {&warm, &pred}) {
        const Vector v = col(*t);
        plot::Series s;
        s.label = t == &warm ? (is_forecast ? "warmup" : column) : "forecast";
        for (std::size_t i : plot::thin(static_cast<std::size_t>(std::max<Index>(v.size() - 1, 0)), 5000)) {
          const auto n = static_cast<Index>(i);
          if (plot_kind == "line") {
            s.x.push_back(static_cast<double>(offset + n));
            s.y.push_back(v(n));
          } else {
            s.x.push_back(v(n));
            s.y.push_back(v(n + 1));
          }
        }
        offset += v.size();
        if (!s.x.empty()) series.push_back(std::move(s));
      }
      svg = plot_kind == "line" ? plot::lines({column, "step", column}, series)
                                : plot::scatter({column + " delay portrait", column + "(n)", column + "(n+1)"}, series);
    }
    textio::write_file(svg_path, svg);
    std::cout << svg_path << '\n';
    return 0;
  }

  ExperimentConfig cfg = load(common);
  cfg.validate();
  const std::string hash = config_hash(cfg);

  if (*pipe) {
    const PipelineResult res = run_pipeline(cfg, log);
    print_report(res.report);
    std::cerr << "artifacts in " << res.output_dir << '\n';
    return 0;
  }

  if (*gen) {
    const ExperimentData data = make_data(cfg);
    const auto l = static_cast<Index>(data.train_length);
    TimeSeries train = data.observed;
    train.values = data.observed.values.topRows(l);
    if (train.hidden_truth) train.hidden_truth = data.observed.hidden_truth->topRows(l);
    TimeSeries truth = data.clean;
    truth.values = data.clean.values.bottomRows(data.clean.length() - l);
    if (truth.hidden_truth) truth.hidden_truth = data.clean.hidden_truth->bottomRows(data.clean.length() - l);
    const std::string tag = "config_hash: " + hash;
    textio::write_file(out_path(cfg, "series.csv"), to_csv(train, tag));
    textio::write_file(out_path(cfg, "truth.csv"), to_csv(truth, tag));
    std::cout << out_path(cfg, "series.csv") << '\n' << out_path(cfg, "truth.csv") << '\n';
    return 0;
  }

  if (*ver) {
    const Reservoir r = reservoir_for(cfg, reservoir_path, hash, force);
    const ExperimentData data = make_data(cfg);
    TimeSeries train = data.observed;
    train.values = train.values.topRows(static_cast<Index>(data.train_length)).eval();
    const GateResult g = run_gates(cfg, r, train);
    const auto& gap = g.usp.gap_curve;
    std::cout << "usp gap tail:";
    for (std::size_t i = gap.size() > 5 ? gap.size() - 5 : 0; i < gap.size(); ++i)
      std::cout << ' ' << textio::format_double(gap[i]);
    std::cout << "\nusp " << (g.usp.converged ? "converged" : "NOT converged") << " (tol "
              << textio::format_double(cfg.gates.usp_tol) << ")\n";
    std::cout << "si " << (g.si.passed ? "pass" : "FAIL") << " (max error " << textio::format_double(g.si.max_error)
              << ")\n";
    return g.usp.converged && g.si.passed ? 0 : 3;
  }

  if (*drv) {
    const TimeSeries series = read_series(series_path, hash, force);
    const Reservoir r = reservoir_for(cfg, reservoir_path, hash, force);
    if (reservoir_path.empty()) textio::write_file(out_path(cfg, "reservoir.txt"), serialize(r, hash));
    const StateTrajectory t = drive(r, series, cfg.training.washout);
    textio::write_file(out_path(cfg, "states.txt"), states_text(t, hash));
    std::cout << out_path(cfg, "states.txt") << '\n';
    return 0;
  }

  if (*trn) {
    TimeSeries series = read_series(series_path, hash, force);
    const std::string st = textio::read_file(states_path);
    check_hash(states_path, artifact_hash(st), hash, force);
    StateTrajectory t = read_states(st);
    t.inputs = series;
    PcaBasis basis = fit_pca(t, cfg.training.center);
    auto fit = [&](const Dataset& d, const char* stream) {
      if (cfg.training.regressor == RegressorKind::ridge) return fit_ridge(d, cfg.training.ridge_lambda);
      return train_regressor(d, cfg.training.architecture, cfg.training.optimizer,
                             derive_seed(cfg.global_seed, stream));
    };
    const Dataset d = make_dataset(t, basis, series, TargetKind::next_input);
    const ReadoutModel m = make_model(basis, fit(d, "train"), d, TargetKind::next_input, 1.0);
    textio::write_file(out_path(cfg, "model.txt"), serialize(m, hash));
    std::cerr << "train mse " << textio::format_double(m.regressor.train_mse) << '\n';
    if (cfg.training.full_state) {
      const Dataset f = make_dataset(t, basis, series, TargetKind::full_state, cfg.training.full_scale);
      const ReadoutModel mf = make_model(basis, fit(f, "train_full"), f, TargetKind::full_state, cfg.training.full_scale);
      textio::write_file(out_path(cfg, "model_full.txt"), serialize(mf, hash));
    }
    std::cout << out_path(cfg, "model.txt") << '\n';
    return 0;
  }

  if (*fc) {
    const TimeSeries series = read_series(series_path, hash, force);
    const Reservoir r = reservoir_for(cfg, reservoir_path, hash, force);
    const std::string mt = textio::read_file(model_path);
    check_hash(model_path, artifact_hash(mt), hash, force);
    TrainedModels m;
    m.gamma = deserialize_model(mt);
    m.trajectory = drive(r, series, cfg.training.washout);
    const ForecastRun run = run_forecast(cfg, r, m, series);
    textio::write_file(out_path(cfg, "forecast.csv"),
                       forecast_csv(series, run.predicted, std::nullopt, "config_hash: " + hash));
    std::cout << out_path(cfg, "forecast.csv") << '\n';
    return 0;
  }

  if (*ev) {
    const std::string ft = textio::read_file(forecast_path);
    const std::string tt = textio::read_file(truth_path);
    const std::string fh = artifact_hash(ft), th = artifact_hash(tt);
    check_hash(forecast_path, fh, th.empty() ? hash : th, force);
    if (!common.config.empty() || !common.recipe.empty()) check_hash(truth_path, th, hash, force);
    const ForecastCsv f = read_forecast_csv(ft);
    // A forecast CSV may serve as truth too; its forecast rows are used.
    const TimeSeries truth = tt.find(",phase") != std::string::npos ? read_forecast_csv(tt).forecast : from_csv(tt);
    EvalReport rep = evaluate(cfg, f.forecast.values, truth.values, f.warmup.values);
    rep.config_hash = fh;
    print_report(rep);
    textio::write_file(out_path(cfg, "report.txt"), to_text(rep));
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error [" << (e.stage().empty() ? "causal_embed" : e.stage()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error [causal_embed]: " << e.what() << '\n';
    return 2;
  }
}
