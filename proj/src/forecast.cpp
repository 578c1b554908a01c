#include "rcn/forecast.hpp"

#include "rcn/textio.hpp"

#include <cmath>
#include <sstream>

namespace rcn {

ForecastRun closed_loop(const Reservoir& r, const ReadoutModel& model, const Vector& u0, const Vector& x0,
                        std::size_t horizon, const ForecastOptions& opt) {
  require(model.target_kind == TargetKind::next_input, "closed_loop: model must predict the next input");
  require(model.basis.dim() == r.size(), "closed_loop: model and reservoir dimensions differ");
  require(u0.size() == model.regressor.output_dim(), "closed_loop: u0 dimension mismatch");
  require(x0.size() == r.size(), "closed_loop: x0 dimension mismatch");

  const bool check_escape = opt.escape_factor > 0.0 && model.target_lo.size() == u0.size();
  Vector centre, half;
  if (check_escape) {
    centre = 0.5 * (model.target_lo + model.target_hi);
    half = (0.5 * (model.target_hi - model.target_lo)).cwiseMax(1e-12) * opt.escape_factor;
  }

  ForecastRun run;
  run.u0 = u0;
  run.x0 = x0;
  run.horizon = horizon;
  const Index h = static_cast<Index>(horizon);
  run.predicted.resize(h, u0.size());
  if (opt.record_states) {
    run.states.resize(h + 1, r.size());
    run.states.row(0) = x0.transpose();
  }

  Vector x = x0;
  Vector u = u0;
  Vector z = project(model.basis, x);
  for (Index k = 0; k < h; ++k) {
    Vector next = r.step(u, x);
    Vector z_next = project(model.basis, next);
    u = apply_gamma_projected(model, z, z_next);
    const auto step = static_cast<std::size_t>(k + 1);
    if (!u.allFinite() || !next.allFinite()) throw DivergenceError("closed_loop: non-finite input or state", step);
    if (check_escape && ((u - centre).cwiseAbs().array() > half.array()).any())
      throw EscapeError("closed_loop: forecast escaped the training box by more than x" +
                            textio::format_double(opt.escape_factor),
                        step);
    run.predicted.row(k) = u.transpose();
    if (opt.record_states) run.states.row(k + 1) = next.transpose();
    x = std::move(next);
    z = std::move(z_next);
  }
  return run;
}

TimeSeries reconstruct_full(const Reservoir& r, const ReadoutModel& model_full, const Matrix& states) {
  require(model_full.target_kind == TargetKind::full_state, "reconstruct_full: model must target full states");
  require(states.cols() == r.size() && states.cols() == model_full.basis.dim(),
          "reconstruct_full: state dimension mismatch");
  require(states.rows() >= 2, "reconstruct_full: need at least two states");
  const Matrix z = project_rows(model_full.basis, states);
  const Index n = z.cols();
  Matrix features(z.rows() - 1, 2 * n);
  features.leftCols(n) = z.topRows(z.rows() - 1);
  features.rightCols(n) = z.bottomRows(z.rows() - 1);
  TimeSeries out;
  out.values = model_full.regressor.predict_rows(features) / model_full.target_scale;
  return out;
}

TimeSeries delay_embed(const TimeSeries& series, std::size_t d) {
  require(series.dim() == 1, "delay_embed: series must be scalar");
  const Index len = series.length();
  const Index width = static_cast<Index>(2 * d + 1);
  require(len > static_cast<Index>(2 * d), "delay_embed: series too short for the delay window");
  const Index m = len - width + 1;
  TimeSeries out;
  out.values.resize(m, width);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < width; ++j) out.values(i, j) = series.values(i + j, 0);
  out.dt = series.dt;
  out.system = series.system;
  out.observation = series.observation;
  if (series.hidden_truth) out.hidden_truth = series.hidden_truth->bottomRows(m);
  return out;
}

std::size_t valid_time(const Matrix& predicted, const Matrix& truth, double threshold) {
  require(predicted.rows() == truth.rows() && predicted.cols() == truth.cols(),
          "valid_time: predicted and truth must have equal shape");
  require(truth.rows() > 0, "valid_time: empty series");
  const Matrix centered = truth.rowwise() - truth.colwise().mean();
  const double rms = std::sqrt(centered.squaredNorm() / static_cast<double>(truth.rows()));
  if (!(rms > 0.0)) throw Error("valid_time: truth has zero variance");
  for (Index n = 0; n < truth.rows(); ++n) {
    if ((predicted.row(n) - truth.row(n)).norm() / rms > threshold) return static_cast<std::size_t>(n);
  }
  return static_cast<std::size_t>(truth.rows());
}

std::string forecast_csv(const TimeSeries& warmup, const Matrix& predicted,
                         const std::optional<Matrix>& truth_forecast, const std::string& comment) {
  require(predicted.cols() == warmup.dim(), "forecast_csv: dimension mismatch");
  const bool with_truth = warmup.hidden_truth && truth_forecast;
  if (with_truth)
    require(truth_forecast->rows() == predicted.rows() && truth_forecast->cols() == warmup.hidden_truth->cols(),
            "forecast_csv: truth continuation has wrong shape");
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << '\n';
  os << 't';
  for (Index k = 0; k < warmup.dim(); ++k) os << ",u" << (k + 1);
  const Index m = with_truth ? warmup.hidden_truth->cols() : 0;
  for (Index k = 0; k < m; ++k) os << ",w" << (k + 1);
  os << ",phase\n";
  const double dt = warmup.dt.value_or(1.0);
  auto row = [&](Index n, const auto& u, const Matrix* w, Index wr, const char* phase) {
    os << textio::format_double(static_cast<double>(n) * dt);
    for (Index k = 0; k < u.size(); ++k) os << ',' << textio::format_double(u(k));
    for (Index k = 0; k < m; ++k) os << ',' << textio::format_double((*w)(wr, k));
    os << ',' << phase << '\n';
  };
  for (Index n = 0; n < warmup.length(); ++n)
    row(n, warmup.values.row(n), with_truth ? &*warmup.hidden_truth : nullptr, n, "warmup");
  for (Index n = 0; n < predicted.rows(); ++n)
    row(warmup.length() + n, predicted.row(n), with_truth ? &*truth_forecast : nullptr, n, "forecast");
  return os.str();
}

ForecastCsv read_forecast_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::ostringstream warm, fc;
  bool header_done = false;
  while (std::getline(in, line)) {
    std::string t = textio::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (!header_done) {
      if (t.size() < 6 || t.substr(t.size() - 6) != ",phase") throw Error("forecast csv: missing phase column");
      const std::string header = t.substr(0, t.size() - 6) + '\n';
      warm << header;
      fc << header;
      header_done = true;
      continue;
    }
    const auto comma = t.rfind(',');
    const std::string phase = t.substr(comma + 1);
    const std::string body = t.substr(0, comma) + '\n';
    if (phase == "warmup") warm << body;
    else if (phase == "forecast") fc << body;
    else throw Error("forecast csv: unknown phase '" + phase + "'");
  }
  return {from_csv(warm.str()), from_csv(fc.str())};
}

}  // namespace rcn
