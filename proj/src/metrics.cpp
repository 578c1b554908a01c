#include "rcn/metrics.hpp"

#include "rcn/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rcn {

double quantile(std::vector<double> v, double q) {
  require(!v.empty(), "quantile: empty input");
  require(q >= 0.0 && q <= 1.0, "quantile: q must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return v[lo] + f * (v[hi] - v[lo]);
}

DensityEstimate estimate_density(const Vector& samples, std::size_t bins, double bandwidth) {
  require(samples.size() > 0, "estimate_density: no samples");
  double lo = samples.minCoeff();
  double hi = samples.maxCoeff();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return estimate_density(samples, bins, bandwidth, lo, hi);
}

DensityEstimate estimate_density(const Vector& samples, std::size_t bins, double bandwidth, double lo, double hi) {
  require(samples.size() >= 100, "estimate_density: need at least 100 samples");
  require(bins >= 2, "estimate_density: need at least two bins");
  require(bandwidth >= 0.0 && std::isfinite(bandwidth), "estimate_density: bandwidth must be finite and >= 0");
  require(std::isfinite(lo) && std::isfinite(hi) && hi > lo, "estimate_density: invalid range");
  require(samples.allFinite(), "estimate_density: non-finite sample");

  DensityEstimate d;
  d.bandwidth = bandwidth;
  d.bin_edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) d.bin_edges[i] = lo + width * static_cast<double>(i);
  d.bin_edges[bins] = hi;

  std::vector<double> counts(bins, 0.0);
  for (Index n = 0; n < samples.size(); ++n) {
    const double pos = (samples(n) - lo) / width;
    long b = static_cast<long>(std::floor(pos));
    b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
    counts[static_cast<std::size_t>(b)] += 1.0;
  }

  if (bandwidth == 0.0) {
    d.mass = std::move(counts);
  } else {
    const long reach = static_cast<long>(std::ceil(4.0 * bandwidth));
    std::vector<double> kernel(static_cast<std::size_t>(2 * reach + 1));
    for (long j = -reach; j <= reach; ++j) {
      const double t = static_cast<double>(j) / bandwidth;
      kernel[static_cast<std::size_t>(j + reach)] = std::exp(-0.5 * t * t);
    }
    d.mass.assign(bins, 0.0);
    const long nb = static_cast<long>(bins);
    for (long i = 0; i < nb; ++i) {
      if (counts[static_cast<std::size_t>(i)] == 0.0) continue;
      // Spread each bin over its neighbours; the part falling off the range
      // is dropped and recovered by renormalisation.
      double kept = 0.0;
      for (long j = std::max(-reach, -i); j <= std::min(reach, nb - 1 - i); ++j) kept += kernel[static_cast<std::size_t>(j + reach)];
      for (long j = std::max(-reach, -i); j <= std::min(reach, nb - 1 - i); ++j)
        d.mass[static_cast<std::size_t>(i + j)] +=
            counts[static_cast<std::size_t>(i)] * kernel[static_cast<std::size_t>(j + reach)] / kept;
    }
  }
  const double total = std::accumulate(d.mass.begin(), d.mass.end(), 0.0);
  for (double& m : d.mass) m /= total;
  return d;
}

double density_distance(const DensityEstimate& p, const DensityEstimate& q) {
  if (p.bins() != q.bins()) throw Error("density_distance: bin counts differ");
  for (std::size_t i = 0; i < p.bin_edges.size(); ++i) {
    const double scale = std::max({1.0, std::abs(p.bin_edges[i]), std::abs(q.bin_edges[i])});
    if (std::abs(p.bin_edges[i] - q.bin_edges[i]) > 1e-9 * scale) throw Error("density_distance: bin edges differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.bins(); ++i) s += std::abs(p.mass[i] - q.mass[i]);
  return s;
}

std::string density_csv(const DensityEstimate& d, const std::string& comment) {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "bin_center,mass\n";
  for (std::size_t i = 0; i < d.bins(); ++i)
    os << textio::format_double(d.center(i)) << ',' << textio::format_double(d.mass[i]) << '\n';
  return os.str();
}

double rv_coefficient(const Matrix& in, const Matrix& out) {
  require(in.rows() == out.rows(), "rv_coefficient: row counts differ");
  const Index n = in.rows();
  require(n >= std::max(in.cols(), out.cols()) + 1, "rv_coefficient: need more samples than variables");
  const Matrix x = in.rowwise() - in.colwise().mean();
  const Matrix y = out.rowwise() - out.colwise().mean();
  // The 1/(n-1) normalisations cancel.
  double cross, sxx, syy;
  if (n < std::max(x.cols(), y.cols())) {
    const Matrix gx = x * x.transpose();
    const Matrix gy = y * y.transpose();
    cross = gx.cwiseProduct(gy).sum();
    sxx = gx.squaredNorm();
    syy = gy.squaredNorm();
  } else {
    cross = (x.transpose() * y).squaredNorm();
    sxx = (x.transpose() * x).squaredNorm();
    syy = (y.transpose() * y).squaredNorm();
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error("rv_coefficient: constant input or output");
  return cross / std::sqrt(sxx * syy);
}

double lag_pair_rv(const Matrix& states) {
  require(states.rows() >= 3, "lag_pair_rv: need at least three states");
  const Index m = states.rows() - 2;
  const Index n = states.cols();
  Matrix in(m, 2 * n), out(m, 2 * n);
  in << states.topRows(m), states.middleRows(1, m);
  out << states.middleRows(1, m), states.bottomRows(m);
  return rv_coefficient(in, out);
}

LaminarStats laminar_stats(const Vector& series, double tol, std::size_t min_len, std::size_t lag) {
  require(min_len >= 1, "laminar_stats: min_len must be >= 1");
  require(lag >= 1, "laminar_stats: lag must be >= 1");
  require(tol > 0.0, "laminar_stats: tol must be positive");
  require(static_cast<std::size_t>(series.size()) >= 10 * min_len && static_cast<std::size_t>(series.size()) > lag,
          "laminar_stats: series shorter than 10 x min_len");
  std::vector<double> lengths;
  std::size_t run = 0;
  const Index steps = series.size() - static_cast<Index>(lag);
  for (Index n = 0; n < steps; ++n) {
    if (std::abs(series(n + static_cast<Index>(lag)) - series(n)) < tol) {
      ++run;
    } else {
      if (run >= min_len) lengths.push_back(static_cast<double>(run));
      run = 0;
    }
  }
  if (run >= min_len) lengths.push_back(static_cast<double>(run));
  LaminarStats s;
  s.count = lengths.size();
  if (lengths.empty()) return s;
  s.mean = std::accumulate(lengths.begin(), lengths.end(), 0.0) / static_cast<double>(lengths.size());
  s.p10 = quantile(lengths, 0.1);
  s.p50 = quantile(lengths, 0.5);
  s.p90 = quantile(lengths, 0.9);
  return s;
}

namespace {

// Row n - first of the result is (x_{n-1}, x_n) for the selected n.
Matrix state_pairs(const Matrix& states, const std::vector<Index>& idx) {
  const Index d = states.cols();
  Matrix e(static_cast<Index>(idx.size()), 2 * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    e.row(static_cast<Index>(i)).head(d) = states.row(idx[i] - 1);
    e.row(static_cast<Index>(i)).tail(d) = states.row(idx[i]);
  }
  return e;
}

Matrix rms_distances(const Matrix& pts) {
  const Vector sq = pts.rowwise().squaredNorm();
  Matrix g = -2.0 * (pts * pts.transpose());
  g.colwise() += sq;
  g.rowwise() += sq.transpose();
  const double dim = static_cast<double>(std::max<Index>(pts.cols(), 1));
  return (g.array().max(0.0) / dim).sqrt().matrix();
}

std::vector<Index> strided(Index first, Index last, std::size_t max_points) {
  std::vector<Index> idx;
  const Index count = last - first + 1;
  if (count <= 0) return idx;
  const Index stride = std::max<Index>(1, (count + static_cast<Index>(max_points) - 1) / static_cast<Index>(max_points));
  for (Index n = first; n <= last; n += stride) idx.push_back(n);
  return idx;
}

}  // namespace

double state_pair_distance_quantile(const Matrix& states, double q, std::size_t max_points) {
  require(states.rows() >= 3, "state_pair_distance_quantile: need at least three states");
  const auto idx = strided(1, states.rows() - 1, max_points);
  const Matrix d = rms_distances(state_pairs(states, idx));
  std::vector<double> v;
  for (Index i = 0; i < d.rows(); ++i)
    for (Index j = i + 1; j < d.cols(); ++j) v.push_back(d(i, j));
  return quantile(std::move(v), q);
}

InjectivityResult injectivity_test(const Matrix& states, const Matrix& truth, std::size_t k_past, double eps_state,
                                   const InjectivityOptions& opt) {
  require(k_past >= 1, "injectivity_test: k_past must be >= 1");
  require(states.rows() >= 1000, "injectivity_test: need at least 1000 states");
  require(eps_state > 0.0, "injectivity_test: eps_state must be positive");
  require(opt.max_points >= 2, "injectivity_test: max_points must be >= 2");
  const Index k = static_cast<Index>(k_past);
  // Need rows n-1 of states and n-k .. n-1 of truth.
  const Index last = std::min(states.rows() - 1, truth.rows());
  require(last >= k + 1, "injectivity_test: series too short for k_past");
  const auto idx = strided(k, last, opt.max_points);

  const Matrix de = rms_distances(state_pairs(states, idx));
  Matrix hist(static_cast<Index>(idx.size()), k * truth.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (Index j = 0; j < k; ++j)
      hist.row(static_cast<Index>(i)).segment(j * truth.cols(), truth.cols()) = truth.row(idx[i] - k + j);
  const Matrix dh = rms_distances(hist);

  std::vector<double> ratios;
  std::vector<std::pair<Index, Index>> neighbours;
  std::size_t admissible = 0;
  for (Index i = 0; i < de.rows(); ++i) {
    for (Index j = i + 1; j < de.cols(); ++j) {
      if (std::abs(idx[static_cast<std::size_t>(j)] - idx[static_cast<std::size_t>(i)]) <= k) continue;
      ++admissible;
      if (de(i, j) < eps_state) neighbours.emplace_back(i, j);
      else ratios.push_back(dh(i, j) / de(i, j));
    }
  }
  if (neighbours.empty()) throw Error("injectivity_test: no state neighbours within eps_state");

  InjectivityResult r;
  r.neighbor_pairs = neighbours.size();
  r.modulus = ratios.empty() ? 0.0 : quantile(std::move(ratios), opt.modulus_quantile);
  r.eps_history = opt.slack * r.modulus * eps_state;
  std::size_t hit = 0;
  for (auto [i, j] : neighbours)
    if (dh(i, j) <= r.eps_history) ++hit;
  r.ratio = static_cast<double>(hit) / static_cast<double>(neighbours.size());
  std::size_t close = 0;
  for (Index i = 0; i < dh.rows(); ++i)
    for (Index j = i + 1; j < dh.cols(); ++j)
      if (std::abs(idx[static_cast<std::size_t>(j)] - idx[static_cast<std::size_t>(i)]) > k &&
          dh(i, j) <= r.eps_history)
        ++close;
  r.chance = static_cast<double>(close) / static_cast<double>(admissible);
  return r;
}

namespace {

void put_laminar(std::ostringstream& os, const std::string& prefix, const LaminarStats& s) {
  os << prefix << ".count = " << s.count << '\n';
  os << prefix << ".mean = " << textio::format_double(s.mean) << '\n';
  os << prefix << ".p10 = " << textio::format_double(s.p10) << '\n';
  os << prefix << ".p50 = " << textio::format_double(s.p50) << '\n';
  os << prefix << ".p90 = " << textio::format_double(s.p90) << '\n';
}

}  // namespace

std::string to_text(const EvalReport& r) {
  std::ostringstream os;
  if (!r.config_hash.empty()) os << "config_hash = " << r.config_hash << '\n';
  os << "valid_time = " << r.valid_time << '\n';
  os << "density_distance = " << textio::format_double(r.density_distance) << '\n';
  os << "bounded = " << (r.bounded ? "true" : "false") << '\n';
  if (r.rv_coefficient) os << "rv_coefficient = " << textio::format_double(*r.rv_coefficient) << '\n';
  if (r.injectivity_ratio) os << "injectivity_ratio = " << textio::format_double(*r.injectivity_ratio) << '\n';
  if (r.laminar) put_laminar(os, "laminar", *r.laminar);
  if (r.laminar_truth) put_laminar(os, "laminar_truth", *r.laminar_truth);
  for (const auto& [key, v] : r.extra) os << key << " = " << textio::format_double(v) << '\n';
  return os.str();
}

EvalReport eval_report_from_text(const std::string& text) {
  EvalReport r;
  std::istringstream in(text);
  std::string line;
  auto laminar_field = [](LaminarStats& s, const std::string& field, const std::string& v) {
    if (field == "count") s.count = static_cast<std::size_t>(textio::parse_int(v));
    else if (field == "mean") s.mean = textio::parse_double(v);
    else if (field == "p10") s.p10 = textio::parse_double(v);
    else if (field == "p50") s.p50 = textio::parse_double(v);
    else if (field == "p90") s.p90 = textio::parse_double(v);
    else throw Error("report: unknown laminar field '" + field + "'");
  };
  while (std::getline(in, line)) {
    const std::string t = textio::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error("report: malformed line '" + t + "'");
    const std::string key = textio::trim(t.substr(0, eq));
    const std::string v = textio::trim(t.substr(eq + 1));
    if (key == "config_hash") r.config_hash = v;
    else if (key == "valid_time") r.valid_time = static_cast<std::size_t>(textio::parse_int(v));
    else if (key == "density_distance") r.density_distance = textio::parse_double(v);
    else if (key == "bounded") r.bounded = (v == "true");
    else if (key == "rv_coefficient") r.rv_coefficient = textio::parse_double(v);
    else if (key == "injectivity_ratio") r.injectivity_ratio = textio::parse_double(v);
    else if (key.rfind("laminar_truth.", 0) == 0) {
      if (!r.laminar_truth) r.laminar_truth.emplace();
      laminar_field(*r.laminar_truth, key.substr(14), v);
    } else if (key.rfind("laminar.", 0) == 0) {
      if (!r.laminar) r.laminar.emplace();
      laminar_field(*r.laminar, key.substr(8), v);
    } else r.extra[key] = textio::parse_double(v);
  }
  return r;
}

}  // namespace rcn
