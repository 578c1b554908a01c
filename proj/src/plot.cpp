#include "rcn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace rcn::plot {

namespace {

constexpr double kLeft = 64, kRight = 16, kTop = 32, kBottom = 44;
const char* const kPalette[] = {"#1f5fbf", "#d62728", "#2ca02c", "#9467bd"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  const Figure* fig;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (fig->width - kLeft - kRight); }
  double py(double y) const { return fig->height - kBottom - (y - y0) / (y1 - y0) * (fig->height - kTop - kBottom); }
};

Frame frame_for(const Figure& fig, const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (double v : s.x)
      if (std::isfinite(v)) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y)
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 <= x0) x0 -= 0.5, x1 += 0.5;
  if (y1 <= y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.04 * (y1 - y0);
  return {x0, x1, y0 - pad, y1 + pad, &fig};
}

void open(std::ostringstream& os, const Figure& fig, const Frame& f) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(fig.width) << "\" height=\""
     << num(fig.height) << "\" viewBox=\"0 0 " << num(fig.width) << ' ' << num(fig.height) << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double l = kLeft, r = fig.width - kRight, t = kTop, b = fig.height - kBottom;
  os << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\"><rect x=\"" << num(l) << "\" y=\"" << num(t)
     << "\" width=\"" << num(r - l) << "\" height=\"" << num(b - t) << "\"/></g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<line x1=\"" << num(f.px(xv)) << "\" y1=\"" << num(b) << "\" x2=\"" << num(f.px(xv)) << "\" y2=\""
       << num(b + 4) << "\" stroke=\"black\"/>";
    os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(b + 16) << "\" text-anchor=\"middle\">" << tick(xv)
       << "</text>\n";
    os << "<line x1=\"" << num(l - 4) << "\" y1=\"" << num(f.py(yv)) << "\" x2=\"" << num(l) << "\" y2=\""
       << num(f.py(yv)) << "\" stroke=\"black\"/>";
    os << "<text x=\"" << num(l - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
       << "</text>\n";
  }
  if (!fig.title.empty())
    os << "<text x=\"" << num(fig.width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
       << escape(fig.title) << "</text>\n";
  if (!fig.x_label.empty())
    os << "<text x=\"" << num((l + r) / 2) << "\" y=\"" << num(fig.height - 8) << "\" text-anchor=\"middle\">"
       << escape(fig.x_label) << "</text>\n";
  if (!fig.y_label.empty())
    os << "<text x=\"14\" y=\"" << num((t + b) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << num((t + b) / 2) << ")\">" << escape(fig.y_label) << "</text>\n";
  os << "</g>\n";
}

void legend(std::ostringstream& os, const Figure& fig, const std::vector<std::string>& labels,
            const std::vector<std::string>& colors) {
  double y = kTop + 14;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) continue;
    const double x = fig.width - kRight - 120;
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(y - 4) << "\" x2=\"" << num(x + 18) << "\" y2=\""
       << num(y - 4) << "\" stroke=\"" << colors[i] << "\" stroke-width=\"2\"/>"
       << "<text x=\"" << num(x + 24) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << escape(labels[i]) << "</text>\n";
    y += 16;
  }
}

std::string color_of(const Series& s, std::size_t i, bool use_palette) {
  return use_palette ? kPalette[i % 4] : s.color;
}

}  // namespace

std::vector<std::size_t> thin(std::size_t n, std::size_t max_points) {
  std::vector<std::size_t> idx;
  if (n == 0 || max_points == 0) return idx;
  const std::size_t stride = std::max<std::size_t>(1, (n + max_points - 1) / max_points);
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  return idx;
}

std::string lines(const Figure& fig, const std::vector<Series>& series) {
  const Frame f = frame_for(fig, series);
  std::ostringstream os;
  open(os, fig, f);
  const bool palette = series.size() > 1;
  std::vector<std::string> labels, colors;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::string c = color_of(s, i, palette);
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1\" points=\"";
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k)
      if (std::isfinite(s.x[k]) && std::isfinite(s.y[k])) os << num(f.px(s.x[k])) << ',' << num(f.py(s.y[k])) << ' ';
    os << "\"/>\n";
    labels.push_back(s.label);
    colors.push_back(c);
  }
  legend(os, fig, labels, colors);
  os << "</svg>\n";
  return os.str();
}

std::string scatter(const Figure& fig, const std::vector<Series>& series, double radius) {
  const Frame f = frame_for(fig, series);
  std::ostringstream os;
  open(os, fig, f);
  const bool palette = series.size() > 1;
  std::vector<std::string> labels, colors;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::string c = color_of(s, i, palette);
    os << "<g fill=\"" << c << "\" fill-opacity=\"0.5\">\n";
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k)
      if (std::isfinite(s.x[k]) && std::isfinite(s.y[k]))
        os << "<circle cx=\"" << num(f.px(s.x[k])) << "\" cy=\"" << num(f.py(s.y[k])) << "\" r=\"" << num(radius)
           << "\"/>\n";
    os << "</g>\n";
    labels.push_back(s.label);
    colors.push_back(c);
  }
  legend(os, fig, labels, colors);
  os << "</svg>\n";
  return os.str();
}

std::string densities(const Figure& fig, const std::vector<DensityEstimate>& d, const std::vector<std::string>& labels) {
  std::vector<Series> series;
  for (std::size_t i = 0; i < d.size(); ++i) {
    Series s;
    for (std::size_t b = 0; b < d[i].bins(); ++b) {
      s.x.push_back(d[i].center(b));
      s.y.push_back(d[i].mass[b]);
    }
    s.label = i < labels.size() ? labels[i] : std::string{};
    series.push_back(std::move(s));
  }
  return lines(fig, series);
}

}  // namespace rcn::plot
