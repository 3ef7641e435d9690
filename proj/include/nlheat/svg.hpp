#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace nlheat::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct Plot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log_x = true;
  bool log_y = true;
  std::vector<Series> series;
  /// Horizontal reference lines (data coordinates).
  std::vector<double> hlines;
  /// Free text lines printed under the legend.
  std::vector<std::string> notes;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, r.ptr);
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double map(double v) const {
    const double t = log ? std::log10(v) : v;
    return (t - lo) / (hi - lo);
  }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      for (double e = std::ceil(lo); e <= hi + 1e-12; e += 1.0) t.push_back(std::pow(10.0, e));
      return t;
    }
    for (int i = 0; i <= 5; ++i) t.push_back(lo + (hi - lo) * i / 5.0);
    return t;
  }
};

inline Axis make_axis(const std::vector<const std::vector<double>*>& data, bool log,
                      const std::vector<double>& extra = {}) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  auto take = [&](double v) {
    if (!std::isfinite(v) || (log && !(v > 0.0))) return;
    const double t = log ? std::log10(v) : v;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  };
  for (const auto* d : data)
    for (double v : *d) take(v);
  for (double v : extra) take(v);
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  if (log) {
    lo = std::floor(lo);
    hi = std::ceil(hi);
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return Axis{lo, hi, log};
}

}  // namespace detail

inline std::string render(const Plot& p) {
  constexpr double W = 720, H = 480, L = 80, R = 200, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::vector<const std::vector<double>*> xs, ys;
  for (const auto& s : p.series) {
    xs.push_back(&s.x);
    ys.push_back(&s.y);
  }
  const auto ax = detail::make_axis(xs, p.log_x);
  const auto ay = detail::make_axis(ys, p.log_y, p.hlines);
  auto px = [&](double v) { return L + ax.map(v) * pw; };
  auto py = [&](double v) { return T + (1.0 - ay.map(v)) * ph; };
  using detail::num;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\""
    << num(H) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(L + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << detail::escape(p.title) << "</text>\n";
  o << "<rect x=\"" << num(L) << "\" y=\"" << num(T) << "\" width=\"" << num(pw)
    << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double t : ax.ticks()) {
    const double x = px(t);
    o << "<line x1=\"" << num(x) << "\" y1=\"" << num(T) << "\" x2=\"" << num(x) << "\" y2=\""
      << num(T + ph) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << num(x) << "\" y=\"" << num(T + ph + 16)
      << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double y = py(t);
    o << "<line x1=\"" << num(L) << "\" y1=\"" << num(y) << "\" x2=\"" << num(L + pw)
      << "\" y2=\"" << num(y) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << num(L - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
      << num(t) << "</text>\n";
  }
  o << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << num(H - 18)
    << "\" text-anchor=\"middle\">" << detail::escape(p.xlabel) << "</text>\n";
  o << "<text transform=\"translate(18," << num(T + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << detail::escape(p.ylabel) << "</text>\n";

  for (double h : p.hlines) {
    if (p.log_y && !(h > 0.0)) continue;
    o << "<line x1=\"" << num(L) << "\" y1=\"" << num(py(h)) << "\" x2=\"" << num(L + pw)
      << "\" y2=\"" << num(py(h)) << "\" stroke=\"black\" stroke-dasharray=\"2,3\"/>\n";
  }

  for (std::size_t i = 0; i < p.series.size(); ++i) {
    const auto& s = p.series[i];
    const char* color = colors[i % 8];
    std::string pts;
    for (std::size_t j = 0; j < std::min(s.x.size(), s.y.size()); ++j) {
      const double x = s.x[j], y = s.y[j];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if ((p.log_x && !(x > 0.0)) || (p.log_y && !(y > 0.0))) continue;
      pts += num(px(x)) + "," + num(py(y)) + " ";
      o << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
      << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"" << pts << "\"/>\n";
    const double ly = T + 14 + 18 * static_cast<double>(i);
    o << "<line x1=\"" << num(L + pw + 12) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
      << num(L + pw + 36) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    o << "<text x=\"" << num(L + pw + 42) << "\" y=\"" << num(ly) << "\">"
      << detail::escape(s.label) << "</text>\n";
  }
  double ny = T + 30 + 18 * static_cast<double>(p.series.size());
  for (const auto& n : p.notes) {
    o << "<text x=\"" << num(L + pw + 12) << "\" y=\"" << num(ny) << "\" font-size=\"11\">"
      << detail::escape(n) << "</text>\n";
    ny += 15;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace nlheat::svg
