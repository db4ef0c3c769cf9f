#include "sega/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace sega::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 56.0;

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
    const double p = 0.05 * (hi - lo);
    lo -= p;
    hi += p;
  }
};

class Canvas {
 public:
  Canvas(Range x, Range y) : x_(x), y_(y) {}

  double px(double v) const { return kMargin + (v - x_.lo) / (x_.hi - x_.lo) * (kWidth - 2 * kMargin); }
  double py(double v) const {
    return kHeight - kMargin - (v - y_.lo) / (y_.hi - y_.lo) * (kHeight - 2 * kMargin);
  }

  void header(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    out_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
            num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    out_ += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out_ += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" +
            num(kWidth - 2 * kMargin) + "\" height=\"" + num(kHeight - 2 * kMargin) +
            "\" fill=\"none\" stroke=\"#444\"/>\n";
    text(kWidth / 2, kMargin / 2, title, "middle", 14);
    text(kWidth / 2, kHeight - 12, xlabel, "middle", 12);
    out_ += "<text x=\"16\" y=\"" + num(kHeight / 2) + "\" font-family=\"sans-serif\" font-size=\"12\" "
            "text-anchor=\"middle\" transform=\"rotate(-90 16 " + num(kHeight / 2) + ")\">" +
            escape(ylabel) + "</text>\n";
    text(kMargin, kHeight - kMargin + 16, num(x_.lo), "start", 10);
    text(kWidth - kMargin, kHeight - kMargin + 16, num(x_.hi), "end", 10);
    text(kMargin - 4, kHeight - kMargin, num(y_.lo), "end", 10);
    text(kMargin - 4, kMargin + 10, num(y_.hi), "end", 10);
  }

  void circle(double x, double y, double r, const char* fill, double opacity = 1.0) {
    out_ += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"" + num(r) +
            "\" fill=\"" + fill + "\" fill-opacity=\"" + num(opacity) + "\"/>\n";
  }

  void cross(double x, double y, double s) {
    const double cx = px(x), cy = py(y);
    out_ += "<path d=\"M" + num(cx - s) + " " + num(cy - s) + " L" + num(cx + s) + " " + num(cy + s) +
            " M" + num(cx - s) + " " + num(cy + s) + " L" + num(cx + s) + " " + num(cy - s) +
            "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }

  void line(double x0, double y0, double x1, double y1, const char* stroke) {
    out_ += "<line x1=\"" + num(px(x0)) + "\" y1=\"" + num(py(y0)) + "\" x2=\"" + num(px(x1)) +
            "\" y2=\"" + num(py(y1)) + "\" stroke=\"" + stroke + "\" stroke-width=\"1.5\"/>\n";
  }

  void label(double x, double y, const std::string& s) { text(px(x) + 8, py(y) - 8, s, "start", 11); }

  std::string finish() { return out_ + "</svg>\n"; }

 private:
  void text(double x, double y, const std::string& s, const char* anchor, int size) {
    out_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
            std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
  }

  Range x_, y_;
  std::string out_;
};

double coord(const Vector& v, Eigen::Index i) { return i < v.size() ? v[i] : 0.0; }

}  // namespace

std::string sample_scatter(const MixtureScene& scene, std::span<const Vector> samples,
                           const std::string& title) {
  Range xr, yr;
  for (const auto& c : scene.components()) {
    xr.add(coord(c.mean, 0));
    yr.add(coord(c.mean, 1));
  }
  for (const auto& s : samples) {
    xr.add(coord(s, 0));
    yr.add(coord(s, 1));
  }
  xr.pad();
  yr.pad();
  Canvas canvas(xr, yr);
  canvas.header(title, "x_0", scene.dimension() > 1 ? "x_1" : "");
  for (const auto& s : samples) {
    const auto k = argmax_component(scene, s);
    canvas.circle(coord(s, 0), coord(s, 1), 2.5, kPalette[k % kPalette.size()], 0.6);
  }
  for (const auto& c : scene.components()) {
    canvas.cross(coord(c.mean, 0), coord(c.mean, 1), 5);
    canvas.label(coord(c.mean, 0), coord(c.mean, 1), format_tags(c.tags));
  }
  return canvas.finish();
}

std::string sweep_plot(const SweepReport& report, const std::string& title) {
  Range xr, yr;
  yr.add(0.0);
  yr.add(1.0);
  for (const auto& p : report.points) {
    xr.add(p.edit_scale);
    yr.add(p.posterior.mean - p.posterior.standard_error);
    yr.add(p.posterior.mean + p.posterior.standard_error);
  }
  xr.pad();
  yr.pad();
  Canvas canvas(xr, yr);
  canvas.header(title, "s_e", "mean posterior " + format_tags(report.target));
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    const auto& p = report.points[i];
    if (i > 0) {
      const auto& q = report.points[i - 1];
      canvas.line(q.edit_scale, q.posterior.mean, p.edit_scale, p.posterior.mean, kPalette[0]);
    }
    canvas.line(p.edit_scale, p.posterior.mean - p.posterior.standard_error, p.edit_scale,
                p.posterior.mean + p.posterior.standard_error, "#888");
    canvas.circle(p.edit_scale, p.posterior.mean, 4, kPalette[0]);
  }
  return canvas.finish();
}

}  // namespace sega::svg
