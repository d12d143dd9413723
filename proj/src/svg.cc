#include "aprlab/svg.h"

#include "aprlab/scenegen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace aprlab {

std::string svg_number(double v) {
  if (!std::isfinite(v)) throw Error("svg: non-finite coordinate");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
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

SvgDocument::SvgDocument(double width, double height) : width_(width), height_(height) {}

void SvgDocument::rect(double x, double y, double w, double h, const std::string& fill,
                       const std::string& stroke) {
  body_ << "<rect x=\"" << svg_number(x) << "\" y=\"" << svg_number(y) << "\" width=\""
        << svg_number(w) << "\" height=\"" << svg_number(h) << "\" fill=\"" << fill
        << "\" stroke=\"" << stroke << "\"/>\n";
}

void SvgDocument::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                       double width) {
  body_ << "<line x1=\"" << svg_number(x1) << "\" y1=\"" << svg_number(y1) << "\" x2=\""
        << svg_number(x2) << "\" y2=\"" << svg_number(y2) << "\" stroke=\"" << stroke
        << "\" stroke-width=\"" << svg_number(width) << "\"/>\n";
}

void SvgDocument::polyline(std::span<const Vector2d> points, const std::string& stroke,
                           double width) {
  if (points.empty()) return;
  body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
        << svg_number(width) << "\" points=\"";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) body_ << ' ';
    body_ << svg_number(points[i].x()) << ',' << svg_number(points[i].y());
  }
  body_ << "\"/>\n";
}

void SvgDocument::circle(double cx, double cy, double r, const std::string& fill,
                         const std::string& stroke) {
  body_ << "<circle cx=\"" << svg_number(cx) << "\" cy=\"" << svg_number(cy) << "\" r=\""
        << svg_number(r) << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
}

void SvgDocument::square(double cx, double cy, double half, const std::string& fill,
                         const std::string& stroke) {
  rect(cx - half, cy - half, 2 * half, 2 * half, fill, stroke);
}

void SvgDocument::text(double x, double y, const std::string& content, double size,
                       const std::string& anchor) {
  body_ << "<text x=\"" << svg_number(x) << "\" y=\"" << svg_number(y) << "\" font-size=\""
        << svg_number(size) << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">"
        << svg_escape(content) << "</text>\n";
}

std::string SvgDocument::str() const {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg_number(width_)
      << "\" height=\"" << svg_number(height_) << "\" viewBox=\"0 0 " << svg_number(width_) << ' '
      << svg_number(height_) << "\">\n"
      << body_.str() << "</svg>\n";
  return out.str();
}

namespace {

constexpr double kWidth = 720, kHeight = 540;
constexpr double kLeft = 50, kRight = 50, kTop = 90, kBottom = 60;

PlaneFrame view_frame(std::span<const Vector3d> points) {
  if (points.empty()) {
    return {Vector3d::Zero(), Vector3d::UnitZ(), Vector3d::UnitX(), Vector3d::UnitY()};
  }
  try {
    return dominant_plane(points);
  } catch (const Error&) {
    // vertical line: look at it from the side
    PlaneFrame f = dominant_plane(points.first(1));
    f.anchor = std::accumulate(points.begin(), points.end(), Vector3d(Vector3d::Zero())) /
               static_cast<double>(points.size());
    f.normal = -Vector3d::UnitY();
    f.v = Vector3d::UnitZ();
    return f;
  }
}

// Maps plane coordinates to canvas pixels with equal scale on both axes.
struct Viewport {
  double scale = 1.0;  // pixels per meter
  double s0 = 0.0, t0 = 0.0;

  Viewport(std::span<const Vector2d> pts) {
    double s_min = 0, s_max = 0, t_min = 0, t_max = 0;
    if (!pts.empty()) {
      s_min = s_max = pts[0].x();
      t_min = t_max = pts[0].y();
    }
    for (const auto& p : pts) {
      s_min = std::min(s_min, p.x());
      s_max = std::max(s_max, p.x());
      t_min = std::min(t_min, p.y());
      t_max = std::max(t_max, p.y());
    }
    const double ds = std::max(s_max - s_min, 1.0), dt = std::max(t_max - t_min, 1.0);
    scale = std::min((kWidth - kLeft - kRight) / ds, (kHeight - kTop - kBottom) / dt);
    s0 = 0.5 * (s_min + s_max);
    t0 = 0.5 * (t_min + t_max);
  }

  Vector2d map(const Vector2d& p) const {
    const double cx = kLeft + 0.5 * (kWidth - kLeft - kRight);
    const double cy = kTop + 0.5 * (kHeight - kTop - kBottom);
    return {cx + (p.x() - s0) * scale, cy - (p.y() - t0) * scale};
  }
};

Vector2d to_plane(const PlaneFrame& f, const Vector3d& p) {
  return {(p - f.anchor).dot(f.u), (p - f.anchor).dot(f.v)};
}

double nice_length(double target) {
  const double base = std::pow(10.0, std::floor(std::log10(target)));
  for (const double m : {5.0, 2.0, 1.0}) {
    if (m * base <= target) return m * base;
  }
  return base;
}

void scale_bar(SvgDocument& svg, double pixels_per_meter) {
  const double meters = nice_length(0.25 * (kWidth - kLeft - kRight) / pixels_per_meter);
  const double len = meters * pixels_per_meter;
  const double x1 = kWidth - kRight, y = kHeight - 25;
  svg.line(x1 - len, y, x1, y, "black", 2);
  svg.line(x1 - len, y - 4, x1 - len, y + 4, "black", 1);
  svg.line(x1, y - 4, x1, y + 4, "black", 1);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g m", meters);
  svg.text(x1 - 0.5 * len, y - 8, buf, 11, "middle");
}

void frame_box(SvgDocument& svg) {
  svg.rect(0, 0, kWidth, kHeight, "white");
  svg.rect(kLeft - 10, kTop - 10, kWidth - kLeft - kRight + 20, kHeight - kTop - kBottom + 20,
           "none", "#999999");
}

std::string warm_color(double t) {
  static constexpr std::array<std::array<double, 3>, 5> kStops = {{{49, 54, 149},
                                                                   {116, 173, 209},
                                                                   {254, 224, 144},
                                                                   {244, 109, 67},
                                                                   {165, 0, 38}}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * (kStops.size() - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(t), kStops.size() - 2);
  const double f = t - static_cast<double>(i);
  char buf[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c) {
    rgb[c] = static_cast<int>(std::lround(kStops[i][c] + f * (kStops[i + 1][c] - kStops[i][c])));
  }
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

}  // namespace

std::string plot_trajectories(const PointSet& train, const PointSet& test,
                              std::span<const PointSet> predictions) {
  static const std::array<const char*, 3> kPredictionColors = {"#1f4fd8", "#8e3cc4", "#17b8c8"};
  if (predictions.size() > kPredictionColors.size()) {
    throw Error("plot: at most three prediction sets");
  }
  std::vector<Vector3d> reference = train.points;
  reference.insert(reference.end(), test.points.begin(), test.points.end());
  if (reference.empty()) {
    for (const auto& p : predictions) reference.insert(reference.end(), p.points.begin(), p.points.end());
  }
  const PlaneFrame f = view_frame(reference);

  std::vector<Vector2d> all;
  const auto project_set = [&](const PointSet& s) {
    std::vector<Vector2d> out;
    for (const auto& p : s.points) out.push_back(to_plane(f, p));
    all.insert(all.end(), out.begin(), out.end());
    return out;
  };
  const auto train2 = project_set(train);
  const auto test2 = project_set(test);
  std::vector<std::vector<Vector2d>> pred2;
  for (const auto& p : predictions) pred2.push_back(project_set(p));
  const Viewport view(all);

  SvgDocument svg(kWidth, kHeight);
  frame_box(svg);
  const auto draw = [&](const std::vector<Vector2d>& pts, const std::string& color, double r,
                        bool connect) {
    std::vector<Vector2d> px;
    for (const auto& p : pts) px.push_back(view.map(p));
    if (connect) svg.polyline(px, color, 1.0);
    for (const auto& p : px) svg.circle(p.x(), p.y(), r, color);
  };
  draw(train2, "#d62728", 2.5, true);
  draw(test2, "#2ca02c", 2.5, true);
  for (std::size_t i = 0; i < pred2.size(); ++i) draw(pred2[i], kPredictionColors[i], 2.0, false);

  double y = 22;
  const auto legend = [&](const std::string& color, const std::string& label) {
    svg.circle(kLeft, y - 4, 4, color);
    svg.text(kLeft + 10, y, label, 12);
    y += 16;
  };
  legend("#d62728", train.label.empty() ? "training" : train.label);
  legend("#2ca02c", test.label.empty() ? "test" : test.label);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    legend(kPredictionColors[i], predictions[i].label.empty() ? "prediction" : predictions[i].label);
  }
  scale_bar(svg, view.scale);
  return svg.str();
}

std::string plot_bases(std::span<const WeightedBase> bases, const std::string& title) {
  std::vector<Vector3d> positional;
  for (const auto& b : bases) {
    if (!b.orientation_only) positional.push_back(b.translation);
  }
  const PlaneFrame f = view_frame(positional);
  std::vector<Vector2d> pts;
  for (const auto& b : bases) pts.push_back(to_plane(f, b.translation));
  const Viewport view(pts);

  double w_min = std::numeric_limits<double>::infinity(), w_max = -w_min;
  for (const auto& b : bases) {
    w_min = std::min(w_min, b.weight);
    w_max = std::max(w_max, b.weight);
  }
  const double range = w_max - w_min;

  // light points first so heavy bases stay on top
  std::vector<std::size_t> order(bases.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return bases[a].weight < bases[b].weight; });

  SvgDocument svg(kWidth, kHeight);
  frame_box(svg);
  std::size_t n_orientation = 0;
  for (const std::size_t i : order) {
    const double t = range > 0 ? (bases[i].weight - w_min) / range : 1.0;
    const Vector2d p = view.map(pts[i]);
    const double r = 1.5 + 4.5 * t;
    if (bases[i].orientation_only) {
      ++n_orientation;
      svg.square(p.x(), p.y(), r, warm_color(t), "black");
    } else {
      svg.circle(p.x(), p.y(), r, warm_color(t));
    }
  }
  svg.text(kLeft, 22, title, 13);
  svg.circle(kLeft, 38 - 4, 4, warm_color(1.0));
  svg.text(kLeft + 10, 38,
           "position bases (" + std::to_string(bases.size() - n_orientation) + ")", 12);
  if (n_orientation > 0) {
    svg.square(kLeft, 54 - 4, 4, warm_color(1.0), "black");
    svg.text(kLeft + 10, 54, "orientation-only bases (" + std::to_string(n_orientation) + ")", 12);
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "weight %.4g .. %.4g", std::isfinite(w_min) ? w_min : 0.0,
                std::isfinite(w_max) ? w_max : 0.0);
  svg.text(kWidth - kRight, 22, buf, 11, "end");
  scale_bar(svg, view.scale);
  return svg.str();
}

}  // namespace aprlab
