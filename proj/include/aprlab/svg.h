#pragma once

#include "aprlab/types.h"

#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace aprlab {

/// Minimal SVG writer. Coordinates are printed with two decimals so output
/// bytes depend only on the inputs.
class SvgDocument {
public:
  SvgDocument(double width, double height);

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none");
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0);
  void polyline(std::span<const Vector2d> points, const std::string& stroke, double width = 1.0);
  void circle(double cx, double cy, double r, const std::string& fill,
              const std::string& stroke = "none");
  void square(double cx, double cy, double half, const std::string& fill,
              const std::string& stroke = "none");
  void text(double x, double y, const std::string& content, double size = 12.0,
            const std::string& anchor = "start");

  double width() const { return width_; }
  double height() const { return height_; }
  std::string str() const;

private:
  double width_, height_;
  std::ostringstream body_;
};

std::string svg_number(double v);
std::string svg_escape(const std::string& s);

struct PointSet {
  std::string label;
  std::vector<Vector3d> points;
};

/// Top-down view onto the dominant plane of the training and test positions.
/// Training is red, test ground truth green, and up to three prediction sets
/// blue, purple and cyan. Includes a legend and a scale bar in meters.
std::string plot_trajectories(const PointSet& train, const PointSet& test,
                              std::span<const PointSet> predictions);

struct WeightedBase {
  Vector3d translation;
  double weight = 0.0;
  bool orientation_only = false;
};

/// Scatter of base translations; larger weights get warmer colors and larger
/// points. Orientation-only bases are drawn as squares.
std::string plot_bases(std::span<const WeightedBase> bases, const std::string& title);

}  // namespace aprlab
