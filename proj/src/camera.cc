#include "aprlab/geo_solver.h"

#include "aprlab/io.h"

#include <sstream>

namespace aprlab {

Intrinsics::Intrinsics(double fx_, double fy_, double cx_, double cy_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
  if (!(fx > 0) || !(fy > 0)) throw Error("intrinsics: focal lengths must be positive");
}

Projection project(const Posed& pose, const Intrinsics& intr, const Vector3d& point) {
  const Vector3d y = pose.rotation() * (point - pose.position());
  Projection p;
  p.depth = y.z();
  if (y.z() <= 1e-9) return p;
  p.behind = false;
  p.pixel = {intr.fx * y.x() / y.z() + intr.cx, intr.fy * y.y() / y.z() + intr.cy};
  return p;
}

Vector3d bearing(const Intrinsics& intr, const Vector2d& pixel) {
  return Vector3d((pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy, 1.0)
      .normalized();
}

void write_correspondences(std::ostream& out, std::span<const CorrespondenceBlock> blocks) {
  for (const auto& b : blocks) {
    const auto& k = b.intrinsics;
    out << b.image_id << ' ' << b.matches.size() << ' ' << format_number(k.fx) << ' '
        << format_number(k.fy) << ' ' << format_number(k.cx) << ' ' << format_number(k.cy)
        << '\n';
    for (const auto& m : b.matches) {
      out << format_number(m.pixel.x()) << ' ' << format_number(m.pixel.y()) << ' '
          << format_number(m.point.x()) << ' ' << format_number(m.point.y()) << ' '
          << format_number(m.point.z()) << '\n';
    }
  }
}

std::vector<CorrespondenceBlock> read_correspondences(std::istream& in) {
  std::vector<CorrespondenceBlock> blocks;
  std::string line;
  auto numbers = [](std::istringstream& ss, int count) {
    std::vector<double> v;
    std::string tok;
    for (int i = 0; i < count; ++i) {
      if (!(ss >> tok)) throw Error("correspondence file: short row");
      v.push_back(detail::parse_number(tok));
    }
    return v;
  };
  while (detail::next_data_line(in, line)) {
    std::istringstream header(line);
    CorrespondenceBlock block;
    long count = 0;
    if (!(header >> block.image_id >> count) || count < 0) {
      throw Error("correspondence file: header must be `image_id count fx fy cx cy`");
    }
    const auto k = numbers(header, 4);
    block.intrinsics = Intrinsics(k[0], k[1], k[2], k[3]);
    for (long i = 0; i < count; ++i) {
      if (!detail::next_data_line(in, line)) throw Error("correspondence file: truncated block");
      std::istringstream ss(line);
      const auto v = numbers(ss, 5);
      block.matches.push_back({Vector2d(v[0], v[1]), Vector3d(v[2], v[3], v[4])});
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

}  // namespace aprlab
