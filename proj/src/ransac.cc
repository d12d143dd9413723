#include "aprlab/geo_solver.h"

#include <cmath>
#include <limits>
#include <random>

namespace aprlab {

std::vector<std::size_t> inliers_for(const Posed& pose, std::span<const Correspondence> matches,
                                     const Intrinsics& intr, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Projection p = project(pose, intr, matches[i].point);
    if (!p.behind && (p.pixel - matches[i].pixel).norm() < threshold) out.push_back(i);
  }
  return out;
}

namespace {

struct Score {
  std::size_t inliers = 0;
  double error = std::numeric_limits<double>::infinity();

  bool better_than(const Score& other) const {
    if (inliers != other.inliers) return inliers > other.inliers;
    return error < other.error;
  }
};

Score score_pose(const Posed& pose, std::span<const Correspondence> matches,
                 const Intrinsics& intr, double threshold) {
  Score s;
  s.error = 0;
  for (const auto& m : matches) {
    const Projection p = project(pose, intr, m.point);
    if (p.behind) continue;
    const double e = (p.pixel - m.pixel).norm();
    if (e < threshold) {
      ++s.inliers;
      s.error += e;
    }
  }
  return s;
}

int required_iterations(double inlier_ratio, double confidence) {
  if (inlier_ratio >= 1.0) return 1;
  const double all_good = inlier_ratio * inlier_ratio * inlier_ratio;
  if (all_good <= 0) return std::numeric_limits<int>::max();
  const double n = std::log(1.0 - confidence) / std::log(1.0 - all_good);
  if (!(n < static_cast<double>(std::numeric_limits<int>::max()))) {
    return std::numeric_limits<int>::max();
  }
  return std::max(1, static_cast<int>(std::ceil(n)));
}

}  // namespace

RansacResult ransac_pnp(std::span<const Correspondence> matches, const Intrinsics& intr,
                        const RansacConfig& cfg) {
  if (!(cfg.inlier_threshold > 0)) throw Error("ransac: threshold must be positive");
  if (!(cfg.confidence > 0 && cfg.confidence < 1)) throw Error("ransac: confidence must be in (0, 1)");
  if (matches.size() < 3) throw Error("ransac: need at least three matches");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, matches.size() - 1);
  Score best;
  best.inliers = 0;
  std::optional<Posed> best_pose;
  int needed = cfg.max_iterations;
  int iter = 0;
  while (iter < std::min(needed, cfg.max_iterations)) {
    ++iter;
    std::size_t idx[3];
    idx[0] = pick(rng);
    do idx[1] = pick(rng); while (idx[1] == idx[0]);
    do idx[2] = pick(rng); while (idx[2] == idx[0] || idx[2] == idx[1]);

    std::vector<Posed> candidates;
    try {
      candidates = p3p_solve(matches[idx[0]], matches[idx[1]], matches[idx[2]], intr);
    } catch (const Error&) {
      continue;
    }
    for (const auto& pose : candidates) {
      const Score s = score_pose(pose, matches, intr, cfg.inlier_threshold);
      if (!best_pose || s.better_than(best)) {
        best = s;
        best_pose = pose;
        needed = required_iterations(static_cast<double>(best.inliers) /
                                         static_cast<double>(matches.size()),
                                     cfg.confidence);
      }
    }
  }
  if (!best_pose || best.inliers < static_cast<std::size_t>(std::max(cfg.min_inliers, 0))) {
    throw LocalizationFailed();
  }
  return {*best_pose, inliers_for(*best_pose, matches, intr, cfg.inlier_threshold), iter};
}

}  // namespace aprlab
