#pragma once

// Agent-centric input frames shared by pretraining and prediction.
//
// Skeletons: each frame is centered on the agent's planar position (the
// pelvis ground projection) and, optionally, yawed so the agent's last
// observed walking direction is +x. Trajectories: translated so the target's
// last observed position is the origin and yawed by the target's heading.

#include <cmath>
#include <vector>

#include "skelmae/skeleton.hpp"

namespace skelmae::norm {

/// Walking direction at the end of a T×2 track; falls back to earlier
/// displacements, then to 0, when the agent is standing still.
inline double heading_of(const std::vector<double>& traj) {
  const int t = static_cast<int>(traj.size() / 2);
  for (int i = t - 1; i >= 1; --i) {
    const double dx = traj[2 * static_cast<std::size_t>(i)] - traj[2 * static_cast<std::size_t>(i - 1)];
    const double dy = traj[2 * static_cast<std::size_t>(i) + 1] - traj[2 * static_cast<std::size_t>(i - 1) + 1];
    if (dx * dx + dy * dy > 1e-12) return std::atan2(dy, dx);
  }
  return 0.0;
}

/// world -> local: R(-yaw) · (p - origin)
struct PlanarFrame {
  double ox = 0.0, oy = 0.0, c = 1.0, s = 0.0;

  static PlanarFrame at_end_of(const std::vector<double>& traj, bool rotate) {
    PlanarFrame f;
    const std::size_t last = traj.size() - 2;
    f.ox = traj[last];
    f.oy = traj[last + 1];
    if (rotate) {
      const double yaw = heading_of(traj);
      f.c = std::cos(yaw);
      f.s = std::sin(yaw);
    }
    return f;
  }

  void to_local(double x, double y, double& lx, double& ly) const {
    const double dx = x - ox, dy = y - oy;
    lx = c * dx + s * dy;
    ly = -s * dx + c * dy;
  }
  void to_world(double lx, double ly, double& x, double& y) const {
    x = c * lx - s * ly + ox;
    y = s * lx + c * ly + oy;
  }

  std::vector<double> traj_to_local(const std::vector<double>& traj) const {
    std::vector<double> out(traj.size());
    for (std::size_t i = 0; i + 1 < traj.size(); i += 2) to_local(traj[i], traj[i + 1], out[i], out[i + 1]);
    return out;
  }
  std::vector<double> traj_to_world(const std::vector<double>& local) const {
    std::vector<double> out(local.size());
    for (std::size_t i = 0; i + 1 < local.size(); i += 2) to_world(local[i], local[i + 1], out[i], out[i + 1]);
    return out;
  }
};

/// Per-frame centering on the agent's own planar track, optional yaw alignment
/// with the agent's last observed heading. Height is left untouched.
inline SkeletonSequence canonical_skeleton(const SkeletonSequence& seq, const std::vector<double>& traj,
                                           bool rotate) {
  require(static_cast<int>(traj.size() / 2) == seq.frames, ErrorCode::shape_mismatch,
          "canonical_skeleton: trajectory and skeleton frame counts differ");
  double c = 1.0, s = 0.0;
  if (rotate) {
    const double yaw = heading_of(traj);
    c = std::cos(yaw);
    s = std::sin(yaw);
  }
  SkeletonSequence out = seq;
  for (int t = 0; t < seq.frames; ++t) {
    const double ox = traj[2 * static_cast<std::size_t>(t)], oy = traj[2 * static_cast<std::size_t>(t) + 1];
    for (int n = 0; n < seq.joints; ++n) {
      const double dx = seq.at(t, n, 0) - ox, dy = seq.at(t, n, 1) - oy;
      out.at(t, n, 0) = c * dx + s * dy;
      out.at(t, n, 1) = -s * dx + c * dy;
    }
  }
  return out;
}

}  // namespace skelmae::norm
