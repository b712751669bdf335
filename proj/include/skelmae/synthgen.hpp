#pragma once

// Procedural pedestrian scenes. Each walker follows a waypoint-free behavior
// (straight, left/right turn, stop-and-go) and carries a forward-kinematics
// skeleton whose upper body anticipates upcoming heading and speed changes.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "skelmae/core.hpp"
#include "skelmae/skeleton.hpp"

namespace skelmae::synth {

enum class Behavior { straight, turn_left, turn_right, stop_go };

inline constexpr std::array<Behavior, 4> kBehaviors = {Behavior::straight, Behavior::turn_left,
                                                       Behavior::turn_right, Behavior::stop_go};

inline const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::straight: return "straight";
    case Behavior::turn_left: return "turn_left";
    case Behavior::turn_right: return "turn_right";
    case Behavior::stop_go: return "stop_go";
  }
  return "?";
}

inline Behavior parse_behavior(const std::string& s) {
  for (Behavior b : kBehaviors)
    if (s == to_string(b)) return b;
  throw Error(ErrorCode::format_error, "unknown behavior label: " + s);
}

inline constexpr double kMaxSpeed = 2.5;

struct GenConfig {
  int n_agents = 4;
  double duration_s = 12.0;
  double fps = 2.5;
  /// straight, turn_left, turn_right, stop_go
  std::array<double, 4> behavior_mix = {0.4, 0.2, 0.2, 0.2};
  int turn_anticipation_frames = 3;
  double noise_std = 0.02;
  double area_m = 12.0;
  std::array<double, 2> speed_range = {0.8, 1.6};
  std::array<double, 2> heading_range = {-std::numbers::pi, std::numbers::pi};
  int obs_frames = 9;
  int pred_frames = 12;

  int total_frames() const { return static_cast<int>(std::floor(duration_s * fps + 1e-9)); }
};

struct AgentTrack {
  std::string agent_id;
  std::vector<double> trajectory;  // T×2
  SkeletonSequence skeleton;       // T×N×3
  Behavior behavior = Behavior::straight;

  int frames() const { return static_cast<int>(trajectory.size() / 2); }
  bool operator==(const AgentTrack&) const = default;
};

struct Scene {
  std::string scene_id;
  double fps = 2.5;
  std::vector<AgentTrack> agents;

  int frames() const { return agents.empty() ? 0 : agents.front().frames(); }
  bool operator==(const Scene&) const = default;
};

/// Per-agent limb dimensions, meters.
struct BodyDims {
  double hip_height, spine, neck, head, shoulder, upper_arm, forearm, hip, thigh, shin;

  static BodyDims scaled(double s) {
    return {0.92 * s, 0.45 * s, 0.15 * s, 0.15 * s, 0.18 * s,
            0.28 * s, 0.26 * s, 0.10 * s, 0.44 * s, 0.42 * s};
  }
};

namespace detail {

struct V3 {
  double x, y, z;
};
inline V3 operator+(V3 a, V3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline V3 operator-(V3 a, V3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline V3 operator*(double s, V3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline V3 unit(V3 a) {
  const double n = std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z);
  return {a.x / n, a.y / n, a.z / n};
}

inline double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

}  // namespace detail

/// Writes one frame of the walker pose. `hip_yaw` follows the path heading;
/// `torso_yaw` and `lean` are the anticipatory upper-body signals.
inline void pose_frame(SkeletonSequence& s, int t, const BodyDims& b, double px, double py,
                       double hip_yaw, double torso_yaw, double lean, double phase, double amp) {
  using detail::V3;
  const V3 up{0, 0, 1};
  const V3 fh{std::cos(hip_yaw), std::sin(hip_yaw), 0};
  const V3 lh{-std::sin(hip_yaw), std::cos(hip_yaw), 0};
  const V3 fb{std::cos(torso_yaw), std::sin(torso_yaw), 0};
  const V3 lb{-std::sin(torso_yaw), std::cos(torso_yaw), 0};
  auto dir = [&](const V3& fwd, double ang) { return V3{std::sin(ang) * fwd.x, std::sin(ang) * fwd.y, -std::cos(ang)}; };

  const V3 pelvis{px, py, b.hip_height};
  const V3 chest = pelvis + b.spine * detail::unit(up + lean * fb);
  const V3 neck = chest + b.neck * up;
  const V3 head = neck + b.head * detail::unit(up + 0.25 * fb);
  const V3 r_sh = chest - b.shoulder * lb;
  const V3 l_sh = chest + b.shoulder * lb;
  const double sw = std::sin(phase);
  const double arm_r = -amp * sw, arm_l = amp * sw;
  const V3 r_el = r_sh + b.upper_arm * dir(fb, arm_r);
  const V3 r_wr = r_el + b.forearm * dir(fb, arm_r + 0.5 * amp + 0.2);
  const V3 l_el = l_sh + b.upper_arm * dir(fb, arm_l);
  const V3 l_wr = l_el + b.forearm * dir(fb, arm_l + 0.5 * amp + 0.2);
  const V3 r_hip = pelvis - b.hip * lh;
  const V3 l_hip = pelvis + b.hip * lh;
  const double leg_r = amp * sw, leg_l = -amp * sw;
  const double flex_r = 0.6 * amp * std::max(0.0, std::cos(phase));
  const double flex_l = 0.6 * amp * std::max(0.0, -std::cos(phase));
  const V3 r_kn = r_hip + b.thigh * dir(fh, leg_r);
  const V3 r_an = r_kn + b.shin * dir(fh, leg_r - flex_r);
  const V3 l_kn = l_hip + b.thigh * dir(fh, leg_l);
  const V3 l_an = l_kn + b.shin * dir(fh, leg_l - flex_l);

  const V3 joints[16] = {head, neck, chest, pelvis, r_sh, r_el, r_wr, l_sh,
                         l_el, l_wr, r_hip, r_kn, r_an, l_hip, l_kn, l_an};
  for (int n = 0; n < 16; ++n) {
    s.at(t, n, 0) = joints[n].x;
    s.at(t, n, 1) = joints[n].y;
    s.at(t, n, 2) = joints[n].z;
  }
}

inline void validate(const GenConfig& cfg) {
  require(cfg.n_agents >= 1, ErrorCode::invalid_argument, "n_agents must be >= 1");
  require(cfg.fps > 0.0, ErrorCode::invalid_argument, "fps must be positive");
  double total = 0.0;
  for (double w : cfg.behavior_mix) {
    require(w >= 0.0, ErrorCode::invalid_argument, "invalid behavior mix: negative weight");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorCode::invalid_argument,
          "invalid behavior mix: weights sum to " + std::to_string(total) + ", expected 1");
  require(cfg.total_frames() >= cfg.obs_frames + cfg.pred_frames, ErrorCode::invalid_argument,
          "duration shorter than one observation+prediction window");
  require(cfg.speed_range[0] >= 0.0 && cfg.speed_range[1] >= cfg.speed_range[0],
          ErrorCode::invalid_argument, "invalid speed range");
  require(cfg.turn_anticipation_frames >= 0, ErrorCode::invalid_argument,
          "turn_anticipation_frames must be >= 0");
}

inline Behavior draw_behavior(const GenConfig& cfg, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    acc += cfg.behavior_mix[i];
    if (u < acc) return kBehaviors[i];
  }
  for (std::size_t i = 4; i-- > 0;)
    if (cfg.behavior_mix[i] > 0.0) return kBehaviors[i];
  return Behavior::straight;
}

inline AgentTrack generate_agent(const GenConfig& cfg, Rng& rng, const std::string& agent_id) {
  const int frames = cfg.total_frames();
  const int lead = cfg.turn_anticipation_frames;
  const int span = frames + lead + 1;
  const Behavior behavior = draw_behavior(cfg, rng);
  const BodyDims body = BodyDims::scaled(rng.uniform(0.9, 1.1));
  const double h0 = rng.uniform(cfg.heading_range[0], cfg.heading_range[1]);
  const double v0 = std::min(kMaxSpeed, rng.uniform(cfg.speed_range[0], cfg.speed_range[1]));
  double px = rng.uniform(-0.5 * cfg.area_m, 0.5 * cfg.area_m);
  double py = rng.uniform(-0.5 * cfg.area_m, 0.5 * cfg.area_m);

  // Heading and speed profiles extend past the track so the upper body can look ahead.
  std::vector<double> heading(static_cast<std::size_t>(span), h0);
  std::vector<double> speed(static_cast<std::size_t>(span), v0);
  const int event_lo = std::max(1, cfg.obs_frames - 3);
  const int event_hi = std::max(event_lo, frames - 4);
  if (behavior == Behavior::turn_left || behavior == Behavior::turn_right) {
    const int t_turn = event_lo + static_cast<int>(rng.below(static_cast<std::size_t>(event_hi - event_lo + 1)));
    const double mag = rng.uniform(std::numbers::pi / 4.0, std::numbers::pi / 2.0);
    const double delta = behavior == Behavior::turn_left ? mag : -mag;
    const double dur = 3.0;
    for (int t = 0; t < span; ++t)
      heading[static_cast<std::size_t>(t)] = h0 + delta * detail::smoothstep((t - t_turn) / dur);
  } else if (behavior == Behavior::stop_go) {
    const int t_stop = event_lo + static_cast<int>(rng.below(static_cast<std::size_t>(event_hi - event_lo + 1)));
    const int hold = 3 + static_cast<int>(rng.below(4));
    for (int t = 0; t < span; ++t) {
      const double down = 1.0 - detail::smoothstep((t - t_stop) / 2.0);
      const double upr = detail::smoothstep((t - t_stop - 2 - hold) / 2.0);
      speed[static_cast<std::size_t>(t)] = v0 * std::max(down, upr);
    }
  }
  if (cfg.noise_std > 0.0) {
    double drift = 0.0;
    for (int t = 0; t < span; ++t) {
      drift += cfg.noise_std * rng.normal();
      heading[static_cast<std::size_t>(t)] += drift;
      auto& v = speed[static_cast<std::size_t>(t)];
      if (v > 0.0) v = std::clamp(v * (1.0 + cfg.noise_std * rng.normal()), 0.0, kMaxSpeed);
    }
  }

  AgentTrack a;
  a.agent_id = agent_id;
  a.behavior = behavior;
  a.trajectory.resize(static_cast<std::size_t>(frames) * 2);
  a.skeleton = SkeletonSequence(frames, 16, 3);
  a.skeleton.fps = cfg.fps;
  a.skeleton.agent_id = agent_id;
  double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int t = 0; t < frames; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    a.trajectory[2 * ut] = px;
    a.trajectory[2 * ut + 1] = py;
    const double v = speed[ut];
    const double amp = std::min(0.5, 0.05 + 0.35 * v);
    const double torso = heading[ut + static_cast<std::size_t>(lead)];
    const double lean = 0.08 * speed[ut + static_cast<std::size_t>(lead)];
    pose_frame(a.skeleton, t, body, px, py, heading[ut], torso, lean, phase, amp);
    phase += 2.0 * std::numbers::pi * (0.15 + 0.75 * v) / cfg.fps;
    px += v / cfg.fps * std::cos(heading[ut]);
    py += v / cfg.fps * std::sin(heading[ut]);
  }
  return a;
}

inline Scene generate_scene(const GenConfig& cfg, std::uint64_t seed, std::string scene_id = "") {
  validate(cfg);
  Scene s;
  s.scene_id = scene_id.empty() ? "scene-" + std::to_string(seed) : std::move(scene_id);
  s.fps = cfg.fps;
  for (int i = 0; i < cfg.n_agents; ++i) {
    Rng rng(derive_seed(seed, 7, static_cast<std::uint64_t>(i)));
    s.agents.push_back(generate_agent(cfg, rng, "a" + std::to_string(i)));
  }
  return s;
}

inline std::vector<Scene> generate_dataset(const GenConfig& cfg, int n_scenes, std::uint64_t seed) {
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "scene-%05d", i);
    out.push_back(generate_scene(cfg, derive_seed(seed, 11, static_cast<std::uint64_t>(i)), id));
  }
  return out;
}

// ---------------------------------------------------------------- windows

struct AgentObservation {
  std::vector<double> traj;    // T_obs×2
  SkeletonSequence skeleton;   // T_obs×N×3
};

struct WindowSample {
  std::vector<double> observed_traj;  // T_obs×2
  SkeletonSequence observed_skeleton;
  std::vector<double> future_traj;    // T_pred×2
  std::vector<AgentObservation> neighbors;
  Behavior behavior = Behavior::straight;
  std::string scene_id;
  std::string agent_id;
  int start_frame = 0;

  int obs_frames() const { return static_cast<int>(observed_traj.size() / 2); }
  int pred_frames() const { return static_cast<int>(future_traj.size() / 2); }
};

inline constexpr int kNeighborCap = 8;

inline SkeletonSequence slice_frames(const SkeletonSequence& s, int start, int len) {
  SkeletonSequence out(len, s.joints, s.channels);
  out.fps = s.fps;
  out.agent_id = s.agent_id;
  out.frame_index_origin = s.frame_index_origin + start;
  std::copy_n(s.data.begin() + static_cast<std::ptrdiff_t>(s.offset(start, 0)), out.data.size(), out.data.begin());
  return out;
}

inline std::vector<double> slice_traj(const std::vector<double>& traj, int start, int len) {
  return {traj.begin() + 2 * start, traj.begin() + 2 * (start + len)};
}

inline int windows_per_agent(int total, int obs, int pred, int stride) {
  const int room = total - obs - pred;
  return room < 0 ? 0 : room / stride + 1;
}

inline std::vector<WindowSample> window_scene(const Scene& scene, int obs, int pred, int stride,
                                              int neighbor_cap = kNeighborCap) {
  require(obs >= 1 && pred >= 1, ErrorCode::invalid_argument, "T_obs and T_pred must be >= 1");
  require(stride >= 1, ErrorCode::invalid_argument, "stride must be >= 1");
  std::vector<WindowSample> out;
  const int total = scene.frames();
  const int count = windows_per_agent(total, obs, pred, stride);
  for (std::size_t ai = 0; ai < scene.agents.size(); ++ai) {
    const auto& agent = scene.agents[ai];
    for (int w = 0; w < count; ++w) {
      const int start = w * stride;
      const int last = start + obs - 1;
      WindowSample s;
      s.observed_traj = slice_traj(agent.trajectory, start, obs);
      s.observed_skeleton = slice_frames(agent.skeleton, start, obs);
      s.future_traj = slice_traj(agent.trajectory, start + obs, pred);
      s.behavior = agent.behavior;
      s.scene_id = scene.scene_id;
      s.agent_id = agent.agent_id;
      s.start_frame = start;
      std::vector<std::pair<double, std::size_t>> by_dist;
      for (std::size_t j = 0; j < scene.agents.size(); ++j) {
        if (j == ai) continue;
        const auto& o = scene.agents[j];
        const double dx = o.trajectory[2 * static_cast<std::size_t>(last)] - agent.trajectory[2 * static_cast<std::size_t>(last)];
        const double dy = o.trajectory[2 * static_cast<std::size_t>(last) + 1] - agent.trajectory[2 * static_cast<std::size_t>(last) + 1];
        by_dist.emplace_back(dx * dx + dy * dy, j);
      }
      std::sort(by_dist.begin(), by_dist.end());
      if (static_cast<int>(by_dist.size()) > neighbor_cap) by_dist.resize(static_cast<std::size_t>(neighbor_cap));
      for (auto [d, j] : by_dist)
        s.neighbors.push_back({slice_traj(scene.agents[j].trajectory, start, obs),
                               slice_frames(scene.agents[j].skeleton, start, obs)});
      out.push_back(std::move(s));
    }
  }
  return out;
}

enum class Split { train, val, test };

/// 70/15/15 by scene-id hash, so every window of a scene lands in one split.
inline Split split_of(const std::string& scene_id) {
  const auto bucket = mix64(Digest{}.str(scene_id).value()) % 100;
  if (bucket < 70) return Split::train;
  if (bucket < 85) return Split::val;
  return Split::test;
}

inline std::vector<Scene> filter_split(const std::vector<Scene>& scenes, Split split) {
  std::vector<Scene> out;
  for (const auto& s : scenes)
    if (split_of(s.scene_id) == split) out.push_back(s);
  return out;
}

}  // namespace skelmae::synth
