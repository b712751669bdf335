#pragma once

// Skeleton graphs, joint-coordinate sequences, and the three missing-joint
// masking strategies. Masked coordinates are zero-filled.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "skelmae/core.hpp"

namespace skelmae {

inline constexpr std::array<const char*, 4> kPartNames = {"center_upper", "center_lower",
                                                          "right_limb", "left_limb"};

struct JointSpec {
  std::vector<std::string> joints;
  std::vector<std::pair<std::string, std::string>> edges;
  std::map<std::string, std::vector<std::string>> parts;
};

class SkeletonGraph {
 public:
  int num_joints() const { return static_cast<int>(joints_.size()); }
  const std::vector<std::string>& joints() const { return joints_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::map<std::string, std::vector<int>>& parts() const { return parts_; }
  /// Row-major N×N binary adjacency, zero diagonal.
  const std::vector<double>& adjacency() const { return adjacency_; }
  double adj(int i, int j) const {
    return adjacency_[static_cast<std::size_t>(i) * joints_.size() + static_cast<std::size_t>(j)];
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < joints_.size(); ++i)
      if (joints_[i] == name) return static_cast<int>(i);
    return -1;
  }

  /// D^{-1/2}(A + I)D^{-1/2}, the propagation operator used by graph convolution.
  std::vector<double> normalized_adjacency() const {
    const std::size_t n = joints_.size();
    std::vector<double> a(adjacency_);
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] += 1.0;
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) deg[i] += a[i * n + j];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= std::sqrt(deg[i] * deg[j]);
    return a;
  }

  JointSpec spec() const {
    JointSpec s;
    s.joints = joints_;
    for (auto [a, b] : edges_)
      s.edges.emplace_back(joints_[static_cast<std::size_t>(a)], joints_[static_cast<std::size_t>(b)]);
    for (const auto& [name, idx] : parts_)
      for (int i : idx) s.parts[name].push_back(joints_[static_cast<std::size_t>(i)]);
    return s;
  }

  bool operator==(const SkeletonGraph&) const = default;

 private:
  friend SkeletonGraph build_skeleton_graph(const JointSpec& spec);
  std::vector<std::string> joints_;
  std::vector<std::pair<int, int>> edges_;
  std::map<std::string, std::vector<int>> parts_;
  std::vector<double> adjacency_;
};

inline SkeletonGraph build_skeleton_graph(const JointSpec& spec) {
  SkeletonGraph g;
  const int n = static_cast<int>(spec.joints.size());
  require(n >= 1, ErrorCode::invalid_argument, "skeleton needs at least one joint");
  std::set<std::string> names(spec.joints.begin(), spec.joints.end());
  require(static_cast<int>(names.size()) == n, ErrorCode::invalid_argument, "duplicate joint name");
  g.joints_ = spec.joints;
  g.adjacency_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  for (const auto& [a, b] : spec.edges) {
    const int ia = g.index_of(a), ib = g.index_of(b);
    require(ia >= 0, ErrorCode::invalid_argument, "unknown joint name: " + a);
    require(ib >= 0, ErrorCode::invalid_argument, "unknown joint name: " + b);
    require(ia != ib, ErrorCode::invalid_argument, "self-loop edge on joint " + a);
    g.edges_.emplace_back(ia, ib);
    g.adjacency_[static_cast<std::size_t>(ia * n + ib)] = 1.0;
    g.adjacency_[static_cast<std::size_t>(ib * n + ia)] = 1.0;
  }
  // connectivity
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n; ++v)
      if (g.adj(u, v) != 0.0 && !seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
      }
  }
  require(std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; }),
          ErrorCode::invalid_argument, "disconnected graph");
  // partition
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  int part_id = 0;
  for (const auto& [part, members] : spec.parts) {
    require(std::find(kPartNames.begin(), kPartNames.end(), part) != kPartNames.end(),
            ErrorCode::invalid_argument, "unknown body part: " + part);
    std::vector<int> idx;
    for (const auto& j : members) {
      const int i = g.index_of(j);
      require(i >= 0, ErrorCode::invalid_argument, "unknown joint name: " + j);
      require(owner[static_cast<std::size_t>(i)] < 0, ErrorCode::invalid_argument,
              "overlapping partition at joint " + j);
      owner[static_cast<std::size_t>(i)] = part_id;
      idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end());
    g.parts_[part] = std::move(idx);
    ++part_id;
  }
  require(std::all_of(owner.begin(), owner.end(), [](int o) { return o >= 0; }),
          ErrorCode::invalid_argument, "incomplete partition");
  return g;
}

/// The 16-joint walker used by the synthetic generator.
inline JointSpec default_walker_spec() {
  JointSpec s;
  s.joints = {"head",       "neck",       "chest",      "pelvis",    "r_shoulder", "r_elbow",
              "r_wrist",    "l_shoulder", "l_elbow",    "l_wrist",   "r_hip",      "r_knee",
              "r_ankle",    "l_hip",      "l_knee",     "l_ankle"};
  s.edges = {{"head", "neck"},         {"neck", "chest"},      {"chest", "pelvis"},
             {"chest", "r_shoulder"},  {"r_shoulder", "r_elbow"}, {"r_elbow", "r_wrist"},
             {"chest", "l_shoulder"},  {"l_shoulder", "l_elbow"}, {"l_elbow", "l_wrist"},
             {"pelvis", "r_hip"},      {"r_hip", "r_knee"},    {"r_knee", "r_ankle"},
             {"pelvis", "l_hip"},      {"l_hip", "l_knee"},    {"l_knee", "l_ankle"}};
  s.parts = {{"center_upper", {"head", "neck", "chest"}},
             {"center_lower", {"pelvis"}},
             {"right_limb", {"r_shoulder", "r_elbow", "r_wrist", "r_hip", "r_knee", "r_ankle"}},
             {"left_limb", {"l_shoulder", "l_elbow", "l_wrist", "l_hip", "l_knee", "l_ankle"}}};
  return s;
}

inline const SkeletonGraph& default_walker_graph() {
  static const SkeletonGraph g = build_skeleton_graph(default_walker_spec());
  return g;
}

/// T×N×C joint coordinates in meters, row-major (t, n, c).
struct SkeletonSequence {
  int frames = 0;
  int joints = 0;
  int channels = 3;
  std::vector<double> data;
  double fps = 2.5;
  int frame_index_origin = 0;
  std::string agent_id;

  SkeletonSequence() = default;
  SkeletonSequence(int t, int n, int c = 3)
      : frames(t), joints(n), channels(c),
        data(static_cast<std::size_t>(t) * static_cast<std::size_t>(n) * static_cast<std::size_t>(c), 0.0) {}

  std::size_t offset(int t, int n) const {
    return (static_cast<std::size_t>(t) * static_cast<std::size_t>(joints) + static_cast<std::size_t>(n)) *
           static_cast<std::size_t>(channels);
  }
  double& at(int t, int n, int c) { return data[offset(t, n) + static_cast<std::size_t>(c)]; }
  double at(int t, int n, int c) const { return data[offset(t, n) + static_cast<std::size_t>(c)]; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const SkeletonSequence&) const = default;
};

enum class MaskStrategy { temporally_consistent, random, body_part };

inline const char* to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::temporally_consistent: return "temporally_consistent";
    case MaskStrategy::random: return "random";
    case MaskStrategy::body_part: return "body_part";
  }
  return "?";
}

inline MaskStrategy parse_mask_strategy(const std::string& s) {
  if (s == "temporally_consistent" || s == "tc") return MaskStrategy::temporally_consistent;
  if (s == "random") return MaskStrategy::random;
  if (s == "body_part" || s == "bp") return MaskStrategy::body_part;
  throw Error(ErrorCode::invalid_argument, "unknown mask strategy: " + s);
}

struct MaskSpec {
  MaskStrategy strategy = MaskStrategy::random;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

/// T×N, true = missing.
struct MaskTensor {
  int frames = 0;
  int joints = 0;
  std::vector<char> mask;

  MaskTensor() = default;
  MaskTensor(int t, int n, bool fill = false)
      : frames(t), joints(n),
        mask(static_cast<std::size_t>(t) * static_cast<std::size_t>(n), fill ? 1 : 0) {}

  bool at(int t, int n) const {
    return mask[static_cast<std::size_t>(t) * static_cast<std::size_t>(joints) + static_cast<std::size_t>(n)] != 0;
  }
  void set(int t, int n, bool v) {
    mask[static_cast<std::size_t>(t) * static_cast<std::size_t>(joints) + static_cast<std::size_t>(n)] = v ? 1 : 0;
  }
  int count() const {
    return static_cast<int>(std::count(mask.begin(), mask.end(), static_cast<char>(1)));
  }
  int count_frame(int t) const {
    int c = 0;
    for (int n = 0; n < joints; ++n) c += at(t, n) ? 1 : 0;
    return c;
  }
  std::string digest() const {
    Digest d;
    d.i64(frames).i64(joints).bytes(mask.data(), mask.size());
    return d.hex();
  }

  bool operator==(const MaskTensor&) const = default;
};

/// floor(r·N), with a tolerance so ratios like 0.29·100 land on 29.
inline int masked_joint_count(double ratio, int joints) {
  return static_cast<int>(std::floor(ratio * static_cast<double>(joints) + 1e-9));
}

inline MaskTensor sample_mask(const MaskSpec& spec, int frames, const SkeletonGraph& graph) {
  require(frames >= 1, ErrorCode::invalid_argument, "sample_mask: T must be >= 1");
  require(spec.ratio >= 0.0 && spec.ratio <= 1.0, ErrorCode::invalid_argument,
          "mask ratio must lie in [0,1]");
  const int n = graph.num_joints();
  MaskTensor m(frames, n);
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(spec.strategy) + 101));
  switch (spec.strategy) {
    case MaskStrategy::random: {
      const int k = masked_joint_count(spec.ratio, n);
      for (int t = 0; t < frames; ++t)
        for (int j : rng.sample_without_replacement(n, k)) m.set(t, j, true);
      break;
    }
    case MaskStrategy::temporally_consistent: {
      const int k = masked_joint_count(spec.ratio, n);
      const auto chosen = rng.sample_without_replacement(n, k);
      for (int t = 0; t < frames; ++t)
        for (int j : chosen) m.set(t, j, true);
      break;
    }
    case MaskStrategy::body_part: {
      // Whole parts in random order until the masked fraction first reaches r.
      std::vector<const std::vector<int>*> parts;
      for (const auto& [name, idx] : graph.parts()) parts.push_back(&idx);
      rng.shuffle(parts);
      std::vector<int> chosen;
      const double target = spec.ratio * n - 1e-9;
      for (const auto* p : parts) {
        if (static_cast<double>(chosen.size()) >= target) break;
        chosen.insert(chosen.end(), p->begin(), p->end());
      }
      for (int t = 0; t < frames; ++t)
        for (int j : chosen) m.set(t, j, true);
      break;
    }
  }
  return m;
}

inline SkeletonSequence apply_mask(const SkeletonSequence& seq, const MaskTensor& mask) {
  require(mask.frames == seq.frames && mask.joints == seq.joints, ErrorCode::shape_mismatch,
          "apply_mask: mask dims (" + std::to_string(mask.frames) + "," + std::to_string(mask.joints) +
              ") vs sequence (" + std::to_string(seq.frames) + "," + std::to_string(seq.joints) + ")");
  SkeletonSequence out = seq;
  for (int t = 0; t < seq.frames; ++t)
    for (int n = 0; n < seq.joints; ++n)
      if (mask.at(t, n))
        for (int c = 0; c < seq.channels; ++c) out.at(t, n, c) = 0.0;
  return out;
}

}  // namespace skelmae
