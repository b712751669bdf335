#pragma once

// Line-delimited scene files. The first line is a header record describing the
// skeleton; every following line holds one (scene, agent, frame) record.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "skelmae/core.hpp"
#include "skelmae/skeleton.hpp"
#include "skelmae/synthgen.hpp"

namespace skelmae::io {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

struct Dataset {
  SkeletonGraph graph;
  double fps = 2.5;
  std::vector<synth::Scene> scenes;
};

inline json header_record(const SkeletonGraph& graph, double fps) {
  const JointSpec spec = graph.spec();
  json edges = json::array();
  for (const auto& [a, b] : spec.edges) edges.push_back({a, b});
  json parts = json::object();
  for (const auto& [name, joints] : spec.parts) parts[name] = joints;
  return {{"format_version", kFormatVersion},
          {"fps", fps},
          {"joint_names", spec.joints},
          {"edges", edges},
          {"parts", parts}};
}

inline SkeletonGraph graph_from_header(const json& h, double* fps_out = nullptr) {
  try {
    require(h.at("format_version").get<int>() == kFormatVersion, ErrorCode::format_error,
            "malformed header: unsupported format_version");
    JointSpec spec;
    spec.joints = h.at("joint_names").get<std::vector<std::string>>();
    for (const auto& e : h.at("edges")) spec.edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    for (auto it = h.at("parts").begin(); it != h.at("parts").end(); ++it)
      spec.parts[it.key()] = it.value().get<std::vector<std::string>>();
    if (fps_out) *fps_out = h.at("fps").get<double>();
    return build_skeleton_graph(spec);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("malformed header: ") + e.what());
  }
}

inline void write_dataset(const std::vector<synth::Scene>& scenes, const std::string& path,
                          const SkeletonGraph& graph = default_walker_graph(), double fps = 2.5) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  if (!scenes.empty()) fps = scenes.front().fps;
  out << header_record(graph, fps).dump() << '\n';
  const int n = graph.num_joints();
  for (const auto& scene : scenes) {
    require(scene.fps == fps, ErrorCode::invalid_argument, "all scenes in a file must share fps");
    for (const auto& agent : scene.agents) {
      require(agent.skeleton.joints == n, ErrorCode::shape_mismatch, "joint count mismatch");
      for (int t = 0; t < agent.frames(); ++t) {
        json joints = json::array();
        for (int j = 0; j < n; ++j)
          joints.push_back({agent.skeleton.at(t, j, 0), agent.skeleton.at(t, j, 1), agent.skeleton.at(t, j, 2)});
        json rec = {{"scene_id", scene.scene_id},
                    {"agent_id", agent.agent_id},
                    {"frame", t + agent.skeleton.frame_index_origin},
                    {"behavior", synth::to_string(agent.behavior)},
                    {"xy", {agent.trajectory[2 * static_cast<std::size_t>(t)], agent.trajectory[2 * static_cast<std::size_t>(t) + 1]}},
                    {"joints", joints}};
        out << rec.dump() << '\n';
      }
    }
  }
  require(out.good(), ErrorCode::io_error, "write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io_error, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::format_error, "malformed header: empty file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("malformed header: ") + e.what());
  }
  Dataset ds;
  ds.graph = graph_from_header(header, &ds.fps);
  const int n = ds.graph.num_joints();

  struct Pending {
    synth::AgentTrack track;
    std::vector<double> joints;
    int first_frame = 0;
    int next_frame = 0;
  };
  std::vector<std::string> scene_order;
  std::map<std::string, std::vector<std::string>> agent_order;
  std::map<std::pair<std::string, std::string>, Pending> pending;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::format_error, "malformed record at " + where + ": " + e.what());
    }
    try {
      const auto scene_id = rec.at("scene_id").get<std::string>();
      const auto agent_id = rec.at("agent_id").get<std::string>();
      const int frame = rec.at("frame").get<int>();
      const auto& joints = rec.at("joints");
      require(static_cast<int>(joints.size()) == n, ErrorCode::shape_mismatch,
              "joint count mismatch at " + where + ": record has " + std::to_string(joints.size()) +
                  ", header declares " + std::to_string(n));
      auto key = std::make_pair(scene_id, agent_id);
      auto it = pending.find(key);
      if (it == pending.end()) {
        if (!agent_order.count(scene_id)) scene_order.push_back(scene_id);
        agent_order[scene_id].push_back(agent_id);
        Pending p;
        p.track.agent_id = agent_id;
        p.track.behavior = rec.contains("behavior") ? synth::parse_behavior(rec["behavior"].get<std::string>())
                                                    : synth::Behavior::straight;
        p.first_frame = frame;
        p.next_frame = frame;
        it = pending.emplace(key, std::move(p)).first;
      }
      Pending& p = it->second;
      require(frame == p.next_frame, ErrorCode::format_error, "non-contiguous frame index at " + where);
      ++p.next_frame;
      p.track.trajectory.push_back(rec.at("xy").at(0).get<double>());
      p.track.trajectory.push_back(rec.at("xy").at(1).get<double>());
      for (const auto& j : joints) {
        require(j.size() == 3, ErrorCode::format_error, "joint record must have 3 components at " + where);
        for (int c = 0; c < 3; ++c) p.joints.push_back(j.at(static_cast<std::size_t>(c)).get<double>());
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::format_error, "malformed record at " + where + ": " + e.what());
    }
  }
  for (const auto& sid : scene_order) {
    synth::Scene scene;
    scene.scene_id = sid;
    scene.fps = ds.fps;
    for (const auto& aid : agent_order[sid]) {
      Pending& p = pending.at({sid, aid});
      const int frames = p.next_frame - p.first_frame;
      p.track.skeleton = SkeletonSequence(frames, n, 3);
      p.track.skeleton.data = std::move(p.joints);
      p.track.skeleton.fps = ds.fps;
      p.track.skeleton.frame_index_origin = p.first_frame;
      p.track.skeleton.agent_id = aid;
      scene.agents.push_back(std::move(p.track));
    }
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

/// Digest over the serialized content; stable across write/read cycles.
inline std::string dataset_digest(const std::vector<synth::Scene>& scenes) {
  Digest d;
  for (const auto& s : scenes) {
    d.str(s.scene_id).f64(s.fps);
    for (const auto& a : s.agents) {
      d.str(a.agent_id).i64(static_cast<int>(a.behavior)).f64s(a.trajectory).f64s(a.skeleton.data);
    }
  }
  return d.hex();
}

// Mask artifacts share the scene-file layout: same header, then one record
// per (scene, agent, frame) carrying the boolean joint mask.
struct MaskRecord {
  std::string scene_id;
  std::string agent_id;
  int frame_origin = 0;
  MaskTensor mask;
};

inline void write_masks(const std::vector<MaskRecord>& records, const std::string& path,
                        const SkeletonGraph& graph = default_walker_graph(), double fps = 2.5) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  json header = header_record(graph, fps);
  header["record_type"] = "mask";
  out << header.dump() << '\n';
  for (const auto& r : records) {
    require(r.mask.joints == graph.num_joints(), ErrorCode::shape_mismatch, "joint count mismatch");
    for (int t = 0; t < r.mask.frames; ++t) {
      std::vector<int> row(static_cast<std::size_t>(r.mask.joints));
      for (int n = 0; n < r.mask.joints; ++n) row[static_cast<std::size_t>(n)] = r.mask.at(t, n) ? 1 : 0;
      out << json{{"scene_id", r.scene_id}, {"agent_id", r.agent_id}, {"frame", r.frame_origin + t}, {"mask", row}}.dump()
          << '\n';
    }
  }
}

inline std::vector<MaskRecord> read_masks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io_error, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::format_error, "malformed header: empty file");
  const SkeletonGraph graph = graph_from_header(json::parse(line));
  const int n = graph.num_joints();
  std::vector<MaskRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    const auto sid = rec.at("scene_id").get<std::string>();
    const auto aid = rec.at("agent_id").get<std::string>();
    const int frame = rec.at("frame").get<int>();
    const auto bits = rec.at("mask").get<std::vector<int>>();
    require(static_cast<int>(bits.size()) == n, ErrorCode::shape_mismatch, "joint count mismatch");
    if (out.empty() || out.back().scene_id != sid || out.back().agent_id != aid ||
        out.back().frame_origin + out.back().mask.frames != frame) {
      out.push_back({sid, aid, frame, MaskTensor(0, n)});
    }
    auto& m = out.back().mask;
    for (int b : bits) m.mask.push_back(b ? 1 : 0);
    ++m.frames;
  }
  return out;
}

}  // namespace skelmae::io
