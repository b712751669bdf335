#pragma once

// Self-describing checkpoint container: config record, provenance, and named
// parameter tensors. Doubles are written in shortest round-trip form, so a
// save/load cycle restores parameters bit-exactly.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "skelmae/core.hpp"
#include "skelmae/nn.hpp"

namespace skelmae {

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::string stage;    // pretrained_encoder | predictor
  std::string variant;  // predictor variant tag, empty for pretraining
  std::uint64_t seed = 0;
  int epoch = 0;
  nlohmann::json config = nlohmann::json::object();
  std::string dataset_digest;
  std::vector<NamedTensor> tensors;

  std::string config_digest() const { return digest_of(config.dump()); }

  std::string param_digest(const std::string& prefix = "") const {
    Digest d;
    for (const auto& t : tensors)
      if (t.name.rfind(prefix, 0) == 0) d.str(t.name).f64s(t.data);
    return d.hex();
  }

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline Checkpoint capture(const nn::ParamSet& ps, std::string stage, std::string variant = "") {
  Checkpoint c;
  c.stage = std::move(stage);
  c.variant = std::move(variant);
  for (const auto& p : ps.all()) c.tensors.push_back({p.name, p.var.shape(), p.var.value()});
  return c;
}

/// Copies tensors whose names start with `from_prefix` into parameters named
/// `to_prefix` + remainder. Every targeted parameter must be found.
inline void restore(nn::ParamSet& ps, const Checkpoint& c, const std::string& from_prefix = "",
                    const std::string& to_prefix = "") {
  std::size_t matched = 0;
  for (const auto& p : ps.all()) {
    if (p.name.rfind(to_prefix, 0) != 0) continue;
    const std::string src = from_prefix + p.name.substr(to_prefix.size());
    const NamedTensor* t = c.find(src);
    require(t != nullptr, ErrorCode::shape_mismatch, "checkpoint is missing tensor " + src);
    require(t->shape == p.var.shape(), ErrorCode::shape_mismatch,
            "checkpoint tensor " + src + " has shape " + ad::shape_str(t->shape) + ", model expects " +
                ad::shape_str(p.var.shape()));
    ad::Var v = p.var;
    v.mutable_value() = t->data;
    ++matched;
  }
  require(matched > 0, ErrorCode::shape_mismatch, "checkpoint/model mismatch: no tensors matched prefix " + to_prefix);
}

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : c.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"data", t.data}});
  return {{"format", "skelmae-checkpoint"},
          {"version", 1},
          {"stage", c.stage},
          {"variant", c.variant},
          {"seed", c.seed},
          {"epoch", c.epoch},
          {"config", c.config},
          {"config_digest", c.config_digest()},
          {"dataset_digest", c.dataset_digest},
          {"tensors", tensors}};
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  out << to_json(c).dump() << '\n';
  require(out.good(), ErrorCode::io_error, "write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::missing_dependency, "checkpoint not found: " + path);
  nlohmann::json j;
  try {
    in >> j;
    require(j.at("format").get<std::string>() == "skelmae-checkpoint", ErrorCode::format_error,
            "not a checkpoint file: " + path);
    Checkpoint c;
    c.stage = j.at("stage").get<std::string>();
    c.variant = j.value("variant", "");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<int>();
    c.config = j.at("config");
    c.dataset_digest = j.value("dataset_digest", "");
    for (const auto& t : j.at("tensors"))
      c.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>(),
                           t.at("data").get<std::vector<double>>()});
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format_error, "malformed checkpoint " + path + ": " + e.what());
  }
}

}  // namespace skelmae
