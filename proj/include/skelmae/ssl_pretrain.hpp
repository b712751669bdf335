#pragma once

// Masked-joint reconstruction pretraining of the skeleton encoder, plus the
// reconstruction metrics and the coordinate-completion frontend.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skelmae/autodiff.hpp"
#include "skelmae/checkpoint.hpp"
#include "skelmae/core.hpp"
#include "skelmae/graph_nets.hpp"
#include "skelmae/nn.hpp"
#include "skelmae/normalize.hpp"
#include "skelmae/skeleton.hpp"
#include "skelmae/synthgen.hpp"

namespace skelmae::ssl {

using ad::Var;

enum class LossMode { all_joint, masked_only };

inline const char* to_string(LossMode m) { return m == LossMode::all_joint ? "all_joint" : "masked_only"; }
inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "all_joint") return LossMode::all_joint;
  if (s == "masked_only") return LossMode::masked_only;
  throw Error(ErrorCode::invalid_argument, "unknown loss mode: " + s);
}

inline std::vector<double> default_ratio_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

struct PretrainConfig {
  MaskStrategy strategy = MaskStrategy::random;
  double r_train = 0.5;
  LossMode loss_mode = LossMode::all_joint;
  double lr = 1.5e-4;
  int batch_size = 256;
  int epochs = 50;
  int max_steps = 0;  // 0: no cap
  int decoder_hidden = 0;  // 0: same as the encoder width
  std::vector<double> r_val = default_ratio_grid();
  int val_limit = 256;
  std::uint64_t val_mask_seed = 9001;

  void validate() const {
    require(r_train >= 0.0 && r_train <= 1.0, ErrorCode::invalid_argument, "r_train must lie in [0,1]");
    require(epochs >= 1, ErrorCode::invalid_argument, "epochs must be >= 1");
    require(batch_size >= 1, ErrorCode::invalid_argument, "batch_size must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"strategy", skelmae::to_string(strategy)}, {"r_train", r_train}, {"loss_mode", to_string(loss_mode)},
            {"lr", lr}, {"batch_size", batch_size}, {"epochs", epochs}, {"max_steps", max_steps},
            {"decoder_hidden", decoder_hidden}};
  }
};

// ---------------------------------------------------------------- metrics

inline void check_same_shape(const SkeletonSequence& s, const SkeletonSequence& y) {
  require(s.frames == y.frames && s.joints == y.joints && s.channels == y.channels, ErrorCode::shape_mismatch,
          "sequence shapes differ");
}

inline double reconstruction_loss(const SkeletonSequence& s, const SkeletonSequence& y, const MaskTensor& mask,
                                  LossMode mode) {
  check_same_shape(s, y);
  require(mask.frames == s.frames && mask.joints == s.joints, ErrorCode::shape_mismatch, "mask shape differs");
  double total = 0.0;
  int count = 0;
  for (int t = 0; t < s.frames; ++t)
    for (int n = 0; n < s.joints; ++n) {
      if (mode == LossMode::masked_only && !mask.at(t, n)) continue;
      double sq = 0.0;
      for (int c = 0; c < s.channels; ++c) {
        const double e = s.at(t, n, c) - y.at(t, n, c);
        sq += e * e;
      }
      total += sq;
      ++count;
    }
  if (mode == LossMode::masked_only) require(count > 0, ErrorCode::invalid_argument, "no masked joints");
  return total / count;
}

/// Mean Euclidean joint error over frames and the selected joints.
inline double mpjpe(const SkeletonSequence& s, const SkeletonSequence& y, const MaskTensor* subset = nullptr) {
  check_same_shape(s, y);
  if (subset)
    require(subset->frames == s.frames && subset->joints == s.joints, ErrorCode::shape_mismatch,
            "subset mask shape differs");
  double total = 0.0;
  int count = 0;
  for (int t = 0; t < s.frames; ++t)
    for (int n = 0; n < s.joints; ++n) {
      if (subset && !subset->at(t, n)) continue;
      double sq = 0.0;
      for (int c = 0; c < s.channels; ++c) {
        const double e = s.at(t, n, c) - y.at(t, n, c);
        sq += e * e;
      }
      total += std::sqrt(sq);
      ++count;
    }
  require(count > 0, ErrorCode::invalid_argument, "mpjpe: empty subset");
  return total / count;
}

inline MaskTensor invert(const MaskTensor& m) {
  MaskTensor out = m;
  for (auto& v : out.mask) v = v ? 0 : 1;
  return out;
}

/// Mean token-wise cosine similarity; a zero-norm token contributes 0.
inline double feature_consistency(const gnn::LatentFeatures& a, const gnn::LatentFeatures& b) {
  require(a.frames == b.frames && a.joints == b.joints && a.dim == b.dim, ErrorCode::shape_mismatch,
          "feature_consistency: shapes differ");
  const std::size_t tokens = static_cast<std::size_t>(a.frames) * static_cast<std::size_t>(a.joints);
  const std::size_t d = static_cast<std::size_t>(a.dim);
  double acc = 0.0;
  for (std::size_t k = 0; k < tokens; ++k) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double x = a.data[k * d + i], y = b.data[k * d + i];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    if (na > 0.0 && nb > 0.0) acc += dot / (std::sqrt(na) * std::sqrt(nb));
  }
  return tokens ? acc / static_cast<double>(tokens) : 0.0;
}

// ---------------------------------------------------------------- model

/// Encoder + lightweight decoder sharing one parameter set. Encoder
/// parameters are named "encoder.*", decoder parameters "decoder.*".
class ReconModel {
 public:
  ReconModel(const SkeletonGraph& graph, const gnn::EncoderConfig& enc, int decoder_hidden, std::uint64_t seed)
      : graph_(graph), enc_cfg_(enc), decoder_hidden_(decoder_hidden > 0 ? decoder_hidden : enc.feature_dim) {
    Rng rng(derive_seed(seed, 21));
    encoder_ = gnn::StgcnEncoder(graph, enc, params_, "encoder", rng);
    decoder_ = gnn::MlpDecoder(enc.feature_dim, decoder_hidden_, enc.in_channels, params_, "decoder", rng);
  }
  ReconModel(const ReconModel&) = delete;
  ReconModel& operator=(const ReconModel&) = delete;
  ReconModel(ReconModel&&) = default;

  /// Rebuilds from a pretraining checkpoint.
  static ReconModel from_checkpoint(const Checkpoint& c, const SkeletonGraph& graph) {
    require(c.stage == "pretrained_encoder", ErrorCode::invalid_argument,
            "expected a pretrained_encoder checkpoint, got stage " + c.stage);
    const auto enc = gnn::EncoderConfig::from_json(c.config.at("encoder"));
    const int hidden = c.config.at("decoder_hidden").get<int>();
    const int joints = c.config.value("joints", graph.num_joints());
    require(joints == graph.num_joints(), ErrorCode::shape_mismatch,
            "checkpoint/graph mismatch: checkpoint has N=" + std::to_string(joints) + ", graph N=" +
                std::to_string(graph.num_joints()));
    ReconModel m(graph, enc, hidden, c.seed);
    restore(m.params_, c);
    return m;
  }

  Var encode(const Var& x) const { return encoder_.forward(x); }
  Var reconstruct(const Var& x) const { return decoder_.forward(encoder_.forward(x)); }

  SkeletonSequence reconstruct(const SkeletonSequence& masked) const {
    check_joints(masked);
    Var y = reconstruct(gnn::batch_sequences({&masked}));
    SkeletonSequence out = masked;
    out.data = y.value();
    return out;
  }
  gnn::LatentFeatures encode(const SkeletonSequence& seq) const {
    check_joints(seq);
    return encoder_.encode(seq);
  }

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const gnn::StgcnEncoder& encoder() const { return encoder_; }
  gnn::MlpDecoder& decoder() { return decoder_; }
  const gnn::EncoderConfig& encoder_config() const { return enc_cfg_; }
  int decoder_hidden() const { return decoder_hidden_; }
  const SkeletonGraph& graph() const { return graph_; }

  nlohmann::json config_json() const {
    return {{"encoder", enc_cfg_.to_json()}, {"decoder_hidden", decoder_hidden_}, {"joints", graph_.num_joints()}};
  }

 private:
  void check_joints(const SkeletonSequence& s) const {
    require(s.joints == graph_.num_joints(), ErrorCode::shape_mismatch,
            "checkpoint/graph mismatch: sequence has N=" + std::to_string(s.joints) + ", model N=" +
                std::to_string(graph_.num_joints()));
  }

  SkeletonGraph graph_;
  gnn::EncoderConfig enc_cfg_;
  int decoder_hidden_;
  nn::ParamSet params_;
  gnn::StgcnEncoder encoder_;
  gnn::MlpDecoder decoder_;
};

/// Keeps observed coordinates and fills masked joints from the decoder.
inline SkeletonSequence reconstruct_complete(const SkeletonSequence& seq_with_missing, const MaskTensor& mask,
                                             const ReconModel& model) {
  require(mask.frames == seq_with_missing.frames && mask.joints == seq_with_missing.joints,
          ErrorCode::shape_mismatch, "reconstruct_complete: mask shape differs");
  if (mask.count() == 0) return seq_with_missing;
  const SkeletonSequence y = model.reconstruct(apply_mask(seq_with_missing, mask));
  SkeletonSequence out = seq_with_missing;
  for (int t = 0; t < out.frames; ++t)
    for (int n = 0; n < out.joints; ++n)
      if (mask.at(t, n))
        for (int c = 0; c < out.channels; ++c) out.at(t, n, c) = y.at(t, n, c);
  return out;
}

// ---------------------------------------------------------------- data

/// Canonical T-frame skeleton windows from every agent of every scene.
inline std::vector<SkeletonSequence> skeleton_windows(const std::vector<synth::Scene>& scenes, int frames,
                                                      int stride, bool rotate = true) {
  std::vector<SkeletonSequence> out;
  for (const auto& scene : scenes)
    for (const auto& agent : scene.agents)
      for (int start = 0; start + frames <= agent.frames(); start += stride)
        out.push_back(norm::canonical_skeleton(synth::slice_frames(agent.skeleton, start, frames),
                                               synth::slice_traj(agent.trajectory, start, frames), rotate));
  return out;
}

// ---------------------------------------------------------------- training

struct CurveRecord {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  std::map<double, double> mpjpe_by_ratio;

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [r, v] : mpjpe_by_ratio) {
      char key[16];
      std::snprintf(key, sizeof key, "%.2f", r);
      m[key] = v;
    }
    return {{"epoch", epoch}, {"split", split}, {"loss", loss}, {"mpjpe_by_ratio", m}};
  }
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<CurveRecord> curve;
  std::vector<double> step_losses;
};

/// Masks used for validation: fixed per (ratio, sequence index).
inline MaskTensor validation_mask(MaskStrategy strategy, double ratio, std::size_t index, std::uint64_t seed,
                                  int frames, const SkeletonGraph& graph) {
  MaskSpec spec{strategy, ratio, derive_seed(seed, static_cast<std::uint64_t>(std::llround(ratio * 1000.0)), index)};
  return sample_mask(spec, frames, graph);
}

/// Mean all-joint MPJPE of decoder output under masks of the given strategy and ratio.
inline double evaluate_mpjpe(const ReconModel& model, const std::vector<SkeletonSequence>& data,
                             MaskStrategy strategy, double ratio, std::uint64_t seed, int limit = 0,
                             int batch = 64) {
  const std::size_t n = limit > 0 ? std::min<std::size_t>(data.size(), static_cast<std::size_t>(limit)) : data.size();
  require(n > 0, ErrorCode::invalid_argument, "evaluate_mpjpe: empty data");
  double total = 0.0;
  for (std::size_t b0 = 0; b0 < n; b0 += static_cast<std::size_t>(batch)) {
    const std::size_t b1 = std::min(n, b0 + static_cast<std::size_t>(batch));
    std::vector<SkeletonSequence> masked;
    for (std::size_t i = b0; i < b1; ++i)
      masked.push_back(apply_mask(data[i], validation_mask(strategy, ratio, i, seed, data[i].frames, model.graph())));
    std::vector<const SkeletonSequence*> ptrs;
    for (const auto& m : masked) ptrs.push_back(&m);
    const Var y = model.reconstruct(gnn::batch_sequences(ptrs));
    const std::size_t per = data[b0].data.size();
    for (std::size_t i = b0; i < b1; ++i) {
      SkeletonSequence rec = data[i];
      std::copy_n(y.value().begin() + static_cast<std::ptrdiff_t>((i - b0) * per), per, rec.data.begin());
      total += mpjpe(data[i], rec);
    }
  }
  return total / static_cast<double>(n);
}

using CurveSink = std::function<void(const CurveRecord&)>;

inline PretrainResult pretrain(const std::vector<SkeletonSequence>& train, const std::vector<SkeletonSequence>& val,
                               const SkeletonGraph& graph, const gnn::EncoderConfig& enc, const PretrainConfig& cfg,
                               std::uint64_t seed, const CurveSink& sink = {}) {
  require(!train.empty(), ErrorCode::invalid_argument, "pretrain: empty dataset");
  cfg.validate();
  ReconModel model(graph, enc, cfg.decoder_hidden, seed);
  nn::Adam opt(model.params().trainable(), {cfg.lr});
  PretrainResult result;
  const int frames = train.front().frames;
  const int joints = train.front().joints;
  const int channels = train.front().channels;
  const std::size_t per = train.front().data.size();
  long step = 0;
  int epoch_done = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, 31, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size() && !stop; b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const int bs = static_cast<int>(b1 - b0);
      std::vector<double> input, target, weights;
      input.reserve(per * static_cast<std::size_t>(bs));
      target.reserve(per * static_cast<std::size_t>(bs));
      double masked = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& s = train[order[i]];
        // fresh mask per (epoch, sample): the seed stream never repeats across epochs
        const MaskSpec spec{cfg.strategy, cfg.r_train,
                            derive_seed(seed, 41, static_cast<std::uint64_t>(epoch) * 1000003ULL + order[i])};
        const MaskTensor m = sample_mask(spec, frames, graph);
        const SkeletonSequence x = apply_mask(s, m);
        input.insert(input.end(), x.data.begin(), x.data.end());
        target.insert(target.end(), s.data.begin(), s.data.end());
        for (char v : m.mask) {
          weights.push_back(cfg.loss_mode == LossMode::all_joint ? 1.0 : (v ? 1.0 : 0.0));
          masked += v ? 1.0 : 0.0;
        }
      }
      const double denom = cfg.loss_mode == LossMode::all_joint ? static_cast<double>(weights.size()) : masked;
      if (denom <= 0.0) continue;  // masked_only with an all-visible batch carries no signal
      Var x = Var::constant({bs, frames, joints, channels}, std::move(input));
      Var y = model.reconstruct(x);
      Var loss = ad::weighted_sq_error(y, target, channels, std::move(weights), denom);
      const double lv = loss.item();
      require(std::isfinite(lv), ErrorCode::numerical_divergence,
              "pretraining diverged: non-finite loss at step " + std::to_string(step));
      opt.zero_grad();
      ad::backward(loss);
      opt.step();
      result.step_losses.push_back(lv);
      epoch_loss += lv;
      ++batches;
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
    }
    epoch_done = epoch + 1;
    CurveRecord train_rec{epoch_done, "train", batches ? epoch_loss / batches : 0.0, {}};
    result.curve.push_back(train_rec);
    if (sink) sink(train_rec);
    if (!val.empty() && !cfg.r_val.empty()) {
      CurveRecord val_rec{epoch_done, "val", 0.0, {}};
      for (double r : cfg.r_val)
        val_rec.mpjpe_by_ratio[r] = evaluate_mpjpe(model, val, MaskStrategy::random, r, cfg.val_mask_seed, cfg.val_limit);
      val_rec.loss = val_rec.mpjpe_by_ratio.begin()->second;
      result.curve.push_back(val_rec);
      if (sink) sink(val_rec);
    }
  }
  result.checkpoint = capture(model.params(), "pretrained_encoder");
  result.checkpoint.seed = seed;
  result.checkpoint.epoch = epoch_done;
  result.checkpoint.config = model.config_json();
  result.checkpoint.config["pretrain"] = cfg.to_json();
  return result;
}

}  // namespace skelmae::ssl
