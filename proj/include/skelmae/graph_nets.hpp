#pragma once

// Spatio-temporal graph-convolutional encoder, per-joint MLP decoder,
// (time, element) positional encodings, and parameter accounting.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skelmae/autodiff.hpp"
#include "skelmae/core.hpp"
#include "skelmae/nn.hpp"
#include "skelmae/skeleton.hpp"

namespace skelmae::gnn {

using ad::Var;

struct EncoderConfig {
  int depth = 3;
  int feature_dim = 128;
  int temporal_kernel = 3;
  int in_channels = 3;

  void validate() const {
    require(depth >= 1, ErrorCode::invalid_argument, "encoder depth must be >= 1");
    require(feature_dim >= 1, ErrorCode::invalid_argument, "feature_dim must be >= 1");
    require(temporal_kernel >= 1 && temporal_kernel % 2 == 1, ErrorCode::invalid_argument,
            "temporal_kernel must be odd");
  }

  nlohmann::json to_json() const {
    return {{"depth", depth}, {"feature_dim", feature_dim}, {"temporal_kernel", temporal_kernel},
            {"in_channels", in_channels}};
  }
  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.depth = j.value("depth", c.depth);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.temporal_kernel = j.value("temporal_kernel", c.temporal_kernel);
    c.in_channels = j.value("in_channels", c.in_channels);
    return c;
  }
};

/// T×N×D latent features for one sequence.
struct LatentFeatures {
  int frames = 0, joints = 0, dim = 0;
  std::vector<double> data;
};

/// Packs sequences into a [B,T,N,C] constant.
inline Var batch_sequences(const std::vector<const SkeletonSequence*>& seqs) {
  require(!seqs.empty(), ErrorCode::invalid_argument, "empty batch");
  const auto& s0 = *seqs.front();
  std::vector<double> v;
  v.reserve(s0.data.size() * seqs.size());
  for (const auto* s : seqs) {
    require(s->frames == s0.frames && s->joints == s0.joints && s->channels == s0.channels,
            ErrorCode::shape_mismatch, "batch_sequences: ragged batch");
    v.insert(v.end(), s->data.begin(), s->data.end());
  }
  return Var::constant({static_cast<int>(seqs.size()), s0.frames, s0.joints, s0.channels}, std::move(v));
}

/// Stack of blocks: graph aggregation with D^{-1/2}(A+I)D^{-1/2}, affine
/// channel map, temporal convolution, layer norm, PReLU, and an identity
/// residual where input and output widths agree.
class StgcnEncoder {
 public:
  StgcnEncoder() = default;
  StgcnEncoder(const SkeletonGraph& graph, const EncoderConfig& cfg, nn::ParamSet& ps,
               const std::string& prefix, Rng& rng)
      : cfg_(cfg), joints_(graph.num_joints()), a_hat_(graph.normalized_adjacency()) {
    cfg.validate();
    int in = cfg.in_channels;
    const int d = cfg.feature_dim;
    const int k = cfg.temporal_kernel;
    for (int l = 0; l < cfg.depth; ++l) {
      const std::string p = prefix + ".block" + std::to_string(l);
      Block b;
      b.spatial = nn::Linear(ps, p + ".spatial", in, d, rng);
      b.temporal_w = ps.add(p + ".temporal.weight", {k, d, d},
                            nn::fan_in_uniform(static_cast<std::size_t>(k * d * d), k * d, rng));
      b.temporal_b = ps.add(p + ".temporal.bias", {d},
                            nn::fan_in_uniform(static_cast<std::size_t>(d), k * d, rng));
      b.norm = nn::LayerNorm(ps, p + ".norm", d);
      b.act = nn::PReLU(ps, p + ".act", d);
      b.residual = in == d;
      blocks_.push_back(std::move(b));
      in = d;
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  int joints() const { return joints_; }

  /// [B,T,N,C] -> [B,T,N,D]
  Var forward(const Var& x) const {
    require(x.rank() == 4, ErrorCode::shape_mismatch, "encoder expects [B,T,N,C]");
    require(x.dim(2) == joints_, ErrorCode::shape_mismatch,
            "encoder: joint count " + std::to_string(x.dim(2)) + " does not match graph N=" +
                std::to_string(joints_));
    require(x.dim(3) == cfg_.in_channels, ErrorCode::shape_mismatch, "encoder: channel mismatch");
    Var h = x;
    for (const auto& b : blocks_) {
      Var y = b.spatial(ad::graph_mix(h, a_hat_, joints_));
      y = ad::temporal_conv(y, b.temporal_w, b.temporal_b);
      y = b.act(b.norm(y));
      h = b.residual ? ad::add(y, h) : y;
    }
    return h;
  }

  LatentFeatures encode(const SkeletonSequence& seq) const {
    require(seq.all_finite(), ErrorCode::invalid_argument, "encoder input must be finite");
    Var h = forward(batch_sequences({&seq}));
    return {seq.frames, seq.joints, cfg_.feature_dim, h.value()};
  }

 private:
  struct Block {
    nn::Linear spatial;
    Var temporal_w, temporal_b;
    nn::LayerNorm norm;
    nn::PReLU act;
    bool residual = false;
  };
  EncoderConfig cfg_;
  int joints_ = 0;
  std::vector<double> a_hat_;
  std::vector<Block> blocks_;
};

/// Shared per-(t,n) two-layer MLP; no mixing across joints or frames.
/// The hidden activation is a fixed-slope leaky rectifier, so the decoder's
/// parameters are exactly its two affine maps.
class MlpDecoder {
 public:
  static constexpr double kLeak = 0.25;

  MlpDecoder() = default;
  MlpDecoder(int latent_dim, int hidden_dim, int out_channels, nn::ParamSet& ps,
             const std::string& prefix, Rng& rng)
      : hidden_(ps, prefix + ".hidden", latent_dim, hidden_dim, rng),
        out_(ps, prefix + ".out", hidden_dim, out_channels, rng),
        leak_(Var::constant({hidden_dim}, std::vector<double>(static_cast<std::size_t>(hidden_dim), kLeak))) {}

  /// [...,D] -> [...,C]
  Var forward(const Var& h) const {
    require(h.dim(-1) == hidden_.in, ErrorCode::shape_mismatch,
            "decoder: latent dim " + std::to_string(h.dim(-1)) + " vs " + std::to_string(hidden_.in));
    return out_(ad::prelu(hidden_(h), leak_));
  }

  void zero_final_layer() {
    std::fill(out_.w.mutable_value().begin(), out_.w.mutable_value().end(), 0.0);
    std::fill(out_.b.mutable_value().begin(), out_.b.mutable_value().end(), 0.0);
  }

  int out_channels() const { return out_.out; }

 private:
  nn::Linear hidden_, out_;
  Var leak_;
};

/// Sinusoidal code of an integer position over `dims` channels.
inline void sinusoid(double pos, int dims, double* out) {
  for (int j = 0; j < dims; ++j) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(j / 2) / static_cast<double>(dims));
    out[j] = (j % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
  }
}

/// PE(t, n): time code in the first D/2 channels, element code in the rest.
inline std::vector<double> positional_encoding(int frames, int elements, int dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorCode::invalid_argument, "positional encoding needs even D");
  const int half = dim / 2;
  std::vector<double> pe(static_cast<std::size_t>(frames) * static_cast<std::size_t>(elements) *
                         static_cast<std::size_t>(dim));
  for (int t = 0; t < frames; ++t)
    for (int n = 0; n < elements; ++n) {
      double* row = pe.data() + (static_cast<std::size_t>(t) * static_cast<std::size_t>(elements) + static_cast<std::size_t>(n)) *
                                    static_cast<std::size_t>(dim);
      sinusoid(t, half, row);
      sinusoid(n, half, row + half);
    }
  return pe;
}

/// PE rows for explicit (t, n) index pairs.
inline std::vector<double> positional_encoding_at(const std::vector<std::pair<int, int>>& idx, int dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorCode::invalid_argument, "positional encoding needs even D");
  const int half = dim / 2;
  std::vector<double> pe(idx.size() * static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    sinusoid(idx[i].first, half, pe.data() + i * static_cast<std::size_t>(dim));
    sinusoid(idx[i].second, half, pe.data() + i * static_cast<std::size_t>(dim) + half);
  }
  return pe;
}

struct ParamReport {
  std::vector<std::pair<std::string, std::size_t>> per_module;
  std::size_t total = 0;
  double latency_ms_per_sample = 0.0;
};

/// Groups leaf tensors by the first component of their dotted name.
inline ParamReport count_params(const nn::ParamSet& ps) {
  ParamReport r;
  for (const auto& p : ps.all()) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    auto it = std::find_if(r.per_module.begin(), r.per_module.end(),
                           [&](const auto& e) { return e.first == group; });
    if (it == r.per_module.end()) {
      r.per_module.emplace_back(group, 0);
      it = std::prev(r.per_module.end());
    }
    it->second += p.var.size();
    r.total += p.var.size();
  }
  return r;
}

/// Mean wall time of `forward` after three warm-up calls, divided by batch size.
inline double measure_latency(const std::function<void()>& forward, int batch, int reps) {
  require(batch >= 1 && reps >= 1, ErrorCode::invalid_argument, "measure_latency: batch and reps must be >= 1");
  for (int i = 0; i < 3; ++i) forward();
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) forward();
  return elapsed_ms(t0) / reps / batch;
}

// Reference parameter counts of the full-scale models, shown alongside ours.
inline constexpr std::size_t kReferenceStandardParams = 3188546;
inline constexpr std::size_t kReferenceStgcnParams = 3703198;

}  // namespace skelmae::gnn
