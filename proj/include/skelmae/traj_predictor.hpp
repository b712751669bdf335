#pragma once

// Multimodal trajectory predictor: per-agent token embedding, cross-modality
// transformer, social transformer across agents, and a per-step output head.
// Also hosts the baseline variants, the training loop and a constant-velocity
// extrapolator.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skelmae/autodiff.hpp"
#include "skelmae/checkpoint.hpp"
#include "skelmae/core.hpp"
#include "skelmae/graph_nets.hpp"
#include "skelmae/nn.hpp"
#include "skelmae/normalize.hpp"
#include "skelmae/skeleton.hpp"
#include "skelmae/ssl_pretrain.hpp"
#include "skelmae/synthgen.hpp"
#include "skelmae/transformer.hpp"

namespace skelmae::pred {

using ad::Var;

enum class Variant { standard, corruption_trained, stgcn_scratch, ours, ours_plus_recon, recon_frontend };

inline constexpr Variant kVariants[] = {Variant::standard,        Variant::corruption_trained,
                                        Variant::stgcn_scratch,   Variant::ours,
                                        Variant::ours_plus_recon, Variant::recon_frontend};

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::standard: return "standard";
    case Variant::corruption_trained: return "corruption_trained";
    case Variant::stgcn_scratch: return "stgcn_scratch";
    case Variant::ours: return "ours";
    case Variant::ours_plus_recon: return "ours_plus_recon";
    case Variant::recon_frontend: return "recon_frontend";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : kVariants)
    if (s == to_string(v)) return v;
  throw Error(ErrorCode::invalid_argument, "unknown variant: " + s);
}

/// Pose tokens come from the graph encoder rather than a coordinate projection.
inline bool uses_encoder(Variant v) {
  return v == Variant::stgcn_scratch || v == Variant::ours || v == Variant::ours_plus_recon;
}
inline bool uses_pretrained_encoder(Variant v) { return v == Variant::ours || v == Variant::ours_plus_recon; }
/// Missing joints are completed by the pretrained autoencoder before embedding.
inline bool uses_frontend(Variant v) { return v == Variant::ours_plus_recon || v == Variant::recon_frontend; }
/// Frontend variants share weights with the underlying predictor.
inline Variant weight_source(Variant v) {
  if (v == Variant::recon_frontend) return Variant::standard;
  if (v == Variant::ours_plus_recon) return Variant::ours;
  return v;
}

struct PredictorConfig {
  Variant variant = Variant::standard;
  int obs_frames = 9;
  int pred_frames = 12;
  int dim = 128;
  int cmt_layers = 6;
  int cmt_heads = 4;
  int social_layers = 3;
  int social_heads = 4;
  int ff_dim = 0;  // 0: 4 × dim
  double lr = 1e-4;
  int epochs = 50;
  double decay_at = 0.8;
  double decay_factor = 0.1;
  int batch_size = 32;
  int max_steps = 0;
  double corruption_ratio = 0.5;
  bool pose_blind = false;  // train and run with pose tokens zeroed
  bool rotate = true;       // yaw-align inputs to the target heading
  bool cv_residual = true;  // head predicts offsets from constant-velocity extrapolation
  int max_neighbors = synth::kNeighborCap;
  gnn::EncoderConfig encoder;  // architecture for stgcn_scratch; pretrained variants read it from the checkpoint

  int ffn() const { return ff_dim > 0 ? ff_dim : 4 * dim; }

  void validate() const {
    require(obs_frames >= 2 && pred_frames >= 1, ErrorCode::invalid_argument, "need T_obs >= 2 and T_pred >= 1");
    require(dim >= 2 && dim % 2 == 0, ErrorCode::invalid_argument, "model dimension must be even");
    require(dim % cmt_heads == 0 && dim % social_heads == 0, ErrorCode::invalid_argument,
            "heads must divide the model dimension");
    require(epochs >= 1 && batch_size >= 1, ErrorCode::invalid_argument, "epochs and batch_size must be >= 1");
    require(max_neighbors >= 0, ErrorCode::invalid_argument, "max_neighbors must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"variant", to_string(variant)}, {"obs_frames", obs_frames}, {"pred_frames", pred_frames},
            {"dim", dim}, {"cmt_layers", cmt_layers}, {"cmt_heads", cmt_heads},
            {"social_layers", social_layers}, {"social_heads", social_heads}, {"ff_dim", ffn()},
            {"lr", lr}, {"epochs", epochs}, {"decay_at", decay_at}, {"decay_factor", decay_factor},
            {"batch_size", batch_size}, {"max_steps", max_steps}, {"corruption_ratio", corruption_ratio},
            {"pose_blind", pose_blind}, {"rotate", rotate}, {"cv_residual", cv_residual}, {"max_neighbors", max_neighbors},
            {"encoder", encoder.to_json()}};
  }

  static PredictorConfig from_json(const nlohmann::json& j) {
    PredictorConfig c;
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    c.obs_frames = j.value("obs_frames", c.obs_frames);
    c.pred_frames = j.value("pred_frames", c.pred_frames);
    c.dim = j.value("dim", c.dim);
    c.cmt_layers = j.value("cmt_layers", c.cmt_layers);
    c.cmt_heads = j.value("cmt_heads", c.cmt_heads);
    c.social_layers = j.value("social_layers", c.social_layers);
    c.social_heads = j.value("social_heads", c.social_heads);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.decay_at = j.value("decay_at", c.decay_at);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.corruption_ratio = j.value("corruption_ratio", c.corruption_ratio);
    c.pose_blind = j.value("pose_blind", c.pose_blind);
    c.rotate = j.value("rotate", c.rotate);
    c.cv_residual = j.value("cv_residual", c.cv_residual);
    c.max_neighbors = j.value("max_neighbors", c.max_neighbors);
    if (j.contains("encoder")) c.encoder = gnn::EncoderConfig::from_json(j.at("encoder"));
    return c;
  }
};

/// Extrapolates the last observed displacement.
inline std::vector<double> constant_velocity(const std::vector<double>& observed, int horizon) {
  require(observed.size() >= 4, ErrorCode::invalid_argument, "constant_velocity needs two observed positions");
  const std::size_t last = observed.size() - 2;
  const double vx = observed[last] - observed[last - 2], vy = observed[last + 1] - observed[last - 1];
  std::vector<double> out(2 * static_cast<std::size_t>(horizon));
  for (int k = 0; k < horizon; ++k) {
    out[2 * static_cast<std::size_t>(k)] = observed[last] + vx * (k + 1);
    out[2 * static_cast<std::size_t>(k) + 1] = observed[last + 1] + vy * (k + 1);
  }
  return out;
}

// ---------------------------------------------------------------- inputs

struct AgentInput {
  std::vector<double> traj;   // T_obs×2 in the target frame
  SkeletonSequence skeleton;  // canonical, masked joints zero
};

/// One window in model coordinates. agents[0] is the target.
struct PreparedWindow {
  std::vector<AgentInput> agents;
  std::vector<double> future;  // T_pred×2 in the target frame
  norm::PlanarFrame frame;
};

/// Normalizes a window and applies optional per-agent masks (index 0 = target,
/// then neighbors in window order). With a frontend, masked joints are
/// completed by the autoencoder instead of staying zero.
inline PreparedWindow prepare_window(const synth::WindowSample& w, bool rotate, int max_neighbors,
                                     const std::vector<MaskTensor>* masks = nullptr,
                                     const ssl::ReconModel* frontend = nullptr) {
  PreparedWindow p;
  p.frame = norm::PlanarFrame::at_end_of(w.observed_traj, rotate);
  p.future = p.frame.traj_to_local(w.future_traj);
  const std::size_t n_agents = 1 + std::min<std::size_t>(w.neighbors.size(), static_cast<std::size_t>(max_neighbors));
  require(!masks || masks->size() >= n_agents, ErrorCode::invalid_argument, "prepare_window: one mask per agent");
  for (std::size_t a = 0; a < n_agents; ++a) {
    const auto& traj = a == 0 ? w.observed_traj : w.neighbors[a - 1].traj;
    const auto& skel = a == 0 ? w.observed_skeleton : w.neighbors[a - 1].skeleton;
    AgentInput in;
    in.traj = p.frame.traj_to_local(traj);
    in.skeleton = norm::canonical_skeleton(skel, traj, rotate);
    if (masks && (*masks)[a].count() > 0) {
      in.skeleton = frontend ? ssl::reconstruct_complete(in.skeleton, (*masks)[a], *frontend)
                             : apply_mask(in.skeleton, (*masks)[a]);
    }
    p.agents.push_back(std::move(in));
  }
  return p;
}

// ---------------------------------------------------------------- model

/// Embedded tokens of M agents; every tensor carries a leading agent axis.
struct TokenSet {
  Var queries;  // [M, T_pred, D]
  Var traj;     // [M, T_obs, D]
  Var pose;     // [M, T_obs·N, D]
  std::vector<std::pair<int, int>> query_index, traj_index, pose_index;  // (time, element)
};

struct FusedRepresentation {
  Var queries;  // [M, T_pred, D]
  Var traj;     // [M, T_obs, D]
  Var fused() const { return ad::concat({queries, traj}, 1); }
};

class TrajPredictor {
 public:
  /// Fresh model. Encoder variants build a graph encoder; pretrained variants
  /// additionally need `pretrained` to copy weights from and freeze.
  TrajPredictor(const SkeletonGraph& graph, PredictorConfig cfg, std::uint64_t seed,
                const Checkpoint* pretrained = nullptr)
      : graph_(graph), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (uses_pretrained_encoder(cfg_.variant)) {
      require(pretrained != nullptr, ErrorCode::missing_dependency,
              std::string("variant ") + to_string(cfg_.variant) + " requires a pretrained encoder checkpoint");
      require(pretrained->stage == "pretrained_encoder", ErrorCode::invalid_argument,
              "expected a pretrained_encoder checkpoint, got stage " + pretrained->stage);
      cfg_.encoder = gnn::EncoderConfig::from_json(pretrained->config.at("encoder"));
      const int joints = pretrained->config.value("joints", graph.num_joints());
      require(joints == graph.num_joints(), ErrorCode::shape_mismatch, "checkpoint/graph mismatch");
    }
    if (uses_encoder(cfg_.variant))
      require(cfg_.encoder.feature_dim == cfg_.dim, ErrorCode::invalid_argument,
              "encoder feature_dim must equal the model dimension");
    build(seed);
    if (uses_pretrained_encoder(cfg_.variant)) {
      restore(params_, *pretrained, "encoder.", "encoder.");
      params_.set_trainable("encoder.", false);
    }
  }
  TrajPredictor(const TrajPredictor&) = delete;
  TrajPredictor& operator=(const TrajPredictor&) = delete;
  TrajPredictor(TrajPredictor&&) = default;

  static TrajPredictor from_checkpoint(const Checkpoint& c, const SkeletonGraph& graph) {
    require(c.stage == "predictor", ErrorCode::invalid_argument, "expected a predictor checkpoint, got stage " + c.stage);
    PredictorConfig cfg = PredictorConfig::from_json(c.config.at("predictor"));
    // build without the pretrained dependency, then load every tensor
    const Variant v = cfg.variant;
    cfg.variant = uses_encoder(v) ? Variant::stgcn_scratch : Variant::standard;
    TrajPredictor m(graph, cfg, c.seed);
    m.cfg_.variant = v;
    restore(m.params_, c);
    if (uses_pretrained_encoder(v)) m.params_.set_trainable("encoder.", false);
    return m;
  }

  /// Attaches the completion model used by frontend variants.
  void set_frontend(std::shared_ptr<const ssl::ReconModel> recon) {
    if (recon) {
      require(recon->graph().num_joints() == graph_.num_joints(), ErrorCode::shape_mismatch,
              "checkpoint/graph mismatch: frontend joint count");
    }
    frontend_ = std::move(recon);
  }
  const ssl::ReconModel* frontend() const { return frontend_.get(); }

  const PredictorConfig& config() const { return cfg_; }
  PredictorConfig& mutable_config() { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const SkeletonGraph& graph() const { return graph_; }

  int tokens_per_agent() const { return cfg_.pred_frames + cfg_.obs_frames * (1 + graph_.num_joints()); }

  PreparedWindow prepare(const synth::WindowSample& w, const std::vector<MaskTensor>* masks = nullptr) const {
    require(w.obs_frames() == cfg_.obs_frames, ErrorCode::shape_mismatch, "observation length mismatch");
    require(w.pred_frames() == cfg_.pred_frames, ErrorCode::shape_mismatch, "horizon mismatch");
    return prepare_window(w, cfg_.rotate, cfg_.max_neighbors, masks,
                          uses_frontend(cfg_.variant) ? frontend_.get() : nullptr);
  }

  TokenSet embed_modalities(const std::vector<const AgentInput*>& agents) const {
    require(!agents.empty(), ErrorCode::invalid_argument, "embed_modalities: no agents");
    const int m = static_cast<int>(agents.size());
    const int to = cfg_.obs_frames, tp = cfg_.pred_frames, n = graph_.num_joints(), d = cfg_.dim;
    std::vector<double> traj;
    std::vector<const SkeletonSequence*> skels;
    for (const auto* a : agents) {
      require(static_cast<int>(a->traj.size()) == 2 * to, ErrorCode::shape_mismatch, "trajectory length mismatch");
      require(a->skeleton.frames == to && a->skeleton.joints == n, ErrorCode::shape_mismatch,
              "skeleton shape mismatch");
      traj.insert(traj.end(), a->traj.begin(), a->traj.end());
      skels.push_back(&a->skeleton);
    }
    TokenSet ts;
    ts.traj = ad::add_broadcast(traj_proj_(Var::constant({m, to, 2}, std::move(traj))), pe_traj_);
    const Var x = gnn::batch_sequences(skels);
    const Var h = uses_encoder(cfg_.variant) ? encoder_.forward(x) : pose_proj_(x);
    ts.pose = ad::reshape(ad::add_broadcast(h, pe_pose_), {m, to * n, d});
    ts.queries = ad::add_broadcast(ad::add_broadcast(Var::zeros({m, tp, d}), queries_), pe_query_);
    ts.query_index = query_index_;
    ts.traj_index = traj_index_;
    ts.pose_index = pose_index_;
    return ts;
  }

  /// Full self-attention over queries, trajectory and pose tokens of each agent.
  FusedRepresentation cmt_forward(const TokenSet& t, bool disable_skeleton) const {
    const Var pose = disable_skeleton ? Var::zeros(t.pose.shape()) : t.pose;
    const Var out = cmt_(ad::concat({t.queries, t.traj, pose}, 1));
    return {ad::slice(out, 1, 0, t.queries.dim(1)), ad::slice(out, 1, t.queries.dim(1), t.traj.dim(1))};
  }

  /// Social attention for a batch of windows. `fused` is [M, T_pred+T_obs, D];
  /// groups[b] lists the agent rows of window b with the target first.
  /// Returns the targets' query-stream outputs [B, T_pred, D].
  Var social_forward(const Var& fused, const std::vector<std::vector<int>>& groups) const {
    require(!groups.empty(), ErrorCode::invalid_argument, "social_forward: empty agent list");
    const int len = fused.dim(1), d = fused.dim(2);
    std::size_t slots = 0;
    for (const auto& g : groups) {
      require(!g.empty(), ErrorCode::invalid_argument, "social_forward: empty agent list");
      slots = std::max(slots, g.size());
    }
    std::vector<Var> rows;
    std::vector<char> valid;
    for (const auto& g : groups) {
      std::vector<Var> parts;
      for (std::size_t s = 0; s < slots; ++s) {
        if (s < g.size()) {
          parts.push_back(ad::add_broadcast(ad::slice(fused, 0, g[s], 1), s == 0 ? target_slot_ : neighbor_slot_));
        } else {
          parts.push_back(Var::zeros({1, len, d}));
        }
        valid.insert(valid.end(), static_cast<std::size_t>(len), s < g.size() ? 1 : 0);
      }
      rows.push_back(parts.size() == 1 ? parts.front() : ad::concat(parts, 1));
    }
    const Var x = rows.size() == 1 ? rows.front() : ad::concat(rows, 0);
    return ad::slice(social_(x, valid), 1, 0, cfg_.pred_frames);
  }

  /// Single-window form: agents' fused sequences [1, T_pred+T_obs, D] each.
  Var social_forward(const std::vector<Var>& per_agent, int target) const {
    require(!per_agent.empty(), ErrorCode::invalid_argument, "social_forward: empty agent list");
    require(target >= 0 && target < static_cast<int>(per_agent.size()), ErrorCode::invalid_argument,
            "social_forward: target index out of range");
    std::vector<int> order{target};
    for (int i = 0; i < static_cast<int>(per_agent.size()); ++i)
      if (i != target) order.push_back(i);
    return social_forward(ad::concat(per_agent, 0), {order});
  }

  /// [B, T_pred, D] -> [B, T_pred, 2]
  Var head(const Var& sq) const { return head_out_(ad::relu(head_hidden_(sq))); }

  /// Batched forward to target-frame positions [B, T_pred, 2].
  Var forward(const std::vector<const PreparedWindow*>& batch, bool disable_skeleton) const {
    std::vector<const AgentInput*> agents;
    std::vector<std::vector<int>> groups;
    for (const auto* w : batch) {
      std::vector<int> g;
      for (const auto& a : w->agents) {
        g.push_back(static_cast<int>(agents.size()));
        agents.push_back(&a);
      }
      groups.push_back(std::move(g));
    }
    const FusedRepresentation f = cmt_forward(embed_modalities(agents), disable_skeleton || cfg_.pose_blind);
    const Var out = head(social_forward(f.fused(), groups));
    if (!cfg_.cv_residual) return out;
    std::vector<double> prior;
    prior.reserve(out.size());
    for (const auto* w : batch) {
      const auto cv = constant_velocity(w->agents.front().traj, cfg_.pred_frames);
      prior.insert(prior.end(), cv.begin(), cv.end());
    }
    return ad::add(out, Var::constant(out.shape(), std::move(prior)));
  }

  /// World-frame prediction for one window.
  std::vector<double> predict(const synth::WindowSample& w, const std::vector<MaskTensor>* masks = nullptr,
                              bool disable_skeleton = false) const {
    const PreparedWindow p = prepare(w, masks);
    return p.frame.traj_to_world(forward({&p}, disable_skeleton).value());
  }

  std::string encoder_digest() const { return params_.digest("encoder."); }

 private:
  void build(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 51));
    const int d = cfg_.dim, to = cfg_.obs_frames, tp = cfg_.pred_frames, n = graph_.num_joints();
    if (uses_encoder(cfg_.variant)) {
      encoder_ = gnn::StgcnEncoder(graph_, cfg_.encoder, params_, "encoder", rng);
    } else {
      pose_proj_ = nn::Linear(params_, "pose_embed", 3, d, rng);
    }
    traj_proj_ = nn::Linear(params_, "traj_embed", 2, d, rng);
    queries_ = params_.add("queries", {tp, d}, nn::normal_init(static_cast<std::size_t>(tp * d), 0.02, rng));
    cmt_ = nn::TransformerStack(params_, "cmt", cfg_.cmt_layers, d, cfg_.cmt_heads, cfg_.ffn(), rng);
    target_slot_ = params_.add("social_slot.target", {d}, nn::normal_init(static_cast<std::size_t>(d), 0.02, rng));
    neighbor_slot_ =
        params_.add("social_slot.neighbor", {d}, nn::normal_init(static_cast<std::size_t>(d), 0.02, rng));
    social_ = nn::TransformerStack(params_, "social", cfg_.social_layers, d, cfg_.social_heads, cfg_.ffn(), rng);
    head_hidden_ = nn::Linear(params_, "head.hidden", d, d, rng);
    head_out_ = nn::Linear(params_, "head.out", d, 2, rng);

    for (int t = 0; t < to; ++t) traj_index_.emplace_back(t, n);
    for (int t = 0; t < to; ++t)
      for (int j = 0; j < n; ++j) pose_index_.emplace_back(t, j);
    for (int k = 0; k < tp; ++k) query_index_.emplace_back(to + k, n);
    pe_traj_ = Var::constant({to, d}, gnn::positional_encoding_at(traj_index_, d));
    pe_pose_ = Var::constant({to, n, d}, gnn::positional_encoding_at(pose_index_, d));
    pe_query_ = Var::constant({tp, d}, gnn::positional_encoding_at(query_index_, d));
  }

  SkeletonGraph graph_;
  PredictorConfig cfg_;
  nn::ParamSet params_;
  gnn::StgcnEncoder encoder_;
  nn::Linear pose_proj_, traj_proj_, head_hidden_, head_out_;
  Var queries_, target_slot_, neighbor_slot_;
  nn::TransformerStack cmt_, social_;
  Var pe_traj_, pe_pose_, pe_query_;
  std::vector<std::pair<int, int>> query_index_, traj_index_, pose_index_;
  std::shared_ptr<const ssl::ReconModel> frontend_;
};

// ---------------------------------------------------------------- losses and baselines

/// (1/T_pred) Σ_t ||ŷ_t − y_t||²
inline double trajectory_loss(const std::vector<double>& yhat, const std::vector<double>& y) {
  require(yhat.size() == y.size() && y.size() % 2 == 0 && !y.empty(), ErrorCode::shape_mismatch,
          "trajectory_loss: horizon mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); i += 2) {
    const double dx = yhat[i] - y[i], dy = yhat[i + 1] - y[i + 1];
    total += dx * dx + dy * dy;
  }
  return total / static_cast<double>(y.size() / 2);
}

// ---------------------------------------------------------------- training

/// Fresh masks for one window: target at index 0, neighbors after.
inline std::vector<MaskTensor> window_masks(MaskStrategy strategy, double ratio, std::uint64_t seed,
                                            std::size_t agents, int frames, const SkeletonGraph& graph) {
  std::vector<MaskTensor> out;
  for (std::size_t a = 0; a < agents; ++a)
    out.push_back(sample_mask({strategy, ratio, derive_seed(seed, 61, a)}, frames, graph));
  return out;
}

struct TrainRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_ade = -1.0;
  nlohmann::json to_json() const { return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_ade", val_ade}}; }
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> step_losses;
  std::vector<TrainRecord> curve;
  std::string encoder_digest_before, encoder_digest_after;
};

using TrainSink = std::function<void(const TrainRecord&)>;

inline double mean_ade_local(const TrajPredictor& model, const std::vector<PreparedWindow>& val, int batch = 32) {
  double total = 0.0;
  for (std::size_t b0 = 0; b0 < val.size(); b0 += static_cast<std::size_t>(batch)) {
    std::vector<const PreparedWindow*> ptrs;
    for (std::size_t i = b0; i < std::min(val.size(), b0 + static_cast<std::size_t>(batch)); ++i) ptrs.push_back(&val[i]);
    const Var y = model.forward(ptrs, false);
    const std::size_t per = static_cast<std::size_t>(2 * model.config().pred_frames);
    for (std::size_t i = 0; i < ptrs.size(); ++i)
      for (std::size_t k = 0; k < per; k += 2) {
        const double dx = y.value()[i * per + k] - ptrs[i]->future[k];
        const double dy = y.value()[i * per + k + 1] - ptrs[i]->future[k + 1];
        total += std::sqrt(dx * dx + dy * dy) / static_cast<double>(per / 2);
      }
  }
  return val.empty() ? 0.0 : total / static_cast<double>(val.size());
}

/// Trains the predictor of `cfg.variant`. Frontend variants train their
/// weight source on clean windows (completion is the identity there) and are
/// tagged with their own variant.
inline TrainResult train_predictor(const std::vector<synth::WindowSample>& train,
                                   const std::vector<synth::WindowSample>& val, const SkeletonGraph& graph,
                                   const PredictorConfig& cfg, std::uint64_t seed,
                                   const Checkpoint* pretrained = nullptr, const TrainSink& sink = {}) {
  require(!train.empty(), ErrorCode::invalid_argument, "train_predictor: empty dataset");
  if (uses_pretrained_encoder(cfg.variant))
    require(pretrained != nullptr, ErrorCode::missing_dependency,
            std::string("variant ") + to_string(cfg.variant) + " requires a pretrained encoder checkpoint");
  PredictorConfig build_cfg = cfg;
  build_cfg.variant = weight_source(cfg.variant);
  TrajPredictor model(graph, build_cfg, seed, pretrained);

  std::vector<PreparedWindow> clean;
  clean.reserve(train.size());
  for (const auto& w : train) clean.push_back(model.prepare(w));
  std::vector<PreparedWindow> val_prep;
  for (const auto& w : val) val_prep.push_back(model.prepare(w));

  TrainResult result;
  result.encoder_digest_before = model.encoder_digest();
  nn::Adam opt(model.params().trainable(), {cfg.lr});
  const int decay_epoch = static_cast<int>(std::floor(cfg.decay_at * cfg.epochs + 1e-9));
  const std::size_t per = static_cast<std::size_t>(2 * cfg.pred_frames);
  long step = 0;
  bool stop = false;
  int epoch_done = 0;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order(clean.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, 71, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    const double lr_scale = epoch >= decay_epoch ? cfg.decay_factor : 1.0;
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size() && !stop; b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      std::vector<PreparedWindow> corrupted;
      std::vector<const PreparedWindow*> ptrs;
      if (cfg.variant == Variant::corruption_trained) {
        for (std::size_t i = b0; i < b1; ++i) {
          PreparedWindow w = clean[order[i]];
          const auto masks =
              window_masks(MaskStrategy::random, cfg.corruption_ratio,
                           derive_seed(seed, 81, static_cast<std::uint64_t>(epoch) * 1000003ULL + order[i]),
                           w.agents.size(), cfg.obs_frames, graph);
          for (std::size_t a = 0; a < w.agents.size(); ++a) w.agents[a].skeleton = apply_mask(w.agents[a].skeleton, masks[a]);
          corrupted.push_back(std::move(w));
        }
        for (const auto& w : corrupted) ptrs.push_back(&w);
      } else {
        for (std::size_t i = b0; i < b1; ++i) ptrs.push_back(&clean[order[i]]);
      }
      std::vector<double> target;
      target.reserve(per * ptrs.size());
      for (const auto* w : ptrs) target.insert(target.end(), w->future.begin(), w->future.end());
      const Var y = model.forward(ptrs, false);
      const Var loss = ad::weighted_sq_error(y, target, 2, {},
                                             static_cast<double>(ptrs.size()) * static_cast<double>(cfg.pred_frames));
      const double lv = loss.item();
      require(std::isfinite(lv), ErrorCode::numerical_divergence,
              "predictor training diverged: non-finite loss at step " + std::to_string(step));
      opt.zero_grad();
      ad::backward(loss);
      opt.step(lr_scale);
      result.step_losses.push_back(lv);
      epoch_loss += lv;
      ++batches;
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
    }
    epoch_done = epoch + 1;
    TrainRecord rec{epoch_done, batches ? epoch_loss / batches : 0.0, -1.0};
    if (!val_prep.empty()) rec.val_ade = mean_ade_local(model, val_prep);
    result.curve.push_back(rec);
    if (sink) sink(rec);
  }
  result.encoder_digest_after = model.encoder_digest();
  result.checkpoint = capture(model.params(), "predictor", to_string(cfg.variant));
  result.checkpoint.seed = seed;
  result.checkpoint.epoch = epoch_done;
  PredictorConfig stored = model.config();
  stored.variant = cfg.variant;
  result.checkpoint.config = {{"predictor", stored.to_json()}, {"joints", graph.num_joints()}};
  if (pretrained) result.checkpoint.config["pretrained_config_digest"] = pretrained->config_digest();
  return result;
}

/// Loads a predictor and, for frontend variants, its completion model.
inline TrajPredictor load_predictor(const Checkpoint& predictor, const SkeletonGraph& graph,
                                    const Checkpoint* recon = nullptr) {
  TrajPredictor m = TrajPredictor::from_checkpoint(predictor, graph);
  if (uses_frontend(m.config().variant)) {
    require(recon != nullptr, ErrorCode::missing_dependency,
            std::string("variant ") + to_string(m.config().variant) + " requires a pretrained autoencoder checkpoint");
    m.set_frontend(std::make_shared<const ssl::ReconModel>(ssl::ReconModel::from_checkpoint(*recon, graph)));
  }
  return m;
}

/// Re-tags a trained predictor as the frontend variant sharing its weights.
inline Checkpoint as_frontend_variant(const Checkpoint& base, Variant frontend_variant) {
  require(uses_frontend(frontend_variant), ErrorCode::invalid_argument, "not a frontend variant");
  require(base.variant == to_string(weight_source(frontend_variant)), ErrorCode::invalid_argument,
          std::string(to_string(frontend_variant)) + " reuses " + to_string(weight_source(frontend_variant)) +
              " weights, got " + base.variant);
  Checkpoint c = base;
  c.variant = to_string(frontend_variant);
  c.config["predictor"]["variant"] = c.variant;
  return c;
}

inline std::vector<synth::WindowSample> window_scenes(const std::vector<synth::Scene>& scenes, int obs, int pred,
                                                      int stride, int neighbor_cap = synth::kNeighborCap) {
  std::vector<synth::WindowSample> out;
  for (const auto& s : scenes) {
    auto w = synth::window_scene(s, obs, pred, stride, neighbor_cap);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

}  // namespace skelmae::pred
