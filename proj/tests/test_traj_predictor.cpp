#include <gtest/gtest.h>

#include <filesystem>

#include "gradcheck.hpp"
#include "skelmae/traj_predictor.hpp"

using namespace skelmae;
using namespace skelmae::pred;
using ad::Var;
using testing_util::max_grad_error;
using testing_util::probe;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kPermTol = 1e-10;

SkeletonGraph four_joints() {
  JointSpec s;
  s.joints = {"a", "b", "c", "d"};
  s.edges = {{"a", "b"}, {"b", "c"}, {"b", "d"}};
  s.parts = {{"center_upper", {"a", "b"}}, {"right_limb", {"c"}}, {"left_limb", {"d"}}};
  return build_skeleton_graph(s);
}

PredictorConfig tiny_config(Variant v, int obs = 3, int pred = 2, int dim = 4) {
  PredictorConfig c;
  c.variant = v;
  c.obs_frames = obs;
  c.pred_frames = pred;
  c.dim = dim;
  c.cmt_layers = 1;
  c.cmt_heads = 2;
  c.social_layers = 1;
  c.social_heads = 2;
  c.ff_dim = 2 * dim;
  c.encoder = {1, dim, 3, 3};
  return c;
}

PredictorConfig small_config(Variant v) {
  PredictorConfig c = tiny_config(v, 9, 12, 16);
  c.lr = 1e-3;
  c.batch_size = 8;
  c.epochs = 100;
  return c;
}

AgentInput random_agent(int obs, int joints, Rng& rng) {
  AgentInput a;
  for (int t = 0; t < obs; ++t) {
    a.traj.push_back(0.4 * (t - obs + 1) + rng.uniform(-0.05, 0.05));
    a.traj.push_back(rng.uniform(-0.05, 0.05));
  }
  a.skeleton = SkeletonSequence(obs, joints);
  for (auto& v : a.skeleton.data) v = rng.uniform(-0.5, 0.5);
  return a;
}

std::vector<Var> leaves_with_prefix(const nn::ParamSet& ps, const std::string& prefix) {
  std::vector<Var> out;
  for (const auto& p : ps.all())
    if (p.name.rfind(prefix, 0) == 0) out.push_back(p.var);
  return out;
}

void expect_same(const Var& a, const Var& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a.value()[i], b.value()[i]) << i;
}

void expect_near(const Var& a, const Var& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a.value()[i], b.value()[i], tol) << i;
}

Checkpoint fake_pretrained(const SkeletonGraph& g, int dim, std::uint64_t seed) {
  ssl::ReconModel m(g, {1, dim, 3, 3}, 0, seed);
  Checkpoint c = capture(m.params(), "pretrained_encoder");
  c.seed = seed;
  c.config = m.config_json();
  return c;
}

std::vector<synth::WindowSample> toy_windows(int scenes, std::uint64_t seed) {
  synth::GenConfig cfg;
  cfg.n_agents = 2;
  cfg.duration_s = 8.4;
  cfg.behavior_mix = {0.1, 0.35, 0.35, 0.2};
  cfg.turn_anticipation_frames = 5;
  return window_scenes(synth::generate_dataset(cfg, scenes, seed), 9, 12, 1);
}

struct Tiny {
  SkeletonGraph graph = four_joints();
  TrajPredictor model;
  std::vector<AgentInput> agents;
  std::vector<const AgentInput*> ptrs;

  explicit Tiny(Variant v, int n_agents = 3, std::uint64_t seed = 1) : model(graph, tiny_config(v), seed) {
    Rng rng(seed + 100);
    for (int i = 0; i < n_agents; ++i) agents.push_back(random_agent(3, 4, rng));
    for (const auto& a : agents) ptrs.push_back(&a);
    // move norm/slot parameters off their init so every gradient path is live
    for (const auto& p : model.params().all()) {
      Var v = p.var;
      for (auto& x : v.mutable_value()) x += rng.uniform(-0.2, 0.2);
    }
  }
};

}  // namespace

TEST(EmbedModalities, TokenCountsForDefaults) {
  PredictorConfig cfg;
  TrajPredictor m(default_walker_graph(), cfg, 1);
  Rng rng(1);
  const auto a = random_agent(9, 16, rng);
  const auto ts = m.embed_modalities({&a});
  EXPECT_EQ(ts.queries.shape(), (ad::Shape{1, 12, 128}));
  EXPECT_EQ(ts.traj.shape(), (ad::Shape{1, 9, 128}));
  EXPECT_EQ(ts.pose.shape(), (ad::Shape{1, 144, 128}));
  EXPECT_EQ(ts.query_index.size(), 12u);
  EXPECT_EQ(ts.traj_index.size(), 9u);
  EXPECT_EQ(ts.pose_index.size(), 144u);
  EXPECT_EQ(m.tokens_per_agent(), 12 + 9 + 144);
  const auto f = m.cmt_forward(ts, false);
  EXPECT_EQ(f.queries.shape(), (ad::Shape{1, 12, 128}));
  EXPECT_EQ(f.traj.shape(), (ad::Shape{1, 9, 128}));
  EXPECT_EQ(f.fused().shape(), (ad::Shape{1, 21, 128}));
}

TEST(EmbedModalities, ZeroPoseThroughZeroProjectionIsPositionalEncoding) {
  Tiny t(Variant::standard, 1);
  for (const char* name : {"pose_embed.weight", "pose_embed.bias"}) {
    Var v = t.model.params().find(name)->var;
    std::fill(v.mutable_value().begin(), v.mutable_value().end(), 0.0);
  }
  t.agents[0].skeleton = SkeletonSequence(3, 4);
  const auto ts = t.model.embed_modalities(t.ptrs);
  EXPECT_EQ(ts.pose.value(), gnn::positional_encoding_at(ts.pose_index, 4));
}

TEST(EmbedModalities, EncoderVariantsHaveNoSkipPath) {
  Tiny t(Variant::stgcn_scratch, 1);
  EXPECT_EQ(t.model.params().find("pose_embed.weight"), nullptr);
  for (const auto& p : t.model.params().all())
    if (p.name.rfind("encoder.", 0) == 0) {
      Var v = p.var;
      std::fill(v.mutable_value().begin(), v.mutable_value().end(), 0.0);
    }
  // With a zero encoder, pose tokens carry nothing of the coordinates.
  const auto ts = t.model.embed_modalities(t.ptrs);
  EXPECT_EQ(ts.pose.value(), gnn::positional_encoding_at(ts.pose_index, 4));
}

TEST(EmbedModalities, FrozenEncoderIsDeterministic) {
  const auto g = four_joints();
  const auto ck = fake_pretrained(g, 4, 3);
  TrajPredictor m(g, tiny_config(Variant::ours), 1, &ck);
  Rng rng(2);
  const auto a = random_agent(3, 4, rng);
  EXPECT_EQ(m.embed_modalities({&a}).pose.value(), m.embed_modalities({&a}).pose.value());
  EXPECT_EQ(m.encoder_digest(), ck.param_digest("encoder."));
}

TEST(CmtForward, DisableSkeletonEqualsZeroPoseTokens) {
  Tiny t(Variant::standard);
  auto ts = t.model.embed_modalities(t.ptrs);
  const auto disabled = t.model.cmt_forward(ts, true);
  ts.pose = Var::zeros(ts.pose.shape());
  const auto zeroed = t.model.cmt_forward(ts, false);
  expect_same(disabled.queries, zeroed.queries);
  expect_same(disabled.traj, zeroed.traj);
}

TEST(CmtForward, PoseTokenPermutationInvariance) {
  Tiny t(Variant::stgcn_scratch, 1);
  auto ts = t.model.embed_modalities(t.ptrs);
  const auto base = t.model.cmt_forward(ts, false);
  const int n = ts.pose.dim(1), d = ts.pose.dim(2);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i * 5 + 3) % n;
  std::vector<double> v(ts.pose.size());
  std::vector<std::pair<int, int>> idx;
  for (int i = 0; i < n; ++i) {
    const int src = perm[static_cast<std::size_t>(i)];
    std::copy_n(ts.pose.value().begin() + src * d, d, v.begin() + i * d);
    idx.push_back(ts.pose_index[static_cast<std::size_t>(src)]);
  }
  ts.pose = Var::constant(ts.pose.shape(), v);
  ts.pose_index = idx;
  const auto moved = t.model.cmt_forward(ts, false);
  expect_near(base.queries, moved.queries, kPermTol);
  expect_near(base.traj, moved.traj, kPermTol);
}

TEST(SocialForward, SingleAgentFiniteShape) {
  PredictorConfig cfg;
  TrajPredictor m(default_walker_graph(), cfg, 2);
  Rng rng(3);
  const auto a = random_agent(9, 16, rng);
  const auto f = m.cmt_forward(m.embed_modalities({&a}), false);
  const Var out = m.social_forward({f.fused()}, 0);
  EXPECT_EQ(out.shape(), (ad::Shape{1, 12, 128}));
  for (double v : out.value()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(m.social_forward(std::vector<Var>{}, 0), Error);
  EXPECT_THROW(m.social_forward({f.fused()}, 1), Error);
}

TEST(SocialForward, TargetRelabelingAndNeighborOrder) {
  Tiny t(Variant::standard, 3);
  const auto f = t.model.cmt_forward(t.model.embed_modalities(t.ptrs), false);
  const Var fused = f.fused();
  const Var a = ad::slice(fused, 0, 0, 1), b = ad::slice(fused, 0, 1, 1), c = ad::slice(fused, 0, 2, 1);
  expect_same(t.model.social_forward({a, b, c}, 1), t.model.social_forward({b, a, c}, 0));
  expect_near(t.model.social_forward({b, a, c}, 0), t.model.social_forward({b, c, a}, 0), kPermTol);
  // a duplicated neighbor keeps the output finite and deterministic
  const Var dup1 = t.model.social_forward({a, b, b}, 0), dup2 = t.model.social_forward({a, b, b}, 0);
  expect_same(dup1, dup2);
  for (double v : dup1.value()) EXPECT_TRUE(std::isfinite(v));
}

TEST(SocialForward, PaddedBatchMatchesPerWindow) {
  Tiny t(Variant::standard, 3);
  const auto f = t.model.cmt_forward(t.model.embed_modalities(t.ptrs), false);
  const Var batched = t.model.social_forward(f.fused(), {{0, 1, 2}, {1}});
  const Var first = t.model.social_forward(f.fused(), {{0, 1, 2}});
  const Var second = t.model.social_forward(f.fused(), {{1}});
  const std::size_t per = first.size();
  for (std::size_t i = 0; i < per; ++i) {
    EXPECT_NEAR(batched.value()[i], first.value()[i], 1e-12);
    EXPECT_NEAR(batched.value()[per + i], second.value()[i], 1e-12);
  }
}

TEST(Gradients, CmtSocialHeadAndEmbeddings) {
  for (Variant v : {Variant::standard, Variant::stgcn_scratch}) {
    Tiny t(v, 2);
    PreparedWindow w;
    w.agents = t.agents;
    w.future.assign(4, 0.3);
    auto loss = [&] {
      const Var y = t.model.forward({&w}, false);
      return ad::weighted_sq_error(y, w.future, 2, {}, 2.0);
    };
    for (const char* prefix : {"cmt.", "social", "head.", "traj_embed", "queries", v == Variant::standard ? "pose_embed" : "encoder."})
      EXPECT_LT(max_grad_error(leaves_with_prefix(t.model.params(), prefix), loss), kGradTol) << to_string(v) << " " << prefix;
  }
}

TEST(Gradients, CmtOutputStreams) {
  Tiny t(Variant::standard, 1);
  const auto cmt = leaves_with_prefix(t.model.params(), "cmt.");
  EXPECT_LT(max_grad_error(cmt, [&] { return probe(t.model.cmt_forward(t.model.embed_modalities(t.ptrs), false).fused()); }),
            kGradTol);
}

TEST(TrajectoryLoss, HandExamples) {
  std::vector<double> y(24);
  Rng rng(4);
  for (auto& v : y) v = rng.uniform(-2, 2);
  EXPECT_EQ(trajectory_loss(y, y), 0.0);
  auto off = y;
  for (std::size_t i = 0; i < 24; i += 2) {
    off[i] += 0.3;
    off[i + 1] += 0.4;
  }
  EXPECT_NEAR(trajectory_loss(off, y), 0.25, 1e-12);
  auto last = y;
  last[22] += 3;
  last[23] += 4;
  EXPECT_NEAR(trajectory_loss(last, y), 25.0 / 12.0, 1e-12);
  EXPECT_THROW(trajectory_loss(std::vector<double>(22), y), Error);
}

TEST(ConstantVelocity, ExtrapolatesLastStep) {
  const auto cv = constant_velocity({0, 0, 1, 0.5, 2, 1}, 3);
  EXPECT_EQ(cv, (std::vector<double>{3, 1.5, 4, 2, 5, 2.5}));
  EXPECT_THROW(constant_velocity({1, 2}, 3), Error);
}

TEST(PrepareWindow, TargetFrameAndMasksAfterNormalization) {
  const auto ws = toy_windows(1, 3);
  const auto& w = ws.front();
  const auto p = prepare_window(w, true, 8);
  ASSERT_EQ(p.agents.size(), 1 + w.neighbors.size());
  EXPECT_NEAR(p.agents[0].traj[16], 0.0, 1e-12);
  EXPECT_NEAR(p.agents[0].traj[17], 0.0, 1e-12);
  EXPECT_NEAR(p.agents[0].traj[15], 0.0, 1e-9);  // previous point lies on the -x axis
  EXPECT_LT(p.agents[0].traj[14], 0.0);
  const auto world = p.frame.traj_to_world(p.future);
  for (std::size_t i = 0; i < world.size(); ++i) EXPECT_NEAR(world[i], w.future_traj[i], 1e-12);

  const auto masks = window_masks(MaskStrategy::random, 0.5, 9, p.agents.size(), 9, default_walker_graph());
  const auto pm = prepare_window(w, true, 8, &masks);
  for (std::size_t a = 0; a < pm.agents.size(); ++a)
    for (int t = 0; t < 9; ++t)
      for (int n = 0; n < 16; ++n)
        for (int c = 0; c < 3; ++c) {
          if (masks[a].at(t, n))
            EXPECT_EQ(pm.agents[a].skeleton.at(t, n, c), 0.0);
          else
            EXPECT_EQ(pm.agents[a].skeleton.at(t, n, c), p.agents[a].skeleton.at(t, n, c));
        }
  EXPECT_EQ(prepare_window(w, true, 0).agents.size(), 1u);
}

TEST(PrepareWindow, FrontendFillsOnlyMaskedJoints) {
  const auto ws = toy_windows(1, 3);
  const auto p = prepare_window(ws.front(), true, 8);
  const auto masks = window_masks(MaskStrategy::body_part, 0.4, 3, p.agents.size(), 9, default_walker_graph());
  ssl::ReconModel recon(default_walker_graph(), {1, 8, 3, 3}, 0, 1);
  const auto pf = prepare_window(ws.front(), true, 8, &masks, &recon);
  for (std::size_t a = 0; a < pf.agents.size(); ++a) {
    const auto want = ssl::reconstruct_complete(p.agents[a].skeleton, masks[a], recon);
    EXPECT_EQ(pf.agents[a].skeleton.data, want.data);
  }
}

TEST(TrajPredictor, PretrainedVariantsNeedCheckpoint) {
  for (Variant v : {Variant::ours, Variant::ours_plus_recon}) {
    try {
      TrajPredictor m(four_joints(), tiny_config(v), 1);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::missing_dependency);
    }
    try {
      train_predictor(toy_windows(1, 1), {}, default_walker_graph(), small_config(v), 1);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::missing_dependency);
    }
  }
  auto bad = tiny_config(Variant::stgcn_scratch);
  bad.encoder.feature_dim = 6;
  EXPECT_THROW(TrajPredictor(four_joints(), bad, 1), Error);
}

TEST(TrajPredictor, StandardAndCorruptionTrainedShareParameterCount) {
  TrajPredictor a(default_walker_graph(), small_config(Variant::standard), 1);
  TrajPredictor b(default_walker_graph(), small_config(Variant::corruption_trained), 1);
  EXPECT_EQ(gnn::count_params(a.params()).total, gnn::count_params(b.params()).total);
  EXPECT_EQ(a.params().digest(), b.params().digest());
}

TEST(TrainPredictor, FrozenEncoderContract) {
  const auto g = default_walker_graph();
  const auto ck = fake_pretrained(g, 16, 4);
  auto cfg = small_config(Variant::ours);
  cfg.max_steps = 5;
  const auto r = train_predictor(toy_windows(2, 1), {}, g, cfg, 3, &ck);
  EXPECT_EQ(r.encoder_digest_before, r.encoder_digest_after);
  EXPECT_EQ(r.checkpoint.param_digest("encoder."), ck.param_digest("encoder."));
  TrajPredictor fresh(g, cfg, 3, &ck);
  EXPECT_NE(r.checkpoint.param_digest("cmt."), fresh.params().digest("cmt."));
  EXPECT_EQ(r.checkpoint.variant, "ours");
  EXPECT_EQ(r.checkpoint.config["pretrained_config_digest"], ck.config_digest());
}

TEST(TrainPredictor, FitsSmallSetAndIsDeterministic) {
  const auto train = toy_windows(8, 1);
  auto cfg = small_config(Variant::standard);
  cfg.epochs = 1000;
  cfg.max_steps = 300;
  const auto r = train_predictor(train, {}, default_walker_graph(), cfg, 5);
  ASSERT_EQ(r.step_losses.size(), 300u);
  const auto trained = TrajPredictor::from_checkpoint(r.checkpoint, default_walker_graph());
  const TrajPredictor init(default_walker_graph(), cfg, 5);
  std::vector<PreparedWindow> prepared;
  for (const auto& w : train) prepared.push_back(init.prepare(w));
  EXPECT_LT(mean_ade_local(trained, prepared), 0.7 * mean_ade_local(init, prepared));
  auto short_cfg = cfg;
  short_cfg.max_steps = 20;
  const auto a = train_predictor(train, {}, default_walker_graph(), short_cfg, 5);
  const auto b = train_predictor(train, {}, default_walker_graph(), short_cfg, 5);
  EXPECT_EQ(a.checkpoint.param_digest(), b.checkpoint.param_digest());
  EXPECT_EQ(a.step_losses, b.step_losses);
}

TEST(TrainPredictor, CorruptionTrainedSeesMaskedSkeletons) {
  const auto train = toy_windows(2, 1);
  auto cfg = small_config(Variant::corruption_trained);
  cfg.max_steps = 3;
  auto clean_cfg = cfg;
  clean_cfg.variant = Variant::standard;
  const auto a = train_predictor(train, {}, default_walker_graph(), cfg, 5);
  const auto b = train_predictor(train, {}, default_walker_graph(), clean_cfg, 5);
  // same init and batches, different inputs
  EXPECT_EQ(a.step_losses.size(), 3u);
  EXPECT_NE(a.step_losses[0], b.step_losses[0]);
}

TEST(Checkpoints, SaveLoadReproducesForwardBitExactly) {
  const auto ws = toy_windows(2, 1);
  auto cfg = small_config(Variant::stgcn_scratch);
  cfg.max_steps = 2;
  const auto r = train_predictor(ws, {}, default_walker_graph(), cfg, 5);
  const auto path = std::filesystem::temp_directory_path() / "skelmae_pred.ckpt.json";
  save_checkpoint(r.checkpoint, path.string());
  const auto a = TrajPredictor::from_checkpoint(r.checkpoint, default_walker_graph());
  const auto b = TrajPredictor::from_checkpoint(load_checkpoint(path.string()), default_walker_graph());
  EXPECT_EQ(a.predict(ws[0]), b.predict(ws[0]));
  EXPECT_EQ(b.config().variant, Variant::stgcn_scratch);
}

TEST(Checkpoints, FrontendRetaggingAndLoading) {
  const auto ws = toy_windows(2, 1);
  auto cfg = small_config(Variant::standard);
  cfg.max_steps = 2;
  const auto r = train_predictor(ws, {}, default_walker_graph(), cfg, 5);
  const auto tagged = as_frontend_variant(r.checkpoint, Variant::recon_frontend);
  EXPECT_EQ(tagged.variant, "recon_frontend");
  EXPECT_EQ(tagged.param_digest(), r.checkpoint.param_digest());
  EXPECT_THROW(as_frontend_variant(r.checkpoint, Variant::ours_plus_recon), Error);
  EXPECT_THROW(as_frontend_variant(r.checkpoint, Variant::standard), Error);
  try {
    load_predictor(tagged, default_walker_graph());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_dependency);
  }
  const auto recon = fake_pretrained(default_walker_graph(), 8, 2);
  const auto m = load_predictor(tagged, default_walker_graph(), &recon);
  ASSERT_NE(m.frontend(), nullptr);
  // with empty masks the frontend is the identity
  const auto plain = load_predictor(r.checkpoint, default_walker_graph());
  EXPECT_EQ(m.predict(ws[0]), plain.predict(ws[0]));
  const auto masks = window_masks(MaskStrategy::random, 0.5, 1, 1 + ws[0].neighbors.size(), 9, default_walker_graph());
  EXPECT_NE(m.predict(ws[0], &masks), plain.predict(ws[0], &masks));
}

TEST(PredictorConfig, JsonRoundTripAndValidation) {
  auto c = small_config(Variant::ours_plus_recon);
  c.pose_blind = true;
  c.corruption_ratio = 0.3;
  const auto back = PredictorConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  auto bad = c;
  bad.dim = 7;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.cmt_heads = 3;
  EXPECT_THROW(bad.validate(), Error);
  for (Variant v : kVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("oracle"), Error);
}
