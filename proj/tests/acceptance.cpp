// Acceptance suite: one PASS/WARN/FAIL line per criterion. Directional
// criteria are decided by majority over seeds and report WARN instead of
// failing; everything else is a hard check. Exit status is nonzero only when
// some criterion FAILs.
//
//   acceptance [--only 1,4,10]

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "skelmae/checkpoint.hpp"
#include "skelmae/dataset_io.hpp"
#include "skelmae/eval_harness.hpp"
#include "skelmae/graph_nets.hpp"
#include "skelmae/ssl_pretrain.hpp"
#include "skelmae/synthgen.hpp"
#include "skelmae/traj_predictor.hpp"
#include "skelmae/transformer.hpp"

using namespace skelmae;
using ad::Var;
using testing_util::max_grad_error;
using testing_util::probe;
using testing_util::random_leaf;

namespace {

// ---------------------------------------------------------------- pinned tolerances

constexpr int kMaskDraws = 200;
constexpr double kGradTol = 1e-4;
constexpr double kOracleTol = 1e-12;
constexpr int kOracleDraws = 100;
constexpr double kReDerivedPp = 0.15;
constexpr double kLossDrop = 0.5;
constexpr int kPretrainSequences = 2000;
constexpr double kCompletionRatio = 0.5;
constexpr double kCrossRatio = 0.5;
constexpr double kRobustRatio = 0.4;
constexpr int kRoundTripScenes = 20;
constexpr int kParamStacks = 10;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

enum class Status { pass, warn, fail };

struct Outcome {
  Status status;
  std::string detail;
};

const char* label(Status s) { return s == Status::pass ? "PASS" : s == Status::warn ? "WARN" : "FAIL"; }

Status hard(bool ok) { return ok ? Status::pass : Status::fail; }
Status majority(int wins, int total) { return 2 * wins > total ? Status::pass : Status::warn; }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

// ---------------------------------------------------------------- shared fixtures

SkeletonGraph random_graph(int n, Rng& rng) {
  JointSpec s;
  for (int i = 0; i < n; ++i) s.joints.push_back("j" + std::to_string(i));
  for (int i = 1; i < n; ++i)
    s.edges.push_back({s.joints[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i)))],
                       s.joints[static_cast<std::size_t>(i)]});
  // three distinct cut points give four non-empty contiguous parts
  auto cuts = rng.sample_without_replacement(n - 1, 3);
  for (auto& c : cuts) c += 1;
  std::sort(cuts.begin(), cuts.end());
  const char* names[] = {"center_upper", "center_lower", "right_limb", "left_limb"};
  int lo = 0;
  for (int p = 0; p < 4; ++p) {
    const int hi = p < 3 ? cuts[static_cast<std::size_t>(p)] : n;
    auto& part = s.parts[names[p]];
    for (int i = lo; i < hi; ++i) part.push_back(s.joints[static_cast<std::size_t>(i)]);
    lo = hi;
  }
  return build_skeleton_graph(s);
}

SkeletonGraph four_joints() {
  JointSpec s;
  s.joints = {"a", "b", "c", "d"};
  s.edges = {{"a", "b"}, {"b", "c"}, {"b", "d"}};
  s.parts = {{"center_upper", {"a"}}, {"center_lower", {"b"}}, {"right_limb", {"c"}}, {"left_limb", {"d"}}};
  return build_skeleton_graph(s);
}

void jitter(const nn::ParamSet& ps, Rng& rng, double scale) {
  for (const auto& p : ps.all()) {
    Var v = p.var;
    for (auto& x : v.mutable_value()) x += rng.uniform(-scale, scale);
  }
}

std::vector<Var> with_prefix(const nn::ParamSet& ps, const std::string& prefix) {
  std::vector<Var> out;
  for (const auto& p : ps.all())
    if (p.name.rfind(prefix, 0) == 0) out.push_back(p.var);
  return out;
}

SkeletonSequence random_sequence(int t, int n, Rng& rng) {
  SkeletonSequence s(t, n);
  for (auto& v : s.data) v = rng.normal();
  return s;
}

/// Predictor settings shared by the tiny profile and the downstream study.
pred::PredictorConfig predictor_config(pred::Variant v, int dim, int epochs) {
  pred::PredictorConfig c;
  c.variant = v;
  c.dim = dim;
  c.cmt_layers = 2;
  c.cmt_heads = 2;
  c.social_layers = 1;
  c.social_heads = 2;
  c.ff_dim = 2 * dim;
  c.lr = 5e-4;
  c.batch_size = 16;
  c.epochs = epochs;
  c.encoder = {2, dim, 3, 3};
  return c;
}

ssl::PretrainConfig pretrain_config(MaskStrategy s, double r, int epochs) {
  ssl::PretrainConfig c;
  c.strategy = s;
  c.r_train = r;
  c.lr = 1e-3;
  c.batch_size = 64;
  c.epochs = epochs;
  c.r_val.clear();
  return c;
}

/// Tiny profile: 20 scenes, D=32, two epochs, every variant trained.
struct TinyProfile {
  SkeletonGraph graph = default_walker_graph();
  std::vector<synth::Scene> scenes;
  std::vector<synth::WindowSample> train, test;
  Checkpoint encoder;
  std::map<std::string, Checkpoint> checkpoints;
  std::map<std::string, std::unique_ptr<pred::TrajPredictor>> models;

  TinyProfile() {
    synth::GenConfig g;
    g.n_agents = 3;
    scenes = synth::generate_dataset(g, 20, 1);
    train = pred::window_scenes(synth::filter_split(scenes, synth::Split::train), 9, 12, 3);
    test = pred::window_scenes(synth::filter_split(scenes, synth::Split::test), 9, 12, 3);
    const auto seqs = ssl::skeleton_windows(synth::filter_split(scenes, synth::Split::train), 9, 3);
    encoder = ssl::pretrain(seqs, {}, graph, {2, 32, 3, 3}, pretrain_config(MaskStrategy::random, 0.5, 2), 1).checkpoint;
    for (auto v : {pred::Variant::standard, pred::Variant::corruption_trained, pred::Variant::stgcn_scratch,
                   pred::Variant::ours}) {
      const auto r = pred::train_predictor(train, {}, graph, predictor_config(v, 32, 2), 1, &encoder);
      checkpoints[to_string(v)] = r.checkpoint;
    }
    auto blind = predictor_config(pred::Variant::standard, 32, 2);
    blind.pose_blind = true;
    checkpoints["pose_blind"] = pred::train_predictor(train, {}, graph, blind, 1).checkpoint;
    checkpoints["recon_frontend"] = pred::as_frontend_variant(checkpoints["standard"], pred::Variant::recon_frontend);
    checkpoints["ours_plus_recon"] = pred::as_frontend_variant(checkpoints["ours"], pred::Variant::ours_plus_recon);
    for (const auto& [name, c] : checkpoints)
      models[name] = std::make_unique<pred::TrajPredictor>(pred::load_predictor(c, graph, &encoder));
  }

  std::vector<eval::Method> methods(const std::vector<std::string>& names) const {
    std::vector<eval::Method> out;
    for (const auto& n : names) out.push_back({n, models.at(n).get()});
    return out;
  }
};

TinyProfile& tiny() {
  static TinyProfile p;
  return p;
}

/// Pretraining corpus of at least kPretrainSequences training sequences.
struct PretrainCorpus {
  SkeletonGraph graph = default_walker_graph();
  std::vector<SkeletonSequence> train, val;
  gnn::EncoderConfig enc{2, 32, 3, 3};

  PretrainCorpus() {
    synth::GenConfig g;
    int scenes = 60;
    do {
      const auto all = synth::generate_dataset(g, scenes, 7);
      train = ssl::skeleton_windows(synth::filter_split(all, synth::Split::train), 9, 3);
      val = ssl::skeleton_windows(synth::filter_split(all, synth::Split::val), 9, 3);
      scenes += 10;
    } while (static_cast<int>(train.size()) < kPretrainSequences);
    train.resize(static_cast<std::size_t>(kPretrainSequences));
    if (val.size() > 256) val.resize(256);
  }
};

PretrainCorpus& corpus() {
  static PretrainCorpus c;
  return c;
}

constexpr int kPretrainEpochs = 6;
// Strategy specialization only emerges with longer training.
constexpr int kSweepEpochs = 24;

/// Reconstruction models keyed by (strategy, r_train, seed), trained once.
const ssl::ReconModel& recon_model(MaskStrategy s, double r, std::uint64_t seed) {
  static std::map<std::tuple<int, long, std::uint64_t>, std::unique_ptr<ssl::ReconModel>> cache;
  const auto key = std::make_tuple(static_cast<int>(s), std::lround(r * 1000), seed);
  auto it = cache.find(key);
  if (it == cache.end()) {
    auto& c = corpus();
    const auto res = ssl::pretrain(c.train, {}, c.graph, c.enc, pretrain_config(s, r, kSweepEpochs), seed);
    it = cache.emplace(key, std::make_unique<ssl::ReconModel>(ssl::ReconModel::from_checkpoint(res.checkpoint, c.graph)))
             .first;
  }
  return *it->second;
}

// ---------------------------------------------------------------- criteria

Outcome masking_invariants() {
  Rng rng(2024);
  int bad = 0;
  std::string first;
  const MaskStrategy strategies[] = {MaskStrategy::random, MaskStrategy::temporally_consistent, MaskStrategy::body_part};
  for (int i = 0; i < kMaskDraws; ++i) {
    const MaskStrategy strat = strategies[i % 3];
    const double r = i % 20 == 0 ? 0.0 : i % 20 == 1 ? 1.0 : rng.uniform(0.0, 1.0);
    const int t = 1 + static_cast<int>(rng.below(30));
    const int n = 4 + static_cast<int>(rng.below(27));
    const std::uint64_t seed = rng.below(1u << 30);
    const auto g = random_graph(n, rng);
    const MaskSpec spec{strat, r, seed};
    const auto m = sample_mask(spec, t, g);
    bool ok = m == sample_mask(spec, t, g) && m.digest() == sample_mask(spec, t, g).digest();
    const int k = static_cast<int>(std::floor(r * n));
    for (int f = 0; f < t && ok; ++f) {
      int count = 0;
      for (int j = 0; j < n; ++j) count += m.at(f, j) ? 1 : 0;
      if (strat != MaskStrategy::body_part) ok = ok && count == k;
      if (strat == MaskStrategy::temporally_consistent)
        for (int j = 0; j < n; ++j) ok = ok && m.at(f, j) == m.at(0, j);
      if (strat == MaskStrategy::body_part)
        for (const auto& [name, idx] : g.parts())
          for (int j : idx) ok = ok && m.at(f, j) == m.at(f, idx.front());
    }
    if (!ok) {
      ++bad;
      if (first.empty()) first = fmt(" first: %s r=%.3f T=%d N=%d", to_string(strat), r, t, n);
    }
  }
  return {hard(bad == 0), fmt("%d/%d draws satisfy counts, constancy, part unions, determinism%s", kMaskDraws - bad,
                              kMaskDraws, first.c_str())};
}

Outcome gradient_checks() {
  Rng rng(5);
  std::map<std::string, double> worst;
  {
    nn::ParamSet ps;
    Rng init(1);
    gnn::StgcnEncoder enc(four_joints(), {2, 4, 3, 3}, ps, "encoder", init);
    jitter(ps, rng, 0.2);
    Var x = random_leaf({1, 3, 4, 3}, rng);
    auto leaves = ps.trainable();
    leaves.push_back(x);
    worst["encoder"] = max_grad_error(leaves, [&] { return probe(enc.forward(x)); });
  }
  {
    nn::ParamSet ps;
    Rng init(2);
    gnn::MlpDecoder dec(4, 5, 3, ps, "decoder", init);
    Var h = random_leaf({1, 2, 4, 4}, rng);
    auto leaves = ps.trainable();
    leaves.push_back(h);
    worst["decoder"] = max_grad_error(leaves, [&] { return probe(dec.forward(h)); });
  }
  {
    pred::PredictorConfig c;
    c.obs_frames = 3;
    c.pred_frames = 2;
    c.dim = 4;
    c.cmt_layers = 1;
    c.cmt_heads = 2;
    c.social_layers = 1;
    c.social_heads = 2;
    c.ff_dim = 8;
    pred::TrajPredictor m(four_joints(), c, 3);
    jitter(m.params(), rng, 0.2);
    pred::PreparedWindow w;
    for (int a = 0; a < 2; ++a) {
      pred::AgentInput in;
      for (int t = 0; t < 3; ++t) {
        in.traj.push_back(0.4 * (t - 2) + rng.uniform(-0.05, 0.05));
        in.traj.push_back(rng.uniform(-0.05, 0.05));
      }
      in.skeleton = random_sequence(3, 4, rng);
      w.agents.push_back(in);
    }
    w.future = {0.4, 0.1, 0.8, -0.2};
    auto loss = [&] { return ad::weighted_sq_error(m.forward({&w}, false), w.future, 2, {}, 2.0); };
    worst["cmt"] = max_grad_error(with_prefix(m.params(), "cmt."), loss);
    worst["social"] = max_grad_error(with_prefix(m.params(), "social"), loss);
    worst["head"] = max_grad_error(with_prefix(m.params(), "head."), loss);
  }
  bool ok = true;
  std::string d;
  for (const auto& [k, v] : worst) {
    ok = ok && v <= kGradTol;
    d += fmt("%s %.1e ", k.c_str(), v);
  }
  return {hard(ok), "max rel err " + d + fmt("(tol %.0e)", kGradTol)};
}

Outcome metric_oracles() {
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < kOracleDraws; ++trial) {
    const int t = 1 + static_cast<int>(rng.below(10));
    const int n = 4 + static_cast<int>(rng.below(13));
    const auto s = random_sequence(t, n, rng), y = random_sequence(t, n, rng);
    MaskTensor m(t, n);
    for (int f = 0; f < t; ++f)
      for (int j = 0; j < n; ++j) m.set(f, j, rng.uniform() < 0.5);
    m.set(0, 0, true);
    m.set(t - 1, n - 1, false);
    double all = 0.0, masked = 0.0, unmasked = 0.0, dist = 0.0, dist_masked = 0.0;
    int cm = 0;
    for (int f = 0; f < t; ++f)
      for (int j = 0; j < n; ++j) {
        double sq = 0.0;
        for (int c = 0; c < 3; ++c) sq += (s.at(f, j, c) - y.at(f, j, c)) * (s.at(f, j, c) - y.at(f, j, c));
        all += sq;
        dist += std::sqrt(sq);
        if (m.at(f, j)) {
          masked += sq;
          dist_masked += std::sqrt(sq);
          ++cm;
        } else {
          unmasked += sq;
        }
      }
    const int total = t * n, cu = total - cm;
    const double l_all = ssl::reconstruction_loss(s, y, m, ssl::LossMode::all_joint);
    const double l_m = ssl::reconstruction_loss(s, y, m, ssl::LossMode::masked_only);
    const double l_u = ssl::reconstruction_loss(s, y, ssl::invert(m), ssl::LossMode::masked_only);
    worst = std::max({worst, rel_err(l_all, all / total), rel_err(l_m, masked / cm), rel_err(l_u, unmasked / cu),
                      rel_err(l_all, (cm * l_m + cu * l_u) / total), rel_err(ssl::mpjpe(s, y), dist / total),
                      rel_err(ssl::mpjpe(s, y, &m), dist_masked / cm)});

    const int tp = 1 + static_cast<int>(rng.below(15));
    std::vector<double> a(2 * static_cast<std::size_t>(tp)), b(a.size());
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    double d = 0.0, d2 = 0.0, last = 0.0;
    for (int k = 0; k < tp; ++k) {
      const double dx = a[2 * k] - b[2 * k], dy = a[2 * k + 1] - b[2 * k + 1];
      d += std::sqrt(dx * dx + dy * dy);
      d2 += dx * dx + dy * dy;
      last = std::sqrt(dx * dx + dy * dy);
    }
    worst = std::max({worst, rel_err(eval::ade(a, b), d / tp), rel_err(eval::fde(a, b), last),
                      rel_err(pred::trajectory_loss(a, b), d2 / tp)});
  }
  return {hard(worst <= kOracleTol),
          fmt("%d draws, worst rel err %.2e over recon loss (both modes, identity), mpjpe, ade, fde, trajectory loss",
              kOracleDraws, worst)};
}

Outcome zero_mask_identity() {
  auto& p = tiny();
  const std::vector<std::string> names{"standard", "corruption_trained", "stgcn_scratch", "ours", "ours_plus_recon",
                                       "recon_frontend"};
  const auto methods = p.methods(names);
  const auto report = eval::robustness_eval(methods, p.test, p.graph);
  const auto clean = eval::clean_metrics(methods, p.test);
  int ok = 0;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    const auto* row = report.find(names[k], 0.0);
    bool same = row && row->ade == clean[k].ade && row->fde == clean[k].fde;
    for (std::size_t s = 0; row && s < row->seed_ade.size(); ++s)
      same = same && row->seed_ade[s] == clean[k].ade && row->seed_fde[s] == clean[k].fde;
    ok += same ? 1 : 0;
  }
  bool paired = true;
  try {
    eval::check_paired(report);
  } catch (const Error&) {
    paired = false;
  }
  return {hard(ok == static_cast<int>(names.size()) && paired),
          fmt("%d/%zu methods bit-identical at r=0 on %zu test windows; masks paired: %s", ok, names.size(),
              p.test.size(), paired ? "yes" : "no")};
}

Outcome skeleton_disabled() {
  auto& p = tiny();
  int same = 0, checked = 0;
  for (const char* name : {"standard", "stgcn_scratch", "ours"}) {
    const auto& m = *p.models.at(name);
    for (std::size_t i = 0; i < std::min<std::size_t>(p.test.size(), 8); ++i) {
      const auto w = m.prepare(p.test[i]);
      std::vector<const pred::AgentInput*> agents;
      for (const auto& a : w.agents) agents.push_back(&a);
      auto ts = m.embed_modalities(agents);
      const auto off = m.cmt_forward(ts, true);
      ts.pose = Var::zeros(ts.pose.shape());
      const auto zeroed = m.cmt_forward(ts, false);
      ++checked;
      same += off.queries.value() == zeroed.queries.value() && off.traj.value() == zeroed.traj.value() ? 1 : 0;
    }
  }
  const auto rel = eval::reliance_probe(p.methods({"pose_blind", "standard"}), p.test);
  const bool zero = rel.rows[0].delta_ade() == 0.0 && rel.rows[0].delta_fde() == 0.0;
  return {hard(same == checked && zero),
          fmt("%d/%d disable==zeroed-pose bit-identical; pose-blind delta (%.3g, %.3g); standard delta ADE %+.4f", same,
              checked, rel.rows[0].delta_ade(), rel.rows[0].delta_fde(), rel.rows[1].delta_ade())};
}

Outcome degradation_arithmetic() {
  const std::string a = eval::signed_fixed(eval::degradation_rate(0.940, 0.920), 1);
  const double b = eval::degradation_rate(1.050, 0.920);
  const std::string c = eval::signed_fixed(eval::degradation_rate(2.058, 1.832), 1);
  const bool ok = a == "+2.2" && eval::signed_fixed(b, 1) == "+14.1" && std::abs(b - 14.0) <= kReDerivedPp && c == "+12.3";
  return {hard(ok), "(0.940,0.920)->" + a + fmt("%% (1.050,0.920)->%+.2f%% vs printed +14.0 (tol %.2f pp) ", b, kReDerivedPp) +
                        "(2.058,1.832)->" + c + "%"};
}

Outcome pretraining_smoke() {
  auto& c = corpus();
  const auto r = ssl::pretrain(c.train, {}, c.graph, c.enc, pretrain_config(MaskStrategy::random, 0.5, kPretrainEpochs), 1);
  const double first = r.step_losses.front();
  double final_loss = 0.0;
  const std::size_t tail = std::min<std::size_t>(10, r.step_losses.size());
  for (std::size_t i = r.step_losses.size() - tail; i < r.step_losses.size(); ++i) final_loss += r.step_losses[i] / tail;
  const auto model = ssl::ReconModel::from_checkpoint(r.checkpoint, c.graph);
  double completed = 0.0, zero_fill = 0.0;
  for (std::size_t i = 0; i < c.val.size(); ++i) {
    const auto m = ssl::validation_mask(MaskStrategy::random, kCompletionRatio, i, 9001, c.val[i].frames, c.graph);
    const auto masked = apply_mask(c.val[i], m);
    completed += ssl::mpjpe(c.val[i], ssl::reconstruct_complete(masked, m, model), &m);
    zero_fill += ssl::mpjpe(c.val[i], masked, &m);
  }
  completed /= c.val.size();
  zero_fill /= c.val.size();
  const bool ok = final_loss < kLossDrop * first && completed < zero_fill;
  return {hard(ok), fmt("%zu seqs, %zu steps: loss %.4f -> %.4f (%.1f%% of initial); masked MPJPE at r=%.1f %.4f vs "
                        "zero-fill %.4f",
                        c.train.size(), r.step_losses.size(), first, final_loss, 100.0 * final_loss / first,
                        kCompletionRatio, completed, zero_fill)};
}

Outcome cross_mask_pattern() {
  auto& c = corpus();
  const std::vector<MaskStrategy> strategies{MaskStrategy::random, MaskStrategy::temporally_consistent,
                                             MaskStrategy::body_part};
  int wins = 0;
  std::string d;
  for (auto seed : kSeeds) {
    std::vector<const ssl::ReconModel*> models;
    for (auto s : strategies) models.push_back(&recon_model(s, kCrossRatio, seed));
    const auto x = eval::cross_mask_eval(models, strategies, kCrossRatio, {seed}, c.val);
    int diag = 0;
    for (std::size_t i = 0; i < 3; ++i) diag += x.diagonal_best(i) ? 1 : 0;
    const bool spread = x.spread(0) <= x.spread(1) && x.spread(0) <= x.spread(2);
    wins += diag == 3 && spread ? 1 : 0;
    d += fmt(" seed%llu: diag-best rows %d/3, spreads %.2f/%.2f/%.2f;", static_cast<unsigned long long>(seed), diag,
             x.spread(0), x.spread(1), x.spread(2));
  }
  return {majority(wins, static_cast<int>(kSeeds.size())), fmt("%d/%zu seeds match;", wins, kSeeds.size()) + d};
}

Outcome mask_ratio_pattern() {
  auto& c = corpus();
  const std::vector<double> r_train{0.1, 0.5, 0.9};
  int wins = 0;
  std::string d;
  for (auto seed : kSeeds) {
    std::vector<const ssl::ReconModel*> models;
    for (double r : r_train) models.push_back(&recon_model(MaskStrategy::random, r, seed));
    const auto s = eval::mask_ratio_sweep(models, r_train, ssl::default_ratio_grid(), MaskStrategy::random, {seed}, c.val);
    wins += s.argmin_row() == 1 ? 1 : 0;
    d += fmt(" seed%llu: %.4f/%.4f/%.4f;", static_cast<unsigned long long>(seed), s.row_average[0], s.row_average[1],
             s.row_average[2]);
  }
  return {majority(wins, static_cast<int>(kSeeds.size())),
          fmt("%d/%zu seeds minimize averaged MPJPE at r_train=0.5; averages at 0.1/0.5/0.9:", wins, kSeeds.size()) + d};
}

/// Downstream study on the turn-heavy toy split. Returns three outcomes.
std::vector<Outcome> downstream_pattern() {
  constexpr int kDim = 32, kSteps = 700, kScenes = 600;
  synth::GenConfig g;
  g.behavior_mix = {0.1, 0.35, 0.35, 0.2};
  g.n_agents = 2;
  g.duration_s = 8.4;
  g.turn_anticipation_frames = 5;
  const auto scenes = synth::generate_dataset(g, kScenes, 5);
  const auto& graph = default_walker_graph();
  const auto train = pred::window_scenes(synth::filter_split(scenes, synth::Split::train), 9, 12, 2, 1);
  const auto test = pred::window_scenes(synth::filter_split(scenes, synth::Split::test), 9, 12, 3, 1);
  const auto seqs = ssl::skeleton_windows(synth::filter_split(scenes, synth::Split::train), 9, 3);

  int wins_a = 0, wins_b = 0;
  bool frozen = true;
  std::string da, db, dc;
  for (auto seed : kSeeds) {
    const auto enc = ssl::pretrain(seqs, {}, graph, {2, kDim, 3, 3}, pretrain_config(MaskStrategy::random, 0.5, 2), seed)
                         .checkpoint;
    std::map<std::string, pred::TrainResult> runs;
    auto train_one = [&](const std::string& name, pred::PredictorConfig cfg) {
      cfg.max_steps = kSteps;
      runs[name] = pred::train_predictor(train, {}, graph, cfg, seed, &enc);
    };
    train_one("standard", predictor_config(pred::Variant::standard, kDim, 1000));
    auto blind = predictor_config(pred::Variant::standard, kDim, 1000);
    blind.pose_blind = true;
    train_one("pose_blind", blind);
    train_one("stgcn_scratch", predictor_config(pred::Variant::stgcn_scratch, kDim, 1000));
    train_one("ours", predictor_config(pred::Variant::ours, kDim, 1000));

    std::map<std::string, std::unique_ptr<pred::TrajPredictor>> models;
    for (const auto& [name, r] : runs)
      models[name] = std::make_unique<pred::TrajPredictor>(pred::load_predictor(r.checkpoint, graph));
    std::vector<eval::Method> methods;
    for (const char* n : {"standard", "pose_blind", "stgcn_scratch", "ours"}) methods.push_back({n, models[n].get()});
    const auto rob = eval::robustness_eval(methods, test, graph, MaskStrategy::random, {0.0, kRobustRatio}, kSeeds);
    auto clean = [&](const char* n) { return rob.find(n, 0.0)->ade; };
    auto deg = [&](const char* n) { return rob.find(n, kRobustRatio)->deg_ade; };

    const bool a = clean("standard") < clean("pose_blind") && clean("stgcn_scratch") < clean("pose_blind") &&
                   clean("ours") < clean("pose_blind");
    wins_a += a ? 1 : 0;
    da += fmt(" seed%llu: std %.4f stgcn %.4f ours %.4f vs blind %.4f;", static_cast<unsigned long long>(seed),
              clean("standard"), clean("stgcn_scratch"), clean("ours"), clean("pose_blind"));
    const bool b = deg("stgcn_scratch") > deg("standard") && deg("ours") < deg("stgcn_scratch");
    wins_b += b ? 1 : 0;
    db += fmt(" seed%llu: dADE std %+.2f%% stgcn %+.2f%% ours %+.2f%%;", static_cast<unsigned long long>(seed),
              deg("standard"), deg("stgcn_scratch"), deg("ours"));

    const auto& o = runs["ours"];
    const std::string want = enc.param_digest("encoder.");
    const bool f = o.encoder_digest_before == want && o.encoder_digest_after == want &&
                   o.checkpoint.param_digest("encoder.") == want && models["ours"]->encoder_digest() == want;
    frozen = frozen && f;
    dc += fmt(" seed%llu %s;", static_cast<unsigned long long>(seed), f ? "unchanged" : "CHANGED");
  }
  const int n = static_cast<int>(kSeeds.size());
  return {{majority(wins_a, n), fmt("(a) %d/%d seeds: skeleton variants beat pose-blind on clean ADE;", wins_a, n) + da},
          {majority(wins_b, n), fmt("(b) %d/%d seeds: stgcn_scratch degrades more than standard at r=%.1f and ours "
                                    "less than stgcn_scratch;",
                                    wins_b, n, kRobustRatio) +
                                    db},
          {hard(frozen), "(c) pretrained encoder digest after training:" + dc}};
}

Outcome file_roundtrip() {
  const auto dir = std::filesystem::temp_directory_path() / "skelmae_acceptance";
  std::filesystem::create_directories(dir);
  Rng rng(11);
  std::vector<synth::Scene> scenes;
  for (int i = 0; i < kRoundTripScenes; ++i) {
    synth::GenConfig g;
    g.n_agents = 1 + static_cast<int>(rng.below(4));
    g.noise_std = rng.uniform(0.0, 0.05);
    scenes.push_back(synth::generate_scene(g, rng.below(1u << 30), "scene-" + std::to_string(i)));
  }
  const auto data_path = (dir / "roundtrip.jsonl").string();
  io::write_dataset(scenes, data_path);
  const auto back = io::read_dataset(data_path);
  const bool data_ok = back.scenes == scenes && io::dataset_digest(back.scenes) == io::dataset_digest(scenes);

  auto& p = tiny();
  int same = 0, total = 0;
  for (const char* name : {"standard", "stgcn_scratch", "ours"}) {
    const auto path = (dir / (std::string(name) + ".ckpt.json")).string();
    save_checkpoint(p.checkpoints.at(name), path);
    const auto loaded = pred::load_predictor(load_checkpoint(path), p.graph);
    for (std::size_t i = 0; i < std::min<std::size_t>(4, p.test.size()); ++i, ++total)
      same += loaded.predict(p.test[i]) == p.models.at(name)->predict(p.test[i]) ? 1 : 0;
  }
  const auto enc_path = (dir / "encoder.ckpt.json").string();
  save_checkpoint(p.encoder, enc_path);
  const auto a = ssl::ReconModel::from_checkpoint(p.encoder, p.graph);
  const auto b = ssl::ReconModel::from_checkpoint(load_checkpoint(enc_path), p.graph);
  const auto seq = ssl::skeleton_windows(p.scenes, 9, 9).front();
  ++total;
  same += a.reconstruct(seq).data == b.reconstruct(seq).data ? 1 : 0;
  return {hard(data_ok && same == total), fmt("%d scenes bit-exact: %s; %d/%d reloaded forwards bit-identical",
                                              kRoundTripScenes, data_ok ? "yes" : "no", same, total)};
}

Outcome parameter_accounting() {
  Rng rng(12);
  int ok = 0;
  for (int i = 0; i < kParamStacks; ++i) {
    nn::ParamSet ps;
    std::size_t want = 0;
    if (i % 3 == 0) {
      const int depth = 1 + static_cast<int>(rng.below(3)), d = 2 + static_cast<int>(rng.below(12)),
                k = 1 + 2 * static_cast<int>(rng.below(3));
      gnn::StgcnEncoder(default_walker_graph(), {depth, d, k, 3}, ps, "encoder", rng);
      int in = 3;
      for (int l = 0; l < depth; ++l, in = d)
        want += static_cast<std::size_t>(in * d + d + k * d * d + d + 2 * d + d);
    } else if (i % 3 == 1) {
      const int heads = 1 + static_cast<int>(rng.below(3)), d = heads * (1 + static_cast<int>(rng.below(5))),
                f = 1 + static_cast<int>(rng.below(20)), layers = 1 + static_cast<int>(rng.below(3));
      nn::TransformerStack(ps, "stack", layers, d, heads, f, rng);
      want = static_cast<std::size_t>(layers * (4 * (d * d + d) + 4 * d + d * f + f + f * d + d) + 2 * d);
    } else {
      int in = 1 + static_cast<int>(rng.below(10));
      const int layers = 1 + static_cast<int>(rng.below(4));
      for (int l = 0; l < layers; ++l) {
        const int out = 1 + static_cast<int>(rng.below(10));
        nn::Linear(ps, "mlp" + std::to_string(l), in, out, rng);
        want += static_cast<std::size_t>(in * out + out);
        in = out;
      }
    }
    ok += gnn::count_params(ps).total == want ? 1 : 0;
  }
  const auto footer = eval::render_text(eval::params_table({}));
  const bool refs = footer.find("3,188,546") != std::string::npos && footer.find("3,703,198") != std::string::npos;
  return {hard(ok == kParamStacks && refs),
          fmt("%d/%d stacks match closed form; reference footer rendered: %s", ok, kParamStacks, refs ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    }
  struct Criterion {
    int id;
    std::string name;
    std::function<std::vector<Outcome>()> run;
  };
  auto one = [](Outcome (*f)()) { return [f] { return std::vector<Outcome>{f()}; }; };
  const std::vector<Criterion> criteria{
      {1, "masking invariants", one(masking_invariants)},
      {2, "gradient correctness", one(gradient_checks)},
      {3, "metric/loss oracles", one(metric_oracles)},
      {4, "zero-mask identity", one(zero_mask_identity)},
      {5, "skeleton-disabled equivalence", one(skeleton_disabled)},
      {6, "degradation arithmetic", one(degradation_arithmetic)},
      {7, "pretraining smoke", one(pretraining_smoke)},
      {8, "cross-mask pattern", one(cross_mask_pattern)},
      {9, "mask-ratio U-shape", one(mask_ratio_pattern)},
      {10, "downstream pattern", downstream_pattern},
      {11, "file-format roundtrip", one(file_roundtrip)},
      {12, "parameter accounting", one(parameter_accounting)},
  };
  int fails = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = Clock::now();
    std::vector<Outcome> outs;
    try {
      outs = c.run();
    } catch (const std::exception& e) {
      outs = {{Status::fail, std::string("threw: ") + e.what()}};
    }
    const double secs = elapsed_ms(t0) / 1000.0;
    for (const auto& o : outs) {
      fails += o.status == Status::fail ? 1 : 0;
      std::printf("%s [%d] %s (%.1fs): %s\n", label(o.status), c.id, c.name.c_str(), secs, o.detail.c_str());
      std::fflush(stdout);
    }
  }
  return fails == 0 ? 0 : 1;
}
