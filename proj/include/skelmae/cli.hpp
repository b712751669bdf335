#pragma once

// `skelmae` command line: one stage per invocation, JSON run configs, and
// artifacts that record the config digest, seed and dataset digest.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "skelmae/checkpoint.hpp"
#include "skelmae/core.hpp"
#include "skelmae/dataset_io.hpp"
#include "skelmae/eval_harness.hpp"
#include "skelmae/graph_nets.hpp"
#include "skelmae/ssl_pretrain.hpp"
#include "skelmae/synthgen.hpp"
#include "skelmae/traj_predictor.hpp"

namespace skelmae::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kOutputRootEnv = "SKELMAE_OUTPUT_ROOT";

/// Usage and configuration problems exit 2, everything else 1.
inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument:
    case ErrorCode::missing_dependency:
    case ErrorCode::format_error: return 2;
    default: return 1;
  }
}

inline std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

// ---------------------------------------------------------------- run configuration

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::invalid_argument, "config not found: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format_error, "malformed config " + path + ": " + e.what());
  }
}

inline void write_json_file(const json& j, const std::string& path) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

struct WindowConfig {
  int obs = 9;
  int pred = 12;
  int stride = 3;
  int max_windows = 0;  // 0: all
};

struct EvalConfig {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<double> ratios = eval::default_robustness_ratios();
  MaskStrategy strategy = MaskStrategy::random;
  std::vector<std::string> methods;  // empty: every trained predictor found
};

struct SweepConfig {
  std::vector<double> r_train = {0.1, 0.5, 0.9};
  std::vector<double> r_test = ssl::default_ratio_grid();
  std::vector<int> depths = {1, 2, 3};
  std::vector<std::uint64_t> seeds = {1};
  int val_limit = 256;
  int jobs = 1;
};

/// Fully resolved settings: defaults, overlaid by a config file, overlaid by flags.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  int scenes = 50;
  synth::GenConfig gen;
  WindowConfig windows;
  gnn::EncoderConfig encoder;
  ssl::PretrainConfig pretrain;
  pred::PredictorConfig predictor;
  EvalConfig eval;
  SweepConfig sweep;

  json to_json() const {
    return {{"seed", seed},
            {"scenes", scenes},
            {"gen",
             {{"n_agents", gen.n_agents}, {"duration_s", gen.duration_s}, {"fps", gen.fps},
              {"behavior_mix", gen.behavior_mix}, {"turn_anticipation_frames", gen.turn_anticipation_frames},
              {"noise_std", gen.noise_std}, {"area_m", gen.area_m}, {"speed_range", gen.speed_range}}},
            {"windows", {{"obs", windows.obs}, {"pred", windows.pred}, {"stride", windows.stride},
                         {"max_windows", windows.max_windows}}},
            {"encoder", encoder.to_json()},
            {"pretrain", pretrain.to_json()},
            {"predictor", predictor.to_json()},
            {"eval", {{"seeds", eval.seeds}, {"ratios", eval.ratios}, {"strategy", to_string(eval.strategy)},
                      {"methods", eval.methods}}},
            {"sweep", {{"r_train", sweep.r_train}, {"r_test", sweep.r_test}, {"depths", sweep.depths},
                       {"seeds", sweep.seeds}, {"val_limit", sweep.val_limit}, {"jobs", sweep.jobs}}}};
  }

  std::string digest() const { return digest_of(to_json().dump()); }
};

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) {
    try {
      dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::format_error, std::string("config field ") + key + ": " + e.what());
    }
  }
}

inline void apply_config(RunConfig& c, const json& j) {
  take(j, "seed", c.seed);
  take(j, "output_dir", c.output_dir);
  take(j, "scenes", c.scenes);
  if (j.contains("gen")) {
    const auto& g = j.at("gen");
    take(g, "n_agents", c.gen.n_agents);
    take(g, "duration_s", c.gen.duration_s);
    take(g, "fps", c.gen.fps);
    take(g, "behavior_mix", c.gen.behavior_mix);
    take(g, "turn_anticipation_frames", c.gen.turn_anticipation_frames);
    take(g, "noise_std", c.gen.noise_std);
    take(g, "area_m", c.gen.area_m);
    take(g, "speed_range", c.gen.speed_range);
  }
  if (j.contains("windows")) {
    const auto& w = j.at("windows");
    take(w, "obs", c.windows.obs);
    take(w, "pred", c.windows.pred);
    take(w, "stride", c.windows.stride);
    take(w, "max_windows", c.windows.max_windows);
  }
  if (j.contains("encoder")) c.encoder = gnn::EncoderConfig::from_json(j.at("encoder"));
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    if (p.contains("strategy")) c.pretrain.strategy = parse_mask_strategy(p.at("strategy").get<std::string>());
    take(p, "r_train", c.pretrain.r_train);
    if (p.contains("loss_mode")) c.pretrain.loss_mode = ssl::parse_loss_mode(p.at("loss_mode").get<std::string>());
    take(p, "lr", c.pretrain.lr);
    take(p, "batch_size", c.pretrain.batch_size);
    take(p, "epochs", c.pretrain.epochs);
    take(p, "max_steps", c.pretrain.max_steps);
    take(p, "decoder_hidden", c.pretrain.decoder_hidden);
    take(p, "r_val", c.pretrain.r_val);
    take(p, "val_limit", c.pretrain.val_limit);
  }
  if (j.contains("predictor")) {
    json merged = c.predictor.to_json();
    merged.erase("ff_dim");
    merged.update(j.at("predictor"));
    c.predictor = pred::PredictorConfig::from_json(merged);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    take(e, "seeds", c.eval.seeds);
    take(e, "ratios", c.eval.ratios);
    if (e.contains("strategy")) c.eval.strategy = parse_mask_strategy(e.at("strategy").get<std::string>());
    take(e, "methods", c.eval.methods);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    take(s, "r_train", c.sweep.r_train);
    take(s, "r_test", c.sweep.r_test);
    take(s, "depths", c.sweep.depths);
    take(s, "seeds", c.sweep.seeds);
    take(s, "val_limit", c.sweep.val_limit);
    take(s, "jobs", c.sweep.jobs);
  }
}

// ---------------------------------------------------------------- artifact layout

struct Layout {
  fs::path root;
  fs::path data() const { return root / "data" / "scenes.jsonl"; }
  fs::path data_meta() const { return root / "data" / "scenes.meta.json"; }
  fs::path encoder() const { return root / "pretrain" / "encoder.ckpt.json"; }
  fs::path pretrain_curve() const { return root / "pretrain" / "curve.jsonl"; }
  fs::path predictor(const std::string& variant) const { return root / "train" / ("predictor_" + variant + ".ckpt.json"); }
  fs::path reports() const { return root / "reports"; }
  fs::path plots() const { return root / "plots"; }
};

struct Context {
  RunConfig cfg;
  Layout layout;
  std::ostream* out = &std::cout;
  std::string data_path;

  std::string provenance_digest() const { return cfg.digest(); }
};

inline json provenance(const Context& ctx, const std::string& dataset_digest) {
  return {{"config_digest", ctx.provenance_digest()}, {"seed", ctx.cfg.seed}, {"dataset_digest", dataset_digest}};
}

inline io::Dataset load_data(const Context& ctx) {
  require(fs::exists(ctx.data_path), ErrorCode::missing_dependency,
          "missing dependency: dataset " + ctx.data_path + " (run `skelmae gen` first)");
  return io::read_dataset(ctx.data_path);
}

inline std::vector<synth::WindowSample> windows_of(const Context& ctx, const io::Dataset& ds, synth::Split split) {
  auto w = pred::window_scenes(synth::filter_split(ds.scenes, split), ctx.cfg.windows.obs, ctx.cfg.windows.pred,
                               ctx.cfg.windows.stride, ctx.cfg.predictor.max_neighbors);
  if (ctx.cfg.windows.max_windows > 0 && static_cast<int>(w.size()) > ctx.cfg.windows.max_windows)
    w.resize(static_cast<std::size_t>(ctx.cfg.windows.max_windows));
  return w;
}

inline std::vector<SkeletonSequence> sequences_of(const Context& ctx, const io::Dataset& ds, synth::Split split) {
  return ssl::skeleton_windows(synth::filter_split(ds.scenes, split), ctx.cfg.windows.obs, ctx.cfg.windows.stride,
                               ctx.cfg.predictor.rotate);
}

inline Checkpoint load_dependency(const fs::path& p, const std::string& what) {
  require(fs::exists(p), ErrorCode::missing_dependency, "missing dependency: " + what + " " + p.string());
  return load_checkpoint(p.string());
}

// ---------------------------------------------------------------- stages

inline void stage_gen(Context& ctx) {
  const auto scenes = synth::generate_dataset(ctx.cfg.gen, ctx.cfg.scenes, ctx.cfg.seed);
  fs::create_directories(fs::path(ctx.data_path).parent_path());
  io::write_dataset(scenes, ctx.data_path, default_walker_graph(), ctx.cfg.gen.fps);
  const std::string digest = io::dataset_digest(scenes);
  json meta = provenance(ctx, digest);
  meta["scenes"] = scenes.size();
  write_json_file(meta, (fs::path(ctx.data_path).parent_path() / "scenes.meta.json").string());
  *ctx.out << "dataset_digest " << digest << "\n";
}

inline ssl::PretrainResult run_pretrain(const Context& ctx, const io::Dataset& ds, gnn::EncoderConfig enc,
                                        ssl::PretrainConfig pc, std::uint64_t seed,
                                        const ssl::CurveSink& sink = {}) {
  const auto train = sequences_of(ctx, ds, synth::Split::train);
  const auto val = sequences_of(ctx, ds, synth::Split::val);
  auto r = ssl::pretrain(train, val, ds.graph, enc, pc, seed, sink);
  r.checkpoint.dataset_digest = io::dataset_digest(ds.scenes);
  r.checkpoint.config["rotate"] = ctx.cfg.predictor.rotate;
  r.checkpoint.config["config_digest"] = ctx.provenance_digest();
  return r;
}

inline void stage_pretrain(Context& ctx, const std::string& out_path) {
  const auto ds = load_data(ctx);
  gnn::EncoderConfig enc = ctx.cfg.encoder;
  enc.feature_dim = ctx.cfg.predictor.dim;
  fs::create_directories(ctx.layout.pretrain_curve().parent_path());
  std::ofstream curve(ctx.layout.pretrain_curve(), std::ios::trunc);
  const auto r = run_pretrain(ctx, ds, enc, ctx.cfg.pretrain, ctx.cfg.seed,
                              [&](const ssl::CurveRecord& rec) { curve << rec.to_json().dump() << '\n'; });
  save_checkpoint(r.checkpoint, out_path);
  *ctx.out << "checkpoint " << out_path << " final_loss " << r.step_losses.back() << "\n";
}

inline void stage_train(Context& ctx, const std::string& encoder_path) {
  const pred::Variant v = ctx.cfg.predictor.variant;
  const std::string out_path = ctx.layout.predictor(to_string(v)).string();
  fs::create_directories(fs::path(out_path).parent_path());
  if (pred::uses_frontend(v)) {
    // weights are reused unchanged; only the completion model is attached
    const pred::Variant src = pred::weight_source(v);
    const Checkpoint base = load_dependency(ctx.layout.predictor(to_string(src)), std::string(to_string(src)) + " predictor checkpoint");
    load_dependency(encoder_path, "pretrained autoencoder checkpoint");
    Checkpoint c = pred::as_frontend_variant(base, v);
    c.config["frontend_checkpoint"] = fs::absolute(encoder_path).string();
    save_checkpoint(c, out_path);
    *ctx.out << "checkpoint " << out_path << "\n";
    return;
  }
  std::optional<Checkpoint> enc;
  if (pred::uses_pretrained_encoder(v))
    enc = load_dependency(encoder_path, "pretrained encoder checkpoint");
  const auto ds = load_data(ctx);
  if (enc) {
    require(enc->dataset_digest.empty() || enc->dataset_digest == io::dataset_digest(ds.scenes),
            ErrorCode::invalid_argument, "pretrained encoder was trained on a different dataset");
    require(enc->config.value("rotate", ctx.cfg.predictor.rotate) == ctx.cfg.predictor.rotate,
            ErrorCode::invalid_argument, "pretrained encoder used a different input normalization");
  }
  pred::PredictorConfig pc = ctx.cfg.predictor;
  pc.encoder = ctx.cfg.encoder;
  pc.encoder.feature_dim = pc.dim;
  const auto train = windows_of(ctx, ds, synth::Split::train);
  const auto val = windows_of(ctx, ds, synth::Split::val);
  std::ofstream curve(fs::path(out_path).replace_extension(".curve.jsonl"), std::ios::trunc);
  auto r = pred::train_predictor(train, val, ds.graph, pc, ctx.cfg.seed, enc ? &*enc : nullptr,
                                 [&](const pred::TrainRecord& rec) { curve << rec.to_json().dump() << '\n'; });
  r.checkpoint.dataset_digest = io::dataset_digest(ds.scenes);
  r.checkpoint.config["config_digest"] = ctx.provenance_digest();
  save_checkpoint(r.checkpoint, out_path);
  *ctx.out << "checkpoint " << out_path << " final_loss " << r.step_losses.back() << "\n";
}

struct LoadedMethod {
  std::string name;
  Checkpoint ckpt;
  std::unique_ptr<pred::TrajPredictor> model;
};

inline std::vector<LoadedMethod> load_methods(const Context& ctx, const SkeletonGraph& graph,
                                              const std::string& dataset_digest) {
  std::vector<std::string> names = ctx.cfg.eval.methods;
  if (names.empty())
    for (auto v : pred::kVariants)
      if (fs::exists(ctx.layout.predictor(to_string(v)))) names.push_back(to_string(v));
  require(!names.empty(), ErrorCode::missing_dependency,
          "missing dependency: no predictor checkpoints under " + (ctx.layout.root / "train").string());
  std::vector<LoadedMethod> out;
  for (const auto& n : names) {
    LoadedMethod m;
    m.name = n;
    m.ckpt = load_dependency(ctx.layout.predictor(n), n + " predictor checkpoint");
    require(m.ckpt.dataset_digest == dataset_digest, ErrorCode::invalid_argument,
            "predictor " + n + " was trained on a different dataset");
    std::optional<Checkpoint> recon;
    if (m.ckpt.config.contains("frontend_checkpoint"))
      recon = load_dependency(m.ckpt.config.at("frontend_checkpoint").get<std::string>(), "pretrained autoencoder checkpoint");
    m.model = std::make_unique<pred::TrajPredictor>(pred::load_predictor(m.ckpt, graph, recon ? &*recon : nullptr));
    out.push_back(std::move(m));
  }
  return out;
}

inline void stage_eval(Context& ctx) {
  const auto ds = load_data(ctx);
  const std::string digest = io::dataset_digest(ds.scenes);
  const auto methods = load_methods(ctx, ds.graph, digest);
  const auto test = windows_of(ctx, ds, synth::Split::test);
  std::vector<eval::Method> ms;
  for (const auto& m : methods) ms.push_back({m.name, m.model.get()});
  auto rob = eval::robustness_eval(ms, test, ds.graph, ctx.cfg.eval.strategy, ctx.cfg.eval.ratios, ctx.cfg.eval.seeds);
  rob.dataset_digest = digest;
  for (const auto& m : methods) rob.config_digests[m.name] = m.ckpt.config_digest();
  const auto rel = eval::reliance_probe(ms, test);

  std::vector<eval::ParamEntry> params;
  for (const auto& m : methods) {
    gnn::ParamReport pr = gnn::count_params(m.model->params());
    const auto p = m.model->prepare(test.front());
    pr.latency_ms_per_sample = gnn::measure_latency([&] { m.model->forward({&p}, false); }, 1, 5);
    params.push_back({m.name, pr});
  }
  json pj = json::array();
  for (const auto& p : params) {
    json mods = json::array();
    for (const auto& [k, n] : p.report.per_module) mods.push_back({k, n});
    pj.push_back({{"model", p.model}, {"modules", mods}, {"total", p.report.total},
                  {"latency_ms", p.report.latency_ms_per_sample}});
  }
  std::vector<eval::OverlayTrack> overlays;
  for (std::size_t i = 0; i < std::min<std::size_t>(test.size(), 4); ++i)
    for (const auto& m : methods)
      overlays.push_back({test[i].scene_id + "/" + test[i].agent_id + "@" + std::to_string(test[i].start_frame), m.name,
                          test[i].observed_traj, test[i].future_traj, m.model->predict(test[i])});
  json oj = json::array();
  for (const auto& o : overlays)
    oj.push_back({{"window", o.window}, {"method", o.method}, {"observed", o.observed}, {"truth", o.truth},
                  {"predicted", o.predicted}});

  const json prov = provenance(ctx, digest);
  json rj = eval::to_json(rob);
  rj["provenance"] = prov;
  json lj = eval::to_json(rel);
  lj["provenance"] = prov;
  write_json_file(rj, (ctx.layout.reports() / "robustness.json").string());
  write_json_file(lj, (ctx.layout.reports() / "reliance.json").string());
  write_json_file({{"kind", "params"}, {"rows", pj}, {"provenance", prov}}, (ctx.layout.reports() / "params.json").string());
  write_json_file({{"kind", "overlay"}, {"rows", oj}, {"provenance", prov}}, (ctx.layout.reports() / "overlay.json").string());
  *ctx.out << eval::render_text(eval::robustness_table(rob)) << eval::render_text(eval::reliance_table(rel));
}

/// Runs fn(i) for i in [0, n) on at most `jobs` concurrent workers.
template <class F>
void bounded_for(std::size_t n, int jobs, F fn) {
  const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
  for (std::size_t b0 = 0; b0 < n; b0 += width) {
    std::vector<std::future<void>> running;
    for (std::size_t i = b0; i < std::min(n, b0 + width); ++i) running.push_back(std::async(std::launch::async, fn, i));
    for (auto& f : running) f.get();
  }
}

inline void stage_sweep(Context& ctx, const std::string& kind) {
  const auto ds = load_data(ctx);
  const std::string digest = io::dataset_digest(ds.scenes);
  const auto val = sequences_of(ctx, ds, synth::Split::val);
  gnn::EncoderConfig enc = ctx.cfg.encoder;
  enc.feature_dim = ctx.cfg.predictor.dim;
  const auto& sw = ctx.cfg.sweep;
  json result;
  if (kind == "ratio") {
    std::vector<std::unique_ptr<ssl::ReconModel>> models(sw.r_train.size());
    bounded_for(sw.r_train.size(), sw.jobs, [&](std::size_t i) {
      ssl::PretrainConfig pc = ctx.cfg.pretrain;
      pc.r_train = sw.r_train[i];
      pc.r_val.clear();
      const auto r = run_pretrain(ctx, ds, enc, pc, ctx.cfg.seed);
      models[i] = std::make_unique<ssl::ReconModel>(ssl::ReconModel::from_checkpoint(r.checkpoint, ds.graph));
    });
    std::vector<const ssl::ReconModel*> ptrs;
    for (const auto& m : models) ptrs.push_back(m.get());
    const auto s = eval::mask_ratio_sweep(ptrs, sw.r_train, sw.r_test, ctx.cfg.pretrain.strategy, sw.seeds, val,
                                          sw.val_limit);
    result = eval::to_json(s);
    *ctx.out << eval::render_text(eval::sweep_table(s));
  } else if (kind == "cross") {
    const std::vector<MaskStrategy> strategies = {MaskStrategy::random, MaskStrategy::temporally_consistent,
                                                  MaskStrategy::body_part};
    std::vector<std::unique_ptr<ssl::ReconModel>> models(strategies.size());
    bounded_for(strategies.size(), sw.jobs, [&](std::size_t i) {
      ssl::PretrainConfig pc = ctx.cfg.pretrain;
      pc.strategy = strategies[i];
      pc.r_val.clear();
      const auto r = run_pretrain(ctx, ds, enc, pc, ctx.cfg.seed);
      models[i] = std::make_unique<ssl::ReconModel>(ssl::ReconModel::from_checkpoint(r.checkpoint, ds.graph));
    });
    std::vector<const ssl::ReconModel*> ptrs;
    for (const auto& m : models) ptrs.push_back(m.get());
    const auto c = eval::cross_mask_eval(ptrs, strategies, 0.5, sw.seeds, val, sw.val_limit);
    result = eval::to_json(c);
    *ctx.out << eval::render_text(eval::cross_table(c));
  } else if (kind == "depth") {
    std::vector<double> avg(sw.depths.size()), cos(sw.depths.size());
    bounded_for(sw.depths.size(), sw.jobs, [&](std::size_t i) {
      gnn::EncoderConfig e = enc;
      e.depth = sw.depths[i];
      ssl::PretrainConfig pc = ctx.cfg.pretrain;
      pc.r_val.clear();
      const auto r = run_pretrain(ctx, ds, e, pc, ctx.cfg.seed);
      const auto m = ssl::ReconModel::from_checkpoint(r.checkpoint, ds.graph);
      double a = 0.0, c = 0.0;
      for (double rt : sw.r_test)
        for (auto s : sw.seeds) {
          a += ssl::evaluate_mpjpe(m, val, MaskStrategy::random, rt, s, sw.val_limit);
          c += eval::mean_consistency(m, val, MaskStrategy::random, rt, s, sw.val_limit);
        }
      const double n = static_cast<double>(sw.r_test.size() * sw.seeds.size());
      avg[i] = a / n;
      cos[i] = c / n;
    });
    result = {{"kind", "depth_sweep"}, {"depths", sw.depths}, {"mpjpe_avg", avg}, {"cos_avg", cos}};
    for (std::size_t i = 0; i < sw.depths.size(); ++i)
      *ctx.out << "depth " << sw.depths[i] << " mpjpe " << eval::fixed(avg[i], 3) << " cos " << eval::fixed(cos[i], 3) << "\n";
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown sweep kind: " + kind + " (expected ratio, cross or depth)");
  }
  result["provenance"] = provenance(ctx, digest);
  write_json_file(result, (ctx.layout.reports() / ("sweep_" + kind + ".json")).string());
}

inline eval::Table depth_table(const json& j) {
  eval::Table t{"depth_sweep", {"depth", "avg_mpjpe", "avg_cos"}, {}, {}, {1}};
  const auto d = j.at("depths").get<std::vector<int>>();
  const auto a = j.at("mpjpe_avg").get<std::vector<double>>();
  const auto c = j.at("cos_avg").get<std::vector<double>>();
  for (std::size_t i = 0; i < d.size(); ++i)
    t.rows.push_back({std::to_string(d[i]), eval::fixed(a[i], 3), eval::fixed(c[i], 3)});
  return t;
}

inline std::vector<eval::ParamEntry> params_from_json(const json& j) {
  std::vector<eval::ParamEntry> out;
  for (const auto& row : j.at("rows")) {
    eval::ParamEntry e;
    e.model = row.at("model").get<std::string>();
    for (const auto& m : row.at("modules")) e.report.per_module.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::size_t>());
    e.report.total = row.at("total").get<std::size_t>();
    e.report.latency_ms_per_sample = row.at("latency_ms").get<double>();
    out.push_back(std::move(e));
  }
  return out;
}

/// Loads every report artifact, refusing to mix datasets.
inline std::map<std::string, json> gather_reports(const Context& ctx) {
  std::map<std::string, json> found;
  const fs::path dir = ctx.layout.reports();
  require(fs::exists(dir), ErrorCode::missing_dependency,
          "missing dependency: report directory " + dir.string() + " (run `skelmae eval` or `skelmae sweep`)");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string digest;
  for (const auto& f : files) {
    json j = read_json_file(f.string());
    if (!j.contains("kind") || !j.contains("provenance")) continue;
    const std::string d = j.at("provenance").value("dataset_digest", "");
    require(digest.empty() || d == digest, ErrorCode::invalid_argument,
            "refusing to merge reports with mismatched dataset digests: " + f.filename().string());
    digest = d;
    found[f.stem().string()] = std::move(j);
  }
  require(!found.empty(), ErrorCode::missing_dependency, "missing dependency: no report artifacts in " + dir.string());
  return found;
}

inline std::vector<eval::Table> report_tables(const std::map<std::string, json>& reports) {
  std::vector<eval::Table> tables;
  for (const auto& [name, j] : reports) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "robustness") tables.push_back(eval::robustness_table(eval::eval_report_from_json(j)));
    else if (kind == "reliance") tables.push_back(eval::reliance_table(eval::reliance_from_json(j)));
    else if (kind == "mask_ratio_sweep") tables.push_back(eval::sweep_table(eval::sweep_from_json(j)));
    else if (kind == "cross_mask_eval") tables.push_back(eval::cross_table(eval::cross_from_json(j)));
    else if (kind == "depth_sweep") tables.push_back(depth_table(j));
    else if (kind == "params") tables.push_back(eval::params_table(params_from_json(j)));
  }
  return tables;
}

inline void stage_report(Context& ctx) {
  const auto reports = gather_reports(ctx);
  const auto tables = report_tables(reports);
  const auto txt = eval::emit_report(tables, eval::Format::text, ctx.layout.reports().string());
  const auto csv = eval::emit_report(tables, eval::Format::csv, ctx.layout.reports().string());
  for (const auto& t : tables) *ctx.out << eval::render_text(t) << '\n';
  *ctx.out << "wrote " << txt.size() + csv.size() << " report files\n";
}

inline void stage_plot(Context& ctx) {
  const auto reports = gather_reports(ctx);
  std::vector<eval::Table> tables;
  for (const auto& [name, j] : reports) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "mask_ratio_sweep") {
      const auto s = eval::sweep_from_json(j);
      tables.push_back(eval::sweep_line_table(s));
      tables.push_back(eval::heatmap_table(s));
    } else if (kind == "robustness") {
      const auto r = eval::eval_report_from_json(j);
      eval::Table t{"robustness_curve", {"method", "r_test", "ade", "fde"}, {}, {}, {}};
      for (const auto& row : r.rows) t.rows.push_back({row.method, eval::r2(row.r_test), eval::fixed(row.ade, 6), eval::fixed(row.fde, 6)});
      tables.push_back(std::move(t));
    } else if (kind == "overlay") {
      std::vector<eval::OverlayTrack> tracks;
      for (const auto& o : j.at("rows"))
        tracks.push_back({o.at("window").get<std::string>(), o.at("method").get<std::string>(),
                          o.at("observed").get<std::vector<double>>(), o.at("truth").get<std::vector<double>>(),
                          o.at("predicted").get<std::vector<double>>()});
      tables.push_back(eval::overlay_table(tracks));
    } else if (kind == "params") {
      tables.push_back(eval::params_table(params_from_json(j)));
    }
  }
  const auto paths = eval::emit_report(tables, eval::Format::plot, ctx.layout.plots().string());
  for (const auto& p : paths) *ctx.out << "plot data " << p << "\n";
}

// ---------------------------------------------------------------- entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"skelmae: masked skeleton pretraining and trajectory prediction pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();  // global options may follow the subcommand
  std::string config_path, output_dir, data_path;
  std::optional<std::uint64_t> seed;
  app.add_option("-c,--config", config_path, "JSON run config");
  app.add_option("-o,--output-dir", output_dir, std::string("output root (overrides ") + kOutputRootEnv + ")");
  app.add_option("--seed", seed, "run seed");
  app.add_option("--data", data_path, "dataset file (default <output>/data/scenes.jsonl)");

  auto* gen = app.add_subcommand("gen", "generate a synthetic scene dataset");
  std::optional<int> scenes;
  gen->add_option("--scenes", scenes, "number of scenes");

  auto* pre = app.add_subcommand("pretrain", "masked-reconstruction pretraining of the skeleton encoder");
  std::optional<std::string> strategy, loss_mode;
  std::optional<double> ratio;
  std::optional<int> depth, epochs;
  std::string ckpt_out;
  pre->add_option("--strategy", strategy, "random | temporally_consistent | body_part");
  pre->add_option("--ratio", ratio, "training mask ratio");
  pre->add_option("--loss-mode", loss_mode, "all_joint | masked_only");
  pre->add_option("--depth", depth, "encoder depth");
  pre->add_option("--epochs", epochs, "training epochs");
  pre->add_option("--checkpoint", ckpt_out, "output checkpoint path");

  auto* train = app.add_subcommand("train", "train a trajectory predictor variant");
  std::optional<std::string> variant;
  std::string encoder_path;
  std::optional<int> train_epochs;
  bool pose_blind = false;
  train->add_option("--variant", variant, "standard | corruption_trained | stgcn_scratch | ours | ours_plus_recon | recon_frontend");
  train->add_option("--encoder", encoder_path, "pretrained encoder checkpoint");
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_flag("--pose-blind", pose_blind, "train with pose tokens zeroed");

  auto* ev = app.add_subcommand("eval", "robustness and skeleton-reliance evaluation");
  std::vector<std::string> methods;
  ev->add_option("--methods", methods, "predictor variants to evaluate (default: all trained)")->delimiter(',');

  auto* sweep = app.add_subcommand("sweep", "reconstruction sweeps over mask ratio, mask strategy or encoder depth");
  std::string sweep_kind = "ratio";
  std::optional<int> jobs;
  sweep->add_option("--kind", sweep_kind, "ratio | cross | depth");
  sweep->add_option("--jobs", jobs, "concurrent grid cells");

  auto* report = app.add_subcommand("report", "render text and delimited report tables");
  auto* plot = app.add_subcommand("plot", "emit plot-data files");

  std::string stage = "cli";
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error code=usage stage=cli message=\"" << one_line(e.what()) << "\"\n";
      return 2;
    }
    Context ctx;
    ctx.out = &out;
    stage = app.get_subcommands().front()->get_name();
    if (!config_path.empty()) apply_config(ctx.cfg, read_json_file(config_path));
    if (const char* env = std::getenv(kOutputRootEnv); env && *env) ctx.cfg.output_dir = env;
    if (!output_dir.empty()) ctx.cfg.output_dir = output_dir;
    if (seed) ctx.cfg.seed = *seed;
    if (scenes) ctx.cfg.scenes = *scenes;
    if (strategy) ctx.cfg.pretrain.strategy = parse_mask_strategy(*strategy);
    if (ratio) ctx.cfg.pretrain.r_train = *ratio;
    if (loss_mode) ctx.cfg.pretrain.loss_mode = ssl::parse_loss_mode(*loss_mode);
    if (depth) ctx.cfg.encoder.depth = *depth;
    if (epochs) ctx.cfg.pretrain.epochs = *epochs;
    if (variant) ctx.cfg.predictor.variant = pred::parse_variant(*variant);
    if (train_epochs) ctx.cfg.predictor.epochs = *train_epochs;
    if (pose_blind) ctx.cfg.predictor.pose_blind = true;
    if (!methods.empty()) ctx.cfg.eval.methods = methods;
    if (jobs) ctx.cfg.sweep.jobs = *jobs;
    ctx.layout.root = ctx.cfg.output_dir;
    ctx.data_path = data_path.empty() ? ctx.layout.data().string() : data_path;

    if (gen->parsed()) stage_gen(ctx);
    else if (pre->parsed()) stage_pretrain(ctx, ckpt_out.empty() ? ctx.layout.encoder().string() : ckpt_out);
    else if (train->parsed()) stage_train(ctx, encoder_path.empty() ? ctx.layout.encoder().string() : encoder_path);
    else if (ev->parsed()) stage_eval(ctx);
    else if (sweep->parsed()) stage_sweep(ctx, sweep_kind);
    else if (report->parsed()) stage_report(ctx);
    else if (plot->parsed()) stage_plot(ctx);
    return 0;
  } catch (const Error& e) {
    err << "error code=" << to_string(e.code()) << " stage=" << stage << " message=\"" << one_line(e.what()) << "\"\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error code=runtime stage=" << stage << " message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
}

}  // namespace skelmae::cli
