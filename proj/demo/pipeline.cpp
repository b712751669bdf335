// End-to-end run through the library API: generate scenes, pretrain the
// skeleton encoder, train three predictor variants, and print the robustness
// and reliance tables.
//
//   demo_pipeline [scenes] [epochs]

#include <cstdio>
#include <cstdlib>
#include <memory>

#include "skelmae/dataset_io.hpp"
#include "skelmae/eval_harness.hpp"

using namespace skelmae;

int main(int argc, char** argv) {
  const int n_scenes = argc > 1 ? std::atoi(argv[1]) : 20;
  const int epochs = argc > 2 ? std::atoi(argv[2]) : 2;
  const auto& graph = default_walker_graph();

  synth::GenConfig gen;
  gen.n_agents = 3;
  const auto scenes = synth::generate_dataset(gen, n_scenes, 1);
  const auto train_scenes = synth::filter_split(scenes, synth::Split::train);
  const auto train = pred::window_scenes(train_scenes, 9, 12, 3);
  const auto test = pred::window_scenes(synth::filter_split(scenes, synth::Split::test), 9, 12, 3);
  std::printf("%d scenes, %zu train / %zu test windows, dataset %s\n", n_scenes, train.size(), test.size(),
              io::dataset_digest(scenes).c_str());
  if (test.empty()) {
    std::fprintf(stderr, "no test windows; use more scenes\n");
    return 1;
  }

  ssl::PretrainConfig pc;
  pc.lr = 1e-3;
  pc.batch_size = 32;
  pc.epochs = epochs;
  pc.r_val.clear();
  const gnn::EncoderConfig enc{2, 32, 3, 3};
  const auto pre = ssl::pretrain(ssl::skeleton_windows(train_scenes, 9, 3), {}, graph, enc, pc, 1);
  std::printf("pretrain: %zu steps, loss %.4f -> %.4f\n", pre.step_losses.size(), pre.step_losses.front(),
              pre.step_losses.back());

  std::vector<std::unique_ptr<pred::TrajPredictor>> models;
  std::vector<eval::Method> methods;
  for (auto v : {pred::Variant::standard, pred::Variant::stgcn_scratch, pred::Variant::ours}) {
    pred::PredictorConfig c;
    c.variant = v;
    c.dim = 32;
    c.cmt_layers = 2;
    c.cmt_heads = 2;
    c.social_layers = 1;
    c.social_heads = 2;
    c.ff_dim = 64;
    c.lr = 5e-4;
    c.batch_size = 16;
    c.epochs = epochs;
    c.encoder = enc;
    const auto r = pred::train_predictor(train, {}, graph, c, 1, &pre.checkpoint);
    std::printf("train %s: %zu steps, final loss %.4f\n", to_string(v), r.step_losses.size(), r.step_losses.back());
    models.push_back(std::make_unique<pred::TrajPredictor>(pred::load_predictor(r.checkpoint, graph)));
    methods.push_back({to_string(v), models.back().get()});
  }

  std::printf("\n%s\n", eval::render_text(eval::robustness_table(eval::robustness_eval(methods, test, graph))).c_str());
  std::printf("%s", eval::render_text(eval::reliance_table(eval::reliance_probe(methods, test))).c_str());
  return 0;
}
