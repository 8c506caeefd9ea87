#include <benchmark/benchmark.h>

#include "ildet/data.hpp"
#include "ildet/eval.hpp"
#include "ildet/model.hpp"
#include "ildet/rng.hpp"
#include "ildet/sampling.hpp"

using namespace ildet;

namespace {

WorldSpec bench_world() {
  WorldSpec w;
  w.seed = 7;
  return w;
}

DetectorModel bench_model() {
  ClassSet cs;
  cs.old_classes = {1, 2, 3, 4};
  return DetectorModel(bench_world().input_dim(), {64, 64}, cs, 11);
}

void BM_SceneGeneration(benchmark::State& state) {
  const WorldSpec w = bench_world();
  int id = 0;
  for (auto _ : state) {
    Scene s = generate_scene(w, id++);
    benchmark::DoNotOptimize(s.proposals.data());
  }
}
BENCHMARK(BM_SceneGeneration);

void BM_ForwardRois(benchmark::State& state) {
  const WorldSpec w = bench_world();
  DetectorModel model = bench_model();
  Scene s = generate_scene(w, 0);
  Tensor feats = gather_features(s);
  for (auto _ : state) {
    auto out = model.forward_rois(feats);
    benchmark::DoNotOptimize(out.first.data.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(feats.rows()));
}
BENCHMARK(BM_ForwardRois);

void BM_PredictDetections(benchmark::State& state) {
  const WorldSpec w = bench_world();
  DetectorModel model = bench_model();
  Scene s = generate_scene(w, 0);
  for (auto _ : state) {
    auto d = predict_detections(model, s, 0.05, 0.3);
    benchmark::DoNotOptimize(d.data());
  }
}
BENCHMARK(BM_PredictDetections);

void BM_Nms(benchmark::State& state) {
  Rng rng(3);
  const int n = static_cast<int>(state.range(0));
  std::vector<Box> boxes;
  std::vector<double> scores;
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(0.0, 0.8), y = rng.uniform(0.0, 0.8);
    boxes.push_back({x, y, x + rng.uniform(0.05, 0.2), y + rng.uniform(0.05, 0.2)});
    scores.push_back(rng.uniform());
  }
  for (auto _ : state) {
    auto keep = nms(boxes, scores, 0.3);
    benchmark::DoNotOptimize(keep.data());
  }
}
BENCHMARK(BM_Nms)->Arg(200)->Arg(1000);

void BM_AveragePrecision(benchmark::State& state) {
  Rng rng(5);
  std::map<int, std::vector<Box>> gt;
  std::vector<Detection> dets;
  for (int scene = 0; scene < 100; ++scene) {
    for (int g = 0; g < 3; ++g) {
      const double x = rng.uniform(0.0, 0.7), y = rng.uniform(0.0, 0.7);
      Box b{x, y, x + 0.2, y + 0.2};
      gt[scene].push_back(b);
      Detection d;
      d.scene_id = scene;
      d.class_id = 1;
      d.box = {b.x_min + rng.uniform(-0.05, 0.05), b.y_min,
               b.x_max + rng.uniform(-0.05, 0.05), b.y_max};
      d.score = rng.uniform();
      dets.push_back(d);
    }
  }
  for (auto _ : state) {
    double ap = average_precision(dets, gt, 0.5);
    benchmark::DoNotOptimize(ap);
  }
}
BENCHMARK(BM_AveragePrecision);

void BM_ComposeBatch(benchmark::State& state) {
  const WorldSpec w = bench_world();
  Scene a = generate_scene(w, 0), b = generate_scene(w, 1);
  std::vector<const Scene*> scenes{&a, &b};
  std::vector<int> eligible{1, 2, 3, 4};
  std::uint64_t i = 0;
  for (auto _ : state) {
    auto batch = compose_training_batch(scenes, eligible, Rng(i++));
    benchmark::DoNotOptimize(batch.images.data());
  }
}
BENCHMARK(BM_ComposeBatch);

}  // namespace

BENCHMARK_MAIN();
