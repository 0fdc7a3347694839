// Microbenchmarks for the hot paths of training and evaluation.

#include <benchmark/benchmark.h>

#include <vector>

#include "odgcnn/harness.hpp"
#include "odgcnn/ops.hpp"
#include "odgcnn/rng.hpp"

using namespace odgcnn;

namespace {

CostMatrix random_cost(std::size_t n, Rng& rng) {
  std::vector<double> v(n * n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return CostMatrix(n, std::move(v));
}

void BM_Hungarian(benchmark::State& state) {
  Rng rng(1);
  const CostMatrix cost = random_cost(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(hungarian(cost));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(8, 256)->Complexity();

void BM_RotatedIou(benchmark::State& state) {
  const RotatedBoxBEV a{0, 0, 2, 4.5, 0.3}, b{0.7, -0.4, 1.8, 4.0, -0.9};
  for (auto _ : state) benchmark::DoNotOptimize(rotated_iou_bev(a, b));
}
BENCHMARK(BM_RotatedIou);

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t kChannels = 32;
  Rng rng(2);
  std::vector<double> xv(side * side * kChannels), wv(9 * kChannels * kChannels);
  for (double& v : xv) v = rng.normal();
  for (double& v : wv) v = 0.05 * rng.normal();
  const Tensor x = Tensor::from({side * side, kChannels}, xv, true);
  const Tensor w = Tensor::from({9 * kChannels, kChannels}, wv, true);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    const Tensor y = ops::conv2d_3x3(x, side, side, w, 1);
    tape.backward(ops::sum_all(y));
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

// Default configuration on one sampled scene.
struct DefaultScene {
  RunConfig config;
  Model model;
  PillarBatch batch;
  PaddedTargets targets;

  DefaultScene() : model(config) {
    model.init(0);
    DataConfig data = config.data;
    data.train_scenes = 1;
    data.eval_scenes = 0;
    const Dataset ds = build_dataset(data);
    batch = model.prepare(ds.train[0]);
    targets = pad_targets(ds.train[0].boxes, config.dgcnn.num_queries, config.data.scene.num_classes());
  }
};

void BM_DetectDefault(benchmark::State& state) {
  const DefaultScene s;
  for (auto _ : state) benchmark::DoNotOptimize(s.model.detect(s.batch));
}
BENCHMARK(BM_DetectDefault)->Unit(benchmark::kMillisecond);

void BM_TrainStepDefault(benchmark::State& state) {
  const DefaultScene s;
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    const ObjectDgcnn::Output out = s.model.set_model().forward(s.batch, s.model.params());
    const Tensor loss = set_loss(s.targets, out.prediction, set_match(s.targets, out.prediction));
    tape.backward(loss);
  }
}
BENCHMARK(BM_TrainStepDefault)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
