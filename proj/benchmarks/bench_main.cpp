// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "ief/data.hpp"
#include "ief/evaluation.hpp"
#include "ief/inference.hpp"
#include "ief/model.hpp"
#include "ief/pose.hpp"
#include "ief/predictor.hpp"
#include "ief/rendering.hpp"
#include "ief/training.hpp"

namespace {

using namespace ief;

const Skeleton& skel() { return stick_figure_skeleton(); }

std::vector<Example> desk_examples(std::size_t figures) {
  PrepareConfig pc;
  pc.boxes = 1;
  pc.mirror = false;
  return prepare_examples(generate_examples(7, 0, figures, GeneratorConfig{}), skel(), pc);
}

Model random_model(const std::vector<Example>& examples) {
  Model m;
  m.layout = KeypointLayout::standard(skel());
  m.sigma = default_sigma(64, 64);
  std::vector<Pose> poses;
  for (const Example& e : examples) poses.push_back(e.pose);
  m.init = median_pose(poses, skel().names);
  Rng rng(1);
  m.params = init_params<float>(net_spec_for(m.layout, 64, 64, 1), rng);
  return m;
}

void BM_BoundedCorrection(benchmark::State& state) {
  Rng rng(3);
  std::vector<Vec2> a(7), b(7);
  for (int k = 0; k < 7; ++k) {
    a[k] = {rng.uniform(0, 64), rng.uniform(0, 64)};
    b[k] = {rng.uniform(0, 64), rng.uniform(0, 64)};
  }
  const Pose target = Pose::annotated(a), current = Pose::annotated(b);
  const std::vector<bool> mask(7, true);
  for (auto _ : state) benchmark::DoNotOptimize(bounded_correction(target, current, 6.0, mask));
}
BENCHMARK(BM_BoundedCorrection);

void BM_RenderPose(benchmark::State& state) {
  const int side = int(state.range(0));
  Rng rng(4);
  std::vector<Vec2> p(7);
  for (Vec2& v : p) v = {rng.uniform(0, side), rng.uniform(0, side)};
  const Pose pose = Pose::annotated(p);
  const double sigma = default_sigma(side, side);
  for (auto _ : state) benchmark::DoNotOptimize(render_pose(pose, side, side, sigma));
}
BENCHMARK(BM_RenderPose)->Arg(32)->Arg(64)->Arg(128);

void BM_Forward(benchmark::State& state) {
  const auto examples = desk_examples(16);
  const Model m = random_model(examples);
  std::vector<AugmentedInput> inputs;
  for (std::size_t i = 0; i < std::size_t(state.range(0)); ++i) {
    inputs.push_back(model_input(m, examples[i].image, m.init));
  }
  ForwardCache<float> cache;
  for (auto _ : state) {
    forward_batch<float>(m.params, inputs, cache);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ForwardBackwardUpdate(benchmark::State& state) {
  const auto examples = desk_examples(16);
  Model m = random_model(examples);
  std::vector<AugmentedInput> inputs;
  for (const Example& e : examples) inputs.push_back(model_input(m, e.image, m.init));
  ForwardCache<float> cache;
  const std::vector<float> output_grad(std::size_t(m.params.spec.outputs) * inputs.size(), 1e-3f);
  for (auto _ : state) {
    forward_batch<float>(m.params, inputs, cache);
    const auto grads = backward<float>(m.params, cache, output_grad);
    sgd_update(m.params, grads, 0.0, 0.9);
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(inputs.size()));
}
BENCHMARK(BM_ForwardBackwardUpdate)->Unit(benchmark::kMillisecond);

void BM_InferThreeSteps(benchmark::State& state) {
  const auto examples = desk_examples(8);
  const Model m = random_model(examples);
  for (auto _ : state) benchmark::DoNotOptimize(batch_infer(examples, m));
  state.SetItemsProcessed(state.iterations() * std::int64_t(examples.size()));
}
BENCHMARK(BM_InferThreeSteps)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  const auto examples = desk_examples(200);
  std::vector<Trajectory> t;
  for (const Example& e : examples) t.push_back({e.id, {e.pose, e.pose, e.pose, e.pose}, {}});
  const std::vector<int> keypoints{0, 1, 3, 4, 5, 6};
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(t, examples, skel(), keypoints));
}
BENCHMARK(BM_Evaluate);

void BM_GenerateFigure(benchmark::State& state) {
  std::uint64_t id = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_examples(7, id++, 1, GeneratorConfig{}));
}
BENCHMARK(BM_GenerateFigure);

}  // namespace

BENCHMARK_MAIN();
