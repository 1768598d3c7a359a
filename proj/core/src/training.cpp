// SPDX-License-Identifier: Apache-2.0

#include "ief/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "ief/errors.hpp"
#include "ief/io.hpp"

namespace ief {

namespace {

struct Item {
  std::uint32_t example;
  std::uint32_t step;
};

struct Plan {
  double bound;
  int steps;
  bool joint;
  std::uint64_t budget;  // 0: no limit
};

Model make_model(const Dataset& dataset, const TrainConfig& config) {
  const Skeleton& skel = dataset.manifest.skeleton;
  Model m;
  m.layout = config.keypoint_subset.empty() ? KeypointLayout::standard(skel)
                                            : KeypointLayout::subset(skel, config.keypoint_subset);
  m.sigma = config.sigma > 0.0 ? config.sigma
                               : default_sigma(dataset.manifest.width, dataset.manifest.height);
  m.init = training_mean_pose(dataset);
  const NetSpec spec = net_spec_for(m.layout, dataset.manifest.width, dataset.manifest.height,
                                    dataset.manifest.channels);
  Rng init_rng = Rng::derive(config.seed, 1);
  m.params = init_params<float>(spec, init_rng, config.heatmap_std);
  return m;
}

TrainResult run(const Dataset& dataset, const TrainConfig& config, const Plan& plan,
                const StageCallback& on_stage) {
  config.validate();
  if (dataset.examples.empty()) throw ValidationError("training needs a non-empty dataset");

  TrainResult result;
  result.model = make_model(dataset, config);
  Model& model = result.model;

  std::vector<PathExample> paths;
  paths.reserve(dataset.examples.size());
  for (const Example& ex : dataset.examples) {
    paths.push_back(path_example(model, ex, plan.bound, plan.steps, config.loss_mask));
  }

  Rng shuffle_rng = Rng::derive(config.seed, 2);
  const int outputs = model.params.spec.outputs;
  const std::size_t n = dataset.examples.size();
  ForwardCache<float> cache;
  std::vector<AugmentedInput> batch_inputs;
  std::vector<float> output_grad;

  const int stages = plan.joint ? 1 : plan.steps;
  for (int stage = 1; stage <= stages; ++stage) {
    const int max_step = plan.joint ? plan.steps : stage;
    std::vector<Item> pool;
    pool.reserve(n * std::size_t(max_step));
    for (int s = 0; s < max_step; ++s) {
      for (std::size_t e = 0; e < n; ++e) pool.push_back({std::uint32_t(e), std::uint32_t(s)});
    }

    for (int epoch = 1;; ++epoch) {
      if (plan.budget > 0 ? result.updates >= plan.budget : epoch > config.epochs_per_stage) break;
      const auto start = std::chrono::steady_clock::now();
      std::vector<Item> order = pool;
      shuffle_rng.shuffle(std::span<Item>(order));

      double loss_sum = 0.0;
      std::size_t seen = 0;
      for (std::size_t first = 0; first < order.size(); first += std::size_t(config.batch_size)) {
        if (plan.budget > 0 && result.updates >= plan.budget) break;
        const std::size_t count = std::min(std::size_t(config.batch_size), order.size() - first);
        batch_inputs.clear();
        for (std::size_t b = 0; b < count; ++b) {
          const Item it = order[first + b];
          batch_inputs.push_back(model_input(model, dataset.examples[it.example].image,
                                             paths[it.example].inputs[it.step]));
        }
        forward_batch<float>(model.params, batch_inputs, cache);

        output_grad.assign(std::size_t(outputs) * count, 0.0f);
        const float scale = 1.0f / float(count);
        for (std::size_t b = 0; b < count; ++b) {
          const Item it = order[first + b];
          const PathExample& p = paths[it.example];
          const auto lg = loss_and_grad<float>(cache.output_of(int(b), outputs), p.targets[it.step],
                                               p.mask);
          loss_sum += lg.loss;
          for (int o = 0; o < outputs; ++o) output_grad[b * std::size_t(outputs) + std::size_t(o)] = lg.grad[std::size_t(o)] * scale;
        }
        seen += count;
        if (!std::isfinite(loss_sum)) {
          throw DivergenceError("non-finite loss in stage " + std::to_string(stage) + ", epoch " +
                                std::to_string(epoch));
        }
        const auto grads = backward<float>(model.params, cache, output_grad);
        try {
          sgd_update(model.params, grads, config.learning_rate, config.momentum);
        } catch (const DivergenceError& e) {
          throw DivergenceError(std::string(e.what()) + " (stage " + std::to_string(stage) +
                                ", epoch " + std::to_string(epoch) + ")");
        }
        ++result.updates;
      }

      EpochRecord rec;
      rec.stage = stage;
      rec.epoch = epoch;
      rec.examples = seen;
      rec.mean_loss = seen ? loss_sum / double(seen) : 0.0;
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      rec.updates = result.updates;
      result.log.push_back(rec);
    }
    if (on_stage) on_stage(stage, model);
  }
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be finite and non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  if (epochs_per_stage < 1) throw ValidationError("epochs per stage must be positive");
  if (steps < 1) throw ValidationError("step count must be positive");
  if (!(bound > 0.0)) throw ValidationError("correction bound must be positive");
  if (sigma < 0.0 || !std::isfinite(sigma)) throw ValidationError("sigma must be finite and >= 0");
  if (!(heatmap_std >= 0.0)) throw ValidationError("heatmap init std must be >= 0");
}

TrainConfig channel_subset_config(TrainConfig config, std::vector<int> subset) {
  if (subset.empty()) throw ValidationError("keypoint subset is empty");
  config.keypoint_subset = std::move(subset);
  return config;
}

const char* to_string(Curriculum c) { return c == Curriculum::fpc ? "fpc" : "joint"; }

Curriculum curriculum_from_string(const std::string& s) {
  if (s == "fpc") return Curriculum::fpc;
  if (s == "joint") return Curriculum::joint;
  throw ValidationError("unknown curriculum '" + s + "'");
}

const char* to_string(LossMask m) { return m == LossMask::annotated ? "annotated" : "all"; }

LossMask loss_mask_from_string(const std::string& s) {
  if (s == "annotated") return LossMask::annotated;
  if (s == "all") return LossMask::all;
  throw ValidationError("unknown loss mask policy '" + s + "'");
}

Pose training_mean_pose(const Dataset& dataset) {
  std::vector<Pose> poses;
  poses.reserve(dataset.examples.size());
  for (const Example& ex : dataset.examples) poses.push_back(ex.pose);
  return median_pose(poses, dataset.manifest.skeleton.names);
}

std::uint64_t fpc_update_count(std::size_t n_examples, int steps, int epochs_per_stage,
                               int batch_size) {
  std::uint64_t total = 0;
  for (int t = 1; t <= steps; ++t) {
    const std::uint64_t items = std::uint64_t(t) * n_examples;
    total += std::uint64_t(epochs_per_stage) * ((items + std::uint64_t(batch_size) - 1) / std::uint64_t(batch_size));
  }
  return total;
}

PathExample path_example(const Model& model, const Example& example, double bound, int steps,
                         LossMask loss_mask) {
  const Pose y0 = initial_pose(model, example.given_points);
  const FixedPath path = fixed_path(y0, example.pose, bound, steps);
  PathExample out;
  out.inputs.assign(path.poses.begin(), path.poses.end() - 1);
  for (const Correction& c : path.targets) {
    Correction t;
    for (int k : model.layout.predicted) t.deltas.push_back(c.deltas[std::size_t(k)]);
    out.targets.push_back(std::move(t));
  }
  for (int k : model.layout.predicted) {
    out.mask.push_back(loss_mask == LossMask::all || example.pose.mask[std::size_t(k)]);
  }
  return out;
}

TrainResult fpc_train(const Dataset& dataset, const TrainConfig& config,
                      const StageCallback& on_stage) {
  if (config.curriculum != Curriculum::fpc) {
    throw ValidationError("fpc_train needs curriculum=fpc");
  }
  return run(dataset, config, {config.bound, config.steps, false, 0}, on_stage);
}

TrainResult joint_train(const Dataset& dataset, const TrainConfig& config,
                        const StageCallback& on_stage) {
  if (config.curriculum != Curriculum::joint) {
    throw ValidationError("joint_train needs curriculum=joint");
  }
  const std::uint64_t budget = fpc_update_count(dataset.examples.size(), config.steps,
                                                config.epochs_per_stage, config.batch_size);
  return run(dataset, config, {config.bound, config.steps, true, budget}, on_stage);
}

TrainResult direct_train(const Dataset& dataset, const TrainConfig& config,
                         const StageCallback& on_stage) {
  if (config.curriculum != Curriculum::fpc) {
    throw ValidationError("direct prediction has no curriculum; use curriculum=fpc");
  }
  const std::uint64_t budget = fpc_update_count(dataset.examples.size(), config.steps,
                                                config.epochs_per_stage, config.batch_size);
  return run(dataset, config, {std::numeric_limits<double>::infinity(), 1, true, budget}, on_stage);
}

TrainResult iterative_direct_train(const Dataset& dataset, const TrainConfig& config,
                                   const StageCallback& on_stage) {
  if (config.curriculum != Curriculum::fpc) {
    throw ValidationError("iterative direct prediction follows the fpc schedule");
  }
  return run(dataset, config, {std::numeric_limits<double>::infinity(), config.steps, false, 0},
             on_stage);
}

std::string format_log(const std::vector<EpochRecord>& log) {
  std::string out = "stage,epoch,examples,mean_loss,wall_seconds,updates\n";
  for (const EpochRecord& r : log) {
    out += std::to_string(r.stage) + "," + std::to_string(r.epoch) + "," +
           std::to_string(r.examples) + "," + io::format_double(r.mean_loss) + "," +
           io::fixed4(r.wall_seconds) + "," + std::to_string(r.updates) + "\n";
  }
  return out;
}

}  // namespace ief
