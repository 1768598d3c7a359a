// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ief/data.hpp"
#include "ief/model.hpp"

namespace ief {

enum class Curriculum { fpc, joint };

/// Which keypoints contribute to the loss: only those annotated in the ground
/// truth, or every predicted keypoint.
enum class LossMask { annotated, all };

/// Learning rates that train each regime stably with the default batch and
/// momentum. Full-displacement targets are several times larger than bounded
/// ones and collapse the network at the bounded-regime rate.
inline constexpr double kBoundedLearningRate = 1e-3;
inline constexpr double kDirectLearningRate = 3e-4;

struct TrainConfig {
  double learning_rate = kBoundedLearningRate;
  double momentum = 0.9;
  int batch_size = 16;
  int epochs_per_stage = 3;
  int steps = 4;
  double bound = 6.0;
  double sigma = 0.0;  // 0 selects default_sigma for the image size
  std::uint64_t seed = 0;
  Curriculum curriculum = Curriculum::fpc;
  LossMask loss_mask = LossMask::annotated;
  std::vector<int> keypoint_subset;  // empty: every keypoint
  double heatmap_std = 0.1;

  void validate() const;
};

/// Restricts rendered channels and predicted outputs to `subset`.
TrainConfig channel_subset_config(TrainConfig config, std::vector<int> subset);

const char* to_string(Curriculum c);
Curriculum curriculum_from_string(const std::string& s);
const char* to_string(LossMask m);
LossMask loss_mask_from_string(const std::string& s);

struct EpochRecord {
  int stage = 0;
  int epoch = 0;  // within the stage, from 1
  std::size_t examples = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t updates = 0;  // cumulative
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> log;
  std::uint64_t updates = 0;
};

/// Called after each stage with the model as it stands.
using StageCallback = std::function<void(int stage, const Model&)>;

/// Componentwise median of the training poses.
Pose training_mean_pose(const Dataset& dataset);

/// Updates of a curriculum run: sum over stages t of N * ceil(t * n / batch).
std::uint64_t fpc_update_count(std::size_t n_examples, int steps, int epochs_per_stage,
                               int batch_size);

/// Fixed Path Consolidation. Stage t trains N epochs over the step 1..t
/// examples of every image; inputs come from precomputed fixed paths.
TrainResult fpc_train(const Dataset& dataset, const TrainConfig& config,
                      const StageCallback& on_stage = {});

/// Every step of every image trained from the first epoch, for the same
/// number of updates as the curriculum run.
TrainResult joint_train(const Dataset& dataset, const TrainConfig& config,
                        const StageCallback& on_stage = {});

/// One-shot regression of the full displacement from the mean pose, for the
/// same number of updates as the curriculum run.
TrainResult direct_train(const Dataset& dataset, const TrainConfig& config,
                         const StageCallback& on_stage = {});

/// The curriculum with unbounded targets: each step regresses the whole
/// remaining displacement.
TrainResult iterative_direct_train(const Dataset& dataset, const TrainConfig& config,
                                   const StageCallback& on_stage = {});

/// Training items of one image: the poses the network sees and the
/// corrections it should output (predicted keypoints only, layout order).
struct PathExample {
  std::vector<Pose> inputs;
  std::vector<Correction> targets;
  std::vector<bool> mask;
};

PathExample path_example(const Model& model, const Example& example, double bound, int steps,
                         LossMask loss_mask);

/// Comma-separated log: stage,epoch,examples,mean_loss,wall_seconds,updates.
std::string format_log(const std::vector<EpochRecord>& log);

}  // namespace ief
