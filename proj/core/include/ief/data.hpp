// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ief/pose.hpp"
#include "ief/rendering.hpp"
#include "ief/rng.hpp"

namespace ief {

/// Keypoint topology of a dataset.
struct Skeleton {
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> limbs;
  std::vector<std::pair<int, int>> mirror_pairs;
  std::vector<int> given;                 // marking points, never predicted
  std::pair<int, int> reference{0, 1};    // segment playing the head-size role
  std::vector<int> upper_body;

  int size() const { return static_cast<int>(names.size()); }
  int index_of(const std::string& name) const;
  friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

/// The 7-keypoint stick figure used by the synthetic generator.
namespace stick {
inline constexpr int kHeadTop = 0;
inline constexpr int kNeck = 1;
inline constexpr int kPelvis = 2;
inline constexpr int kLeftHand = 3;
inline constexpr int kRightHand = 4;
inline constexpr int kLeftFoot = 5;
inline constexpr int kRightFoot = 6;
inline constexpr int kCount = 7;
}  // namespace stick

const Skeleton& stick_figure_skeleton();

struct Example {
  ImageGrid image;
  Pose pose;                       // ground truth
  std::vector<Vec2> given_points;  // one per Skeleton::given entry
  double person_height = 0.0;
  std::uint64_t id = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

struct GeneratorConfig {
  int width = 64;
  int height = 64;
  int channels = 1;
  double min_scale = 0.4;  // figure height as a fraction of image height
  double max_scale = 0.9;
  double max_rotation_deg = 30.0;
  double max_noise = 0.05;
};

inline constexpr int kGeneratorVersion = 1;

/// One random stick figure. Deterministic in the rng state.
Example generate_figure(Rng& rng, const GeneratorConfig& config, std::uint64_t id = 0);

/// Examples first_id .. first_id + count - 1, each from its own stream
/// derived from (seed, id).
std::vector<Example> generate_examples(std::uint64_t seed, std::uint64_t first_id, std::size_t count,
                                       const GeneratorConfig& config);

/// Square crop of side `side` centered on `center`, resampled to
/// `resolution` x `resolution`.
struct CropBox {
  Vec2 center;
  double side = 0.0;
  int resolution = 0;

  Vec2 to_crop(Vec2 p) const;
  Vec2 to_source(Vec2 p) const;
  double scale() const { return resolution / side; }
};

/// n boxes centered on the first marking point with sides evenly spaced over
/// [lo, hi] x min(image width, height), largest first.
std::vector<CropBox> scale_boxes(const Example& example, int resolution, int n_scales = 9,
                                 double lo = 0.3, double hi = 1.4);

Example crop_example(const Example& example, const CropBox& box);

/// Crops for every scale box (bilinear resampling, zero padding).
std::vector<Example> augment_scales(const Example& example, int resolution, int n_scales = 9,
                                    double lo = 0.3, double hi = 1.4);

/// Indices of the `keep` boxes whose side is closest to ratio * person height
/// (ties to the lower index), in increasing distance.
std::vector<std::size_t> select_boxes(const std::vector<CropBox>& boxes, double person_height,
                                      double ratio = 1.2, std::size_t keep = 3);

/// Horizontal flip: x -> width - x and left/right labels swapped.
Example mirror(const Example& example, const Skeleton& skeleton);

/// Training/test preparation applied to raw figures.
struct PrepareConfig {
  int resolution = 64;
  int n_scales = 9;
  double lo = 0.3;
  double hi = 1.4;
  double ratio = 1.2;
  int boxes = 3;       // boxes kept per figure; 0 disables cropping
  bool mirror = true;  // also add mirrored copies
};

std::vector<Example> prepare_examples(const std::vector<Example>& raw, const Skeleton& skeleton,
                                      const PrepareConfig& config);

struct DatasetManifest {
  std::size_t count = 0;
  int keypoints = 0;
  int width = 0;
  int height = 0;
  int channels = 0;
  double sigma = 0.0;
  Skeleton skeleton;
  std::string reference_length = "neck-to-head-top segment";
  std::uint64_t seed = 0;
  int generator_version = kGeneratorVersion;
  std::string preparation;  // free-form description of crop/mirror settings

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Example> examples;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Fills count/dims/sigma from the examples.
Dataset make_dataset(std::vector<Example> examples, const Skeleton& skeleton, std::uint64_t seed,
                     std::string preparation);

/// Directory layout: manifest.txt, images.bin (little-endian float32),
/// keypoints.csv, examples.csv, checksums.txt.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Verifies format version, blob sizes and checksums before parsing anything.
Dataset load_dataset(const std::filesystem::path& dir);

/// Reference length (PCKh head size) of an example.
double reference_length(const Example& example, const Skeleton& skeleton);

}  // namespace ief
