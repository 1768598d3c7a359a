// SPDX-License-Identifier: Apache-2.0

#include "ief/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ief/errors.hpp"
#include "ief/io.hpp"

namespace ief {

namespace {

constexpr int kFormatVersion = 1;
constexpr double kDeg = std::numbers::pi / 180.0;

// Keypoint coordinates are kept on a 2^-40 grid. For |x| < 2^12 both x and
// width - x are then exact doubles, which makes mirroring an exact involution.
double snap(double v) {
  constexpr double kScale = 0x1.0p40;
  return std::nearbyint(v * kScale) / kScale;
}

Vec2 snap(Vec2 p) { return {snap(p.x), snap(p.y)}; }

Vec2 rotate(Vec2 v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Unit vector for an angle measured from straight down (+y), positive towards +x.
Vec2 from_down(double a) { return {std::sin(a), std::cos(a)}; }

struct Capsule {
  Vec2 a, b;
  double radius;
};

double segment_distance2(Vec2 p, const Capsule& c) {
  const Vec2 ab = c.b - c.a;
  const Vec2 ap = p - c.a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0.0 ? (ap.x * ab.x + ap.y * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 d = ap - t * ab;
  return d.x * d.x + d.y * d.y;
}

// Fraction of the 2x2 subpixel samples of each pixel covered by the union of
// the capsules.
std::vector<float> coverage(const std::vector<Capsule>& parts, int w, int h) {
  std::vector<std::uint8_t> bits(std::size_t(w) * h, 0);
  static constexpr double kSub[2] = {0.25, 0.75};
  for (const Capsule& c : parts) {
    const int x0 = std::max(0, int(std::floor(std::min(c.a.x, c.b.x) - c.radius)));
    const int x1 = std::min(w - 1, int(std::ceil(std::max(c.a.x, c.b.x) + c.radius)));
    const int y0 = std::max(0, int(std::floor(std::min(c.a.y, c.b.y) - c.radius)));
    const int y1 = std::min(h - 1, int(std::ceil(std::max(c.a.y, c.b.y) + c.radius)));
    const double r2 = c.radius * c.radius;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        std::uint8_t& m = bits[std::size_t(y) * w + x];
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            if (segment_distance2({x + kSub[sx], y + kSub[sy]}, c) <= r2) {
              m |= std::uint8_t(1u << (sy * 2 + sx));
            }
          }
        }
      }
    }
  }
  std::vector<float> out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) out[i] = std::popcount(bits[i]) * 0.25f;
  return out;
}

struct Figure {
  std::array<Vec2, stick::kCount> points;
  Vec2 shoulders[2];  // left, right
  Vec2 elbows[2];
  Vec2 hips[2];
  Vec2 knees[2];
  double height;
};

Figure sample_figure(Rng& rng, double figure_height) {
  const double hf = figure_height;
  const double torso = 0.32 * hf, head = 0.18 * hf;
  const double upper_arm = 0.17 * hf, forearm = 0.16 * hf;
  const double thigh = 0.25 * hf, shin = 0.25 * hf;

  Figure f{};
  f.height = hf;
  const double lean = rng.uniform(-15.0, 15.0) * kDeg;
  const Vec2 up = rotate({0.0, -1.0}, lean);
  const Vec2 side = rotate({1.0, 0.0}, lean);  // towards the figure's left

  f.points[stick::kPelvis] = {0.0, 0.0};
  const Vec2 neck = torso * up;
  f.points[stick::kNeck] = neck;
  f.points[stick::kHeadTop] = neck + head * rotate(up, rng.uniform(-20.0, 20.0) * kDeg);

  for (int s = 0; s < 2; ++s) {
    const double out = s == 0 ? 1.0 : -1.0;
    const Vec2 shoulder = neck - (0.04 * hf) * up + (out * 0.07 * hf) * side;
    const double abduct = rng.uniform(-20.0, 160.0) * kDeg;
    const double flex = rng.uniform(0.0, 140.0) * kDeg;
    const Vec2 d1 = rotate(from_down(out * abduct), lean);
    const Vec2 d2 = rotate(from_down(out * (abduct + flex)), lean);
    const Vec2 elbow = shoulder + upper_arm * d1;
    f.shoulders[s] = shoulder;
    f.elbows[s] = elbow;
    f.points[s == 0 ? stick::kLeftHand : stick::kRightHand] = elbow + forearm * d2;

    const Vec2 hip = (out * 0.05 * hf) * side;
    const double spread = rng.uniform(-15.0, 50.0) * kDeg;
    const double bend = rng.uniform(0.0, 110.0) * kDeg;
    const Vec2 t1 = rotate(from_down(out * spread), lean);
    const Vec2 t2 = rotate(from_down(out * (spread - bend)), lean);
    const Vec2 knee = hip + thigh * t1;
    f.hips[s] = hip;
    f.knees[s] = knee;
    f.points[s == 0 ? stick::kLeftFoot : stick::kRightFoot] = knee + shin * t2;
  }
  return f;
}

void transform(Figure& f, double angle, Vec2 offset) {
  auto map = [&](Vec2& p) { p = rotate(p, angle) + offset; };
  for (Vec2& p : f.points) map(p);
  for (int s = 0; s < 2; ++s) {
    map(f.shoulders[s]);
    map(f.elbows[s]);
    map(f.hips[s]);
    map(f.knees[s]);
  }
}

bool inside_margin(const Figure& f, int w, int h) {
  for (const Vec2& p : f.points) {
    if (p.x < -0.25 * w || p.x > 1.25 * w || p.y < -0.25 * h || p.y > 1.25 * h) return false;
  }
  return true;
}

void draw(const Figure& f, Rng& rng, const GeneratorConfig& config, ImageGrid& image) {
  const int w = config.width, h = config.height;
  const double thickness = std::max(0.6, rng.uniform(0.022, 0.04) * f.height);
  const double background = rng.uniform(0.0, 0.35);
  const double foreground = rng.uniform(background + 0.3, 1.0);
  const double noise = rng.uniform(0.0, config.max_noise);

  std::vector<std::vector<Capsule>> layers(3);
  const Vec2 neck = f.points[stick::kNeck];
  const Vec2 pelvis = f.points[stick::kPelvis];
  const Vec2 top = f.points[stick::kHeadTop];
  for (int s = 0; s < 2; ++s) {
    auto& layer = layers[s == 0 ? 2 : 0];
    const Vec2 hand = f.points[s == 0 ? stick::kLeftHand : stick::kRightHand];
    const Vec2 foot = f.points[s == 0 ? stick::kLeftFoot : stick::kRightFoot];
    layer.push_back({f.shoulders[s], f.elbows[s], thickness * 0.5});
    layer.push_back({f.elbows[s], hand, thickness * 0.45});
    layer.push_back({f.hips[s], f.knees[s], thickness * 0.6});
    layer.push_back({f.knees[s], foot, thickness * 0.5});
  }
  const double head_len = norm(top - neck);
  layers[1].push_back({neck, pelvis, thickness * 0.8});
  layers[1].push_back({f.shoulders[0], f.shoulders[1], thickness * 0.5});
  layers[1].push_back({f.hips[0], f.hips[1], thickness * 0.6});
  const Vec2 head_center = 0.5 * (top + neck);
  layers[1].push_back({head_center, head_center, 0.45 * head_len});

  // right side, then torso and head, then left side on top
  const double shade[3] = {0.7, 0.85, 1.0};
  std::vector<double> plane(std::size_t(w) * h, background);
  for (int l = 0; l < 3; ++l) {
    const std::vector<float> cov = coverage(layers[l], w, h);
    const double value = background + shade[l] * (foreground - background);
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] += cov[i] * (value - plane[i]);
  }

  for (int c = 0; c < image.channels; ++c) {
    const double tint = image.channels == 1 ? 1.0 : rng.uniform(0.75, 1.0);
    std::span<float> out = image.channel(c);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      const double v = tint * plane[i] + noise * rng.normal();
      out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

std::string pairs_text(const std::vector<std::pair<int, int>>& pairs) {
  std::vector<std::string> parts;
  for (auto [a, b] : pairs) parts.push_back(std::to_string(a) + "-" + std::to_string(b));
  return io::join(parts, ',');
}

std::vector<std::pair<int, int>> parse_pairs(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  if (text.empty()) return out;
  for (const std::string& p : io::split(text, ',')) {
    const auto ab = io::split(p, '-');
    if (ab.size() != 2) throw IoError("malformed index pair '" + p + "'");
    out.emplace_back(int(io::parse_int(ab[0])), int(io::parse_int(ab[1])));
  }
  return out;
}

std::string ints_text(const std::vector<int>& v) {
  std::vector<std::string> parts;
  for (int i : v) parts.push_back(std::to_string(i));
  return io::join(parts, ',');
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  if (text.empty()) return out;
  for (const std::string& p : io::split(text, ',')) out.push_back(int(io::parse_int(p)));
  return out;
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines = io::split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

int Skeleton::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (names[i] == name) return i;
  }
  return -1;
}

const Skeleton& stick_figure_skeleton() {
  using namespace stick;
  static const Skeleton s{
      {"head_top", "neck", "pelvis", "left_hand", "right_hand", "left_foot", "right_foot"},
      {{kHeadTop, kNeck},
       {kNeck, kPelvis},
       {kNeck, kLeftHand},
       {kNeck, kRightHand},
       {kPelvis, kLeftFoot},
       {kPelvis, kRightFoot}},
      {{kLeftHand, kRightHand}, {kLeftFoot, kRightFoot}},
      {kPelvis},
      {kHeadTop, kNeck},
      {kHeadTop, kNeck, kLeftHand, kRightHand},
  };
  return s;
}

Example generate_figure(Rng& rng, const GeneratorConfig& config, std::uint64_t id) {
  if (config.width < 32 || config.height < 32) {
    throw ValidationError("generator needs images of at least 32x32");
  }
  if (config.channels < 1) throw ValidationError("generator needs at least one channel");
  if (!(config.min_scale > 0.0) || config.max_scale < config.min_scale) {
    throw ValidationError("generator scale range is empty");
  }
  const int w = config.width, h = config.height;

  Figure f;
  while (true) {
    const double hf = rng.uniform(config.min_scale, config.max_scale) * h;
    f = sample_figure(rng, hf);
    const double angle = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg) * kDeg;
    const Vec2 offset{rng.uniform(0.35, 0.65) * w, rng.uniform(0.4, 0.6) * h};
    transform(f, angle, offset);
    if (inside_margin(f, w, h)) break;
  }

  Example ex;
  ex.id = id;
  ex.image = ImageGrid(w, h, config.channels);
  draw(f, rng, config, ex.image);
  std::vector<Vec2> pts(f.points.begin(), f.points.end());
  for (Vec2& p : pts) p = snap(p);
  ex.pose = Pose::annotated(std::move(pts));
  ex.given_points = {ex.pose.points[stick::kPelvis]};
  ex.person_height = f.height;
  return ex;
}

std::vector<Example> generate_examples(std::uint64_t seed, std::uint64_t first_id, std::size_t count,
                                       const GeneratorConfig& config) {
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t id = first_id + i;
    Rng rng = Rng::derive(seed, id);
    Example ex = generate_figure(rng, config, id);
    ex.seed = seed;
    out.push_back(std::move(ex));
  }
  return out;
}

Vec2 CropBox::to_crop(Vec2 p) const {
  const double s = scale();
  return {(p.x - center.x) * s + 0.5 * resolution, (p.y - center.y) * s + 0.5 * resolution};
}

Vec2 CropBox::to_source(Vec2 p) const {
  const double s = scale();
  return {(p.x - 0.5 * resolution) / s + center.x, (p.y - 0.5 * resolution) / s + center.y};
}

std::vector<CropBox> scale_boxes(const Example& example, int resolution, int n_scales, double lo,
                                 double hi) {
  if (n_scales < 1 || resolution < 1 || !(lo > 0.0) || hi < lo) {
    throw ValidationError("invalid crop box configuration");
  }
  if (example.given_points.empty()) throw StructuralError("crop needs a marking point");
  const double base = std::min(example.image.width, example.image.height);
  std::vector<CropBox> boxes;
  for (int i = 0; i < n_scales; ++i) {
    const double f = n_scales == 1 ? hi : hi - (hi - lo) * i / (n_scales - 1);
    boxes.push_back({example.given_points[0], f * base, resolution});
  }
  return boxes;
}

Example crop_example(const Example& example, const CropBox& box) {
  const ImageGrid& src = example.image;
  const int r = box.resolution;
  Example out;
  out.id = example.id;
  out.seed = example.seed;
  out.image = ImageGrid(r, r, src.channels);
  for (int y = 0; y < r; ++y) {
    for (int x = 0; x < r; ++x) {
      const Vec2 s = box.to_source({x + 0.5, y + 0.5});
      const double fx = s.x - 0.5, fy = s.y - 0.5;
      const int x0 = int(std::floor(fx)), y0 = int(std::floor(fy));
      const double ax = fx - x0, ay = fy - y0;
      for (int c = 0; c < src.channels; ++c) {
        auto sample = [&](int xx, int yy) -> double {
          if (xx < 0 || yy < 0 || xx >= src.width || yy >= src.height) return 0.0;
          return src.at(c, yy, xx);
        };
        const double v = (1 - ay) * ((1 - ax) * sample(x0, y0) + ax * sample(x0 + 1, y0)) +
                         ay * ((1 - ax) * sample(x0, y0 + 1) + ax * sample(x0 + 1, y0 + 1));
        out.image.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  std::vector<Vec2> pts;
  for (const Vec2& p : example.pose.points) pts.push_back(snap(box.to_crop(p)));
  out.pose = Pose(std::move(pts), example.pose.mask);
  for (const Vec2& g : example.given_points) out.given_points.push_back(snap(box.to_crop(g)));
  out.person_height = example.person_height * box.scale();
  return out;
}

std::vector<Example> augment_scales(const Example& example, int resolution, int n_scales, double lo,
                                    double hi) {
  std::vector<Example> out;
  for (const CropBox& b : scale_boxes(example, resolution, n_scales, lo, hi)) {
    out.push_back(crop_example(example, b));
  }
  return out;
}

std::vector<std::size_t> select_boxes(const std::vector<CropBox>& boxes, double person_height,
                                      double ratio, std::size_t keep) {
  std::vector<std::size_t> idx(boxes.size());
  std::iota(idx.begin(), idx.end(), 0);
  const double want = ratio * person_height;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(boxes[a].side - want) < std::abs(boxes[b].side - want);
  });
  idx.resize(std::min(keep, idx.size()));
  return idx;
}

Example mirror(const Example& example, const Skeleton& skeleton) {
  Example out = example;
  const ImageGrid& src = example.image;
  const int w = src.width;
  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < w; ++x) out.image.at(c, y, x) = src.at(c, y, w - 1 - x);
    }
  }
  for (Vec2& p : out.pose.points) p.x = w - p.x;
  for (Vec2& g : out.given_points) g.x = w - g.x;
  for (auto [a, b] : skeleton.mirror_pairs) {
    std::swap(out.pose.points[a], out.pose.points[b]);
    const bool ma = out.pose.mask[a];
    out.pose.mask[a] = out.pose.mask[b];
    out.pose.mask[b] = ma;
  }
  return out;
}

std::vector<Example> prepare_examples(const std::vector<Example>& raw, const Skeleton& skeleton,
                                      const PrepareConfig& config) {
  std::vector<Example> out;
  const std::uint64_t per = std::uint64_t(std::max(1, config.boxes)) * (config.mirror ? 2 : 1);
  for (const Example& ex : raw) {
    std::vector<Example> crops;
    if (config.boxes > 0) {
      const auto boxes = scale_boxes(ex, config.resolution, config.n_scales, config.lo, config.hi);
      for (std::size_t i :
           select_boxes(boxes, ex.person_height, config.ratio, std::size_t(config.boxes))) {
        crops.push_back(crop_example(ex, boxes[i]));
      }
    } else {
      crops.push_back(ex);
    }
    if (config.mirror) {
      const std::size_t n = crops.size();
      for (std::size_t i = 0; i < n; ++i) crops.push_back(mirror(crops[i], skeleton));
    }
    for (std::size_t i = 0; i < crops.size(); ++i) {
      crops[i].id = ex.id * per + i;
      out.push_back(std::move(crops[i]));
    }
  }
  return out;
}

Dataset make_dataset(std::vector<Example> examples, const Skeleton& skeleton, std::uint64_t seed,
                     std::string preparation) {
  Dataset d;
  d.manifest.count = examples.size();
  d.manifest.keypoints = skeleton.size();
  if (!examples.empty()) {
    d.manifest.width = examples[0].image.width;
    d.manifest.height = examples[0].image.height;
    d.manifest.channels = examples[0].image.channels;
    d.manifest.sigma = default_sigma(d.manifest.width, d.manifest.height);
  }
  d.manifest.skeleton = skeleton;
  d.manifest.seed = seed;
  d.manifest.preparation = std::move(preparation);
  d.examples = std::move(examples);
  return d;
}

double reference_length(const Example& example, const Skeleton& skeleton) {
  const auto [a, b] = skeleton.reference;
  return norm(example.pose.points[a] - example.pose.points[b]);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  const DatasetManifest& m = dataset.manifest;
  if (m.count != dataset.examples.size()) {
    throw StructuralError("manifest count disagrees with example list");
  }
  std::filesystem::create_directories(dir);

  io::KeyValues kv;
  kv.set("format", "ief-dataset");
  kv.set("format_version", std::to_string(kFormatVersion));
  kv.set("count", std::to_string(m.count));
  kv.set("keypoints", std::to_string(m.keypoints));
  kv.set("width", std::to_string(m.width));
  kv.set("height", std::to_string(m.height));
  kv.set("channels", std::to_string(m.channels));
  kv.set("sigma", io::format_double(m.sigma));
  kv.set("names", io::join(m.skeleton.names, ','));
  kv.set("limbs", pairs_text(m.skeleton.limbs));
  kv.set("mirror_pairs", pairs_text(m.skeleton.mirror_pairs));
  kv.set("given", ints_text(m.skeleton.given));
  kv.set("reference", pairs_text({m.skeleton.reference}));
  kv.set("upper_body", ints_text(m.skeleton.upper_body));
  kv.set("reference_length", m.reference_length);
  kv.set("seed", std::to_string(m.seed));
  kv.set("generator_version", std::to_string(m.generator_version));
  kv.set("preparation", m.preparation);
  const std::string manifest = kv.to_string();

  std::vector<char> images;
  std::string keypoints = "example,keypoint,x,y,annotated\n";
  std::string examples = "example,id,seed,person_height";
  for (std::size_t g = 0; g < m.skeleton.given.size(); ++g) {
    examples += ",given" + std::to_string(g) + "_x,given" + std::to_string(g) + "_y";
  }
  examples += "\n";
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const Example& ex = dataset.examples[i];
    if (ex.image.width != m.width || ex.image.height != m.height ||
        ex.image.channels != m.channels || int(ex.pose.size()) != m.keypoints ||
        ex.given_points.size() != m.skeleton.given.size()) {
      throw StructuralError("example " + std::to_string(i) + " does not match the manifest");
    }
    io::append_f32le(images, ex.image.data);
    for (std::size_t k = 0; k < ex.pose.size(); ++k) {
      keypoints += std::to_string(i) + "," + std::to_string(k) + "," +
                   io::format_double(ex.pose.points[k].x) + "," +
                   io::format_double(ex.pose.points[k].y) + "," +
                   (ex.pose.mask[k] ? "1" : "0") + "\n";
    }
    examples += std::to_string(i) + "," + std::to_string(ex.id) + "," + std::to_string(ex.seed) +
                "," + io::format_double(ex.person_height);
    for (const Vec2& g : ex.given_points) {
      examples += "," + io::format_double(g.x) + "," + io::format_double(g.y);
    }
    examples += "\n";
  }

  auto entry = [](const std::string& name, std::span<const char> bytes) {
    return name + " " + io::hex32(io::crc32(bytes)) + " " + std::to_string(bytes.size()) + "\n";
  };
  std::string checksums;
  checksums += entry("manifest.txt", manifest);
  checksums += entry("images.bin", images);
  checksums += entry("keypoints.csv", keypoints);
  checksums += entry("examples.csv", examples);

  io::write_text(dir / "manifest.txt", manifest);
  io::write_bytes(dir / "images.bin", images);
  io::write_text(dir / "keypoints.csv", keypoints);
  io::write_text(dir / "examples.csv", examples);
  io::write_text(dir / "checksums.txt", checksums);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("dataset directory " + dir.string() + " does not exist");
  }
  const std::string manifest_text = io::read_text(dir / "manifest.txt");
  const io::KeyValues kv = io::KeyValues::parse(manifest_text);
  if (!kv.has("format") || kv.get("format") != "ief-dataset") {
    throw VersionMismatchError(dir.string() + " is not a dataset directory");
  }
  if (kv.get("format_version") != std::to_string(kFormatVersion)) {
    throw VersionMismatchError("dataset format version " + kv.get("format_version") +
                               ", expected " + std::to_string(kFormatVersion));
  }
  if (io::parse_int(kv.get("generator_version")) != kGeneratorVersion) {
    throw VersionMismatchError("dataset generator version " + kv.get("generator_version") +
                               ", expected " + std::to_string(kGeneratorVersion));
  }

  DatasetManifest m;
  m.count = std::size_t(io::parse_int(kv.get("count")));
  m.keypoints = int(io::parse_int(kv.get("keypoints")));
  m.width = int(io::parse_int(kv.get("width")));
  m.height = int(io::parse_int(kv.get("height")));
  m.channels = int(io::parse_int(kv.get("channels")));

  const std::vector<char> images = io::read_bytes(dir / "images.bin");
  const std::size_t plane = std::size_t(m.width) * m.height * m.channels;
  if (images.size() < m.count * plane * 4) {
    throw TruncatedBlobError("images.bin holds " + std::to_string(images.size()) +
                             " bytes, manifest needs " + std::to_string(m.count * plane * 4));
  }
  if (images.size() != m.count * plane * 4) {
    throw StructuralError("images.bin is larger than the manifest declares");
  }

  const std::string keypoints = io::read_text(dir / "keypoints.csv");
  const std::string examples = io::read_text(dir / "examples.csv");
  for (const std::string& line : csv_lines(io::read_text(dir / "checksums.txt"))) {
    const auto f = io::split(line, ' ');
    if (f.size() != 3) throw ChecksumError("malformed checksums.txt line '" + line + "'");
    std::span<const char> bytes;
    if (f[0] == "manifest.txt") bytes = manifest_text;
    else if (f[0] == "images.bin") bytes = images;
    else if (f[0] == "keypoints.csv") bytes = keypoints;
    else if (f[0] == "examples.csv") bytes = examples;
    else throw ChecksumError("checksums.txt lists unknown file " + f[0]);
    if (io::hex32(io::crc32(bytes)) != f[1]) throw ChecksumError("checksum mismatch in " + f[0]);
  }

  m.sigma = io::parse_double(kv.get("sigma"));
  m.skeleton.names = io::split(kv.get("names"), ',');
  m.skeleton.limbs = parse_pairs(kv.get("limbs"));
  m.skeleton.mirror_pairs = parse_pairs(kv.get("mirror_pairs"));
  m.skeleton.given = parse_ints(kv.get("given"));
  const auto ref = parse_pairs(kv.get("reference"));
  if (ref.size() != 1) throw StructuralError("manifest reference must be one keypoint pair");
  m.skeleton.reference = ref[0];
  m.skeleton.upper_body = parse_ints(kv.get("upper_body"));
  m.reference_length = kv.get("reference_length");
  m.seed = io::parse_u64(kv.get("seed"));
  m.generator_version = int(io::parse_int(kv.get("generator_version")));
  m.preparation = kv.get("preparation");
  if (m.skeleton.size() != m.keypoints) {
    throw StructuralError("manifest lists " + std::to_string(m.skeleton.size()) + " names for " +
                          std::to_string(m.keypoints) + " keypoints");
  }

  Dataset d;
  d.examples.resize(m.count);
  for (std::size_t i = 0; i < m.count; ++i) {
    Example& ex = d.examples[i];
    ex.image = ImageGrid(m.width, m.height, m.channels);
    io::read_f32le(std::span<const char>(images).subspan(i * plane * 4, plane * 4), ex.image.data);
    ex.pose.points.resize(std::size_t(m.keypoints));
    ex.pose.mask.assign(std::size_t(m.keypoints), false);
  }

  const auto kp_lines = csv_lines(keypoints);
  if (kp_lines.size() != 1 + m.count * std::size_t(m.keypoints)) {
    throw StructuralError("keypoints.csv has " + std::to_string(kp_lines.size() - 1) +
                          " rows, manifest implies " + std::to_string(m.count * m.keypoints));
  }
  for (std::size_t r = 1; r < kp_lines.size(); ++r) {
    const auto f = io::split(kp_lines[r], ',');
    if (f.size() != 5) throw StructuralError("keypoints.csv row " + std::to_string(r) + " malformed");
    const long long e = io::parse_int(f[0]), k = io::parse_int(f[1]);
    if (e < 0 || std::size_t(e) >= m.count || k < 0 || k >= m.keypoints) {
      throw StructuralError("keypoints.csv row " + std::to_string(r) + " out of range");
    }
    Example& ex = d.examples[std::size_t(e)];
    ex.pose.points[std::size_t(k)] = {io::parse_double(f[2]), io::parse_double(f[3])};
    ex.pose.mask[std::size_t(k)] = f[4] == "1";
  }

  const auto ex_lines = csv_lines(examples);
  if (ex_lines.size() != 1 + m.count) throw StructuralError("examples.csv row count mismatch");
  const std::size_t n_given = m.skeleton.given.size();
  for (std::size_t r = 1; r < ex_lines.size(); ++r) {
    const auto f = io::split(ex_lines[r], ',');
    if (f.size() != 4 + 2 * n_given) {
      throw StructuralError("examples.csv row " + std::to_string(r) + " malformed");
    }
    const long long e = io::parse_int(f[0]);
    if (e < 0 || std::size_t(e) >= m.count) throw StructuralError("examples.csv index out of range");
    Example& ex = d.examples[std::size_t(e)];
    ex.id = io::parse_u64(f[1]);
    ex.seed = io::parse_u64(f[2]);
    ex.person_height = io::parse_double(f[3]);
    for (std::size_t g = 0; g < n_given; ++g) {
      ex.given_points.push_back({io::parse_double(f[4 + 2 * g]), io::parse_double(f[5 + 2 * g])});
    }
  }
  d.manifest = std::move(m);
  return d;
}

}  // namespace ief
