// SPDX-License-Identifier: Apache-2.0

#include "ief/model.hpp"

#include <algorithm>
#include <set>

#include "ief/errors.hpp"
#include "ief/io.hpp"

namespace ief {

namespace {

constexpr int kFormatVersion = 1;

std::string ints_text(const std::vector<int>& v) {
  std::vector<std::string> parts;
  for (int i : v) parts.push_back(std::to_string(i));
  return io::join(parts, ',');
}

std::vector<int> parse_ints(const std::string& text, char sep = ',') {
  std::vector<int> out;
  if (text.empty()) return out;
  for (const std::string& p : io::split(text, sep)) out.push_back(int(io::parse_int(p)));
  return out;
}

}  // namespace

KeypointLayout KeypointLayout::standard(const Skeleton& skeleton) {
  std::vector<int> all(std::size_t(skeleton.size()));
  for (int i = 0; i < skeleton.size(); ++i) all[std::size_t(i)] = i;
  return subset(skeleton, all);
}

KeypointLayout KeypointLayout::subset(const Skeleton& skeleton, std::span<const int> keypoints) {
  if (keypoints.empty()) throw ValidationError("keypoint subset is empty");
  std::set<int> chosen;
  for (int k : keypoints) {
    if (k < 0 || k >= skeleton.size()) {
      throw ValidationError("keypoint " + std::to_string(k) + " is not in the skeleton");
    }
    chosen.insert(k);
  }
  KeypointLayout l;
  l.keypoints = skeleton.size();
  l.given = skeleton.given;
  for (int k : chosen) {
    l.rendered.push_back(k);
    if (std::find(l.given.begin(), l.given.end(), k) == l.given.end()) l.predicted.push_back(k);
  }
  if (l.predicted.empty()) throw ValidationError("keypoint subset contains no predictable keypoint");
  return l;
}

void KeypointLayout::validate() const {
  auto check = [&](const std::vector<int>& v, const char* what) {
    for (int k : v) {
      if (k < 0 || k >= keypoints) {
        throw StructuralError(std::string("layout ") + what + " index " + std::to_string(k) +
                              " out of range");
      }
    }
  };
  check(rendered, "rendered");
  check(predicted, "predicted");
  check(given, "given");
  if (predicted.empty()) throw StructuralError("layout predicts no keypoints");
  for (int k : predicted) {
    if (std::find(given.begin(), given.end(), k) != given.end()) {
      throw StructuralError("layout predicts given keypoint " + std::to_string(k));
    }
  }
}

NetSpec net_spec_for(const KeypointLayout& layout, int width, int height, int image_channels) {
  NetSpec s;
  s.width = width;
  s.height = height;
  s.image_channels = image_channels;
  s.in_channels = image_channels + int(layout.rendered.size());
  s.outputs = 2 * int(layout.predicted.size());
  s.validate();
  return s;
}

AugmentedInput model_input(const Model& model, const ImageGrid& image, const Pose& pose) {
  return render_input(image, pose, model.layout.rendered, model.sigma);
}

Pose initial_pose(const Model& model, std::span<const Vec2> given_points) {
  return anchored_pose(model.init, model.layout.given, given_points);
}

void save_model(const Model& model, const std::filesystem::path& dir) {
  model.layout.validate();
  const NetSpec& s = model.params.spec;
  std::filesystem::create_directories(dir);

  std::vector<char> blob;
  io::KeyValues kv;
  kv.set("format", "ief-checkpoint");
  kv.set("format_version", std::to_string(kFormatVersion));
  kv.set("width", std::to_string(s.width));
  kv.set("height", std::to_string(s.height));
  kv.set("image_channels", std::to_string(s.image_channels));
  kv.set("in_channels", std::to_string(s.in_channels));
  kv.set("conv1", std::to_string(s.conv1));
  kv.set("conv2", std::to_string(s.conv2));
  kv.set("hidden", std::to_string(s.hidden));
  kv.set("outputs", std::to_string(s.outputs));
  kv.set("updates", std::to_string(model.params.version));
  kv.set("sigma", io::format_double(model.sigma));
  kv.set("keypoints", std::to_string(model.layout.keypoints));
  kv.set("rendered", ints_text(model.layout.rendered));
  kv.set("predicted", ints_text(model.layout.predicted));
  kv.set("given", ints_text(model.layout.given));
  std::vector<std::string> init;
  for (std::size_t k = 0; k < model.init.size(); ++k) {
    init.push_back(io::format_double(model.init.points[k].x) + " " +
                   io::format_double(model.init.points[k].y) + " " +
                   (model.init.mask[k] ? "1" : "0"));
  }
  kv.set("init_pose", io::join(init, ','));

  auto put = [&](const char* group, std::size_t i, const Tensor<float>& t) {
    const std::string key = std::string(group) + "." + std::to_string(i);
    std::vector<std::string> shape;
    for (int d : t.shape) shape.push_back(std::to_string(d));
    kv.set(key + ".name", t.name);
    kv.set(key + ".shape", io::join(shape, 'x'));
    kv.set(key + ".offset", std::to_string(blob.size()));
    io::append_f32le(blob, t.values);
  };
  kv.set("tensors", std::to_string(model.params.weights.size()));
  for (std::size_t i = 0; i < model.params.weights.size(); ++i) put("weight", i, model.params.weights[i]);
  for (std::size_t i = 0; i < model.params.momentum.size(); ++i) put("momentum", i, model.params.momentum[i]);
  kv.set("blob_bytes", std::to_string(blob.size()));
  kv.set("blob_crc32", io::hex32(io::crc32(blob)));

  io::write_bytes(dir / "tensors.bin", blob);
  io::write_text(dir / "manifest.txt", kv.to_string());
}

Model load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("checkpoint directory " + dir.string() + " does not exist");
  }
  const io::KeyValues kv = io::KeyValues::parse(io::read_text(dir / "manifest.txt"));
  if (!kv.has("format") || kv.get("format") != "ief-checkpoint") {
    throw VersionMismatchError(dir.string() + " is not a checkpoint directory");
  }
  if (kv.get("format_version") != std::to_string(kFormatVersion)) {
    throw VersionMismatchError("checkpoint format version " + kv.get("format_version") +
                               ", expected " + std::to_string(kFormatVersion));
  }
  const std::vector<char> blob = io::read_bytes(dir / "tensors.bin");
  const std::size_t declared = std::size_t(io::parse_u64(kv.get("blob_bytes")));
  if (blob.size() < declared) {
    throw TruncatedBlobError("tensors.bin holds " + std::to_string(blob.size()) + " bytes, expected " +
                             std::to_string(declared));
  }
  if (blob.size() != declared) throw StructuralError("tensors.bin is larger than declared");
  if (io::hex32(io::crc32(blob)) != kv.get("blob_crc32")) {
    throw ChecksumError("checksum mismatch in tensors.bin");
  }

  Model m;
  NetSpec s;
  s.width = int(io::parse_int(kv.get("width")));
  s.height = int(io::parse_int(kv.get("height")));
  s.image_channels = int(io::parse_int(kv.get("image_channels")));
  s.in_channels = int(io::parse_int(kv.get("in_channels")));
  s.conv1 = int(io::parse_int(kv.get("conv1")));
  s.conv2 = int(io::parse_int(kv.get("conv2")));
  s.hidden = int(io::parse_int(kv.get("hidden")));
  s.outputs = int(io::parse_int(kv.get("outputs")));
  s.validate();
  m.sigma = io::parse_double(kv.get("sigma"));
  m.layout.keypoints = int(io::parse_int(kv.get("keypoints")));
  m.layout.rendered = parse_ints(kv.get("rendered"));
  m.layout.predicted = parse_ints(kv.get("predicted"));
  m.layout.given = parse_ints(kv.get("given"));
  m.layout.validate();
  if (s.in_channels != s.image_channels + int(m.layout.rendered.size()) ||
      s.outputs != 2 * int(m.layout.predicted.size())) {
    throw StructuralError("checkpoint network shape disagrees with its keypoint layout");
  }
  for (const std::string& entry : io::split(kv.get("init_pose"), ',')) {
    const auto f = io::split(entry, ' ');
    if (f.size() != 3) throw StructuralError("malformed init_pose entry '" + entry + "'");
    m.init.points.push_back({io::parse_double(f[0]), io::parse_double(f[1])});
    m.init.mask.push_back(f[2] == "1");
  }
  if (int(m.init.size()) != m.layout.keypoints) {
    throw StructuralError("checkpoint init pose has the wrong keypoint count");
  }

  m.params = zero_params<float>(s);
  if (std::size_t(io::parse_int(kv.get("tensors"))) != m.params.weights.size()) {
    throw StructuralError("checkpoint tensor count disagrees with the network");
  }
  auto take = [&](const char* group, std::size_t i, Tensor<float>& t) {
    const std::string key = std::string(group) + "." + std::to_string(i);
    if (kv.get(key + ".name") != t.name) {
      throw StructuralError(key + " is " + kv.get(key + ".name") + ", expected " + t.name);
    }
    if (parse_ints(kv.get(key + ".shape"), 'x') != t.shape) {
      throw StructuralError(key + " (" + t.name + ") has shape " + kv.get(key + ".shape"));
    }
    const std::size_t offset = std::size_t(io::parse_u64(kv.get(key + ".offset")));
    if (offset + t.size() * 4 > blob.size()) {
      throw TruncatedBlobError(key + " (" + t.name + ") runs past the end of tensors.bin");
    }
    io::read_f32le(std::span<const char>(blob).subspan(offset, t.size() * 4), t.values);
  };
  for (std::size_t i = 0; i < m.params.weights.size(); ++i) take("weight", i, m.params.weights[i]);
  for (std::size_t i = 0; i < m.params.momentum.size(); ++i) take("momentum", i, m.params.momentum[i]);
  m.params.version = io::parse_u64(kv.get("updates"));
  return m;
}

}  // namespace ief
