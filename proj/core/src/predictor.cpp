// SPDX-License-Identifier: Apache-2.0

#include "ief/predictor.hpp"

#include <Eigen/Core>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif
#include <algorithm>
#include <cmath>
#include <limits>

#include "ief/errors.hpp"

namespace ief {

namespace {

// Far Gaussian tails and tiny activations produce subnormal floats, which
// are roughly 100x slower on x86. They are treated as zero inside the passes.
class FlushSubnormals {
 public:
#if defined(__SSE__)
  FlushSubnormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushSubnormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

template <typename S>
bool all_finite(const AlignedVector<S>& v) {
  return Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(v.data(), Eigen::Index(v.size())).allFinite();
}

template <typename S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatC = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename S>
using MapR = Eigen::Map<MatR<S>>;
template <typename S>
using CMapR = Eigen::Map<const MatR<S>>;
template <typename S>
using MapC = Eigen::Map<MatC<S>>;
template <typename S>
using CMapC = Eigen::Map<const MatC<S>>;

// 3x3, pad 1, stride 1. Row (c, ky, kx) of `cols` holds channel c shifted by
// (ky - 1, kx - 1). Padding entries are written once when the buffer is
// (re)shaped and never touched again.
template <typename In, typename S>
void im2col(const In* in, int channels, int h, int w, AlignedVector<S>& cols, std::array<int, 3>& shape) {
  const std::size_t hw = std::size_t(h) * w;
  const std::array<int, 3> want{channels, h, w};
  if (shape != want || cols.size() != std::size_t(channels) * 9 * hw) {
    cols.assign(std::size_t(channels) * 9 * hw, S(0));
    shape = want;
  }
  for (int c = 0; c < channels; ++c) {
    const In* plane = in + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        S* row = cols.data() + (std::size_t(c) * 9 + ky * 3 + kx) * hw;
        const int dy = ky - 1, dx = kx - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const In* src = plane + std::size_t(y + dy) * w + dx;
          S* dst = row + std::size_t(y) * w;
          for (int x = x0; x < x1; ++x) dst[x] = static_cast<S>(src[x]);
        }
      }
    }
  }
}

template <typename S>
void bias_relu(S* v, const S* bias, int channels, std::size_t plane) {
  for (int c = 0; c < channels; ++c) {
    S* p = v + c * plane;
    const S b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) {
      const S x = p[i] + b;
      p[i] = x > S(0) ? x : S(0);
    }
  }
}

template <typename S>
void col2im_add(const S* cols, int channels, int h, int w, S* out) {
  const std::size_t hw = std::size_t(h) * w;
  for (int c = 0; c < channels; ++c) {
    S* plane = out + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const S* row = cols + (std::size_t(c) * 9 + ky * 3 + kx) * hw;
        const int dy = ky - 1, dx = kx - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          S* dst = plane + std::size_t(y + dy) * w + dx;
          const S* src = row + std::size_t(y) * w;
          for (int x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

// 2x2 max-pool, stride 2. First maximum in row-major window order wins.
template <typename S>
void maxpool(const S* in, int channels, int h, int w, S* out, std::int32_t* arg) {
  const int oh = h / 2, ow = w / 2;
  for (int c = 0; c < channels; ++c) {
    const S* plane = in + std::size_t(c) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::int32_t best = (2 * y) * w + 2 * x;
        S v = plane[best];
        const std::int32_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::int32_t i : cand) {
          if (plane[i] > v) {
            v = plane[i];
            best = i;
          }
        }
        const std::size_t o = (std::size_t(c) * oh + y) * ow + x;
        out[o] = v;
        arg[o] = best;
      }
    }
  }
}

template <typename S>
void unpool_add(const S* grad, const std::int32_t* arg, int channels, int h, int w, S* out) {
  const std::size_t pooled = std::size_t(h / 2) * (w / 2);
  for (int c = 0; c < channels; ++c) {
    S* plane = out + std::size_t(c) * h * w;
    for (std::size_t i = 0; i < pooled; ++i) {
      plane[arg[c * pooled + i]] += grad[c * pooled + i];
    }
  }
}

template <typename S>
void relu_inplace(S* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = v[i] > S(0) ? v[i] : S(0);
}

template <typename S>
Tensor<S> make_tensor(std::string name, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return Tensor<S>{std::move(name), std::move(shape), AlignedVector<S>(n, S(0))};
}

template <typename S>
std::vector<Tensor<S>> zero_tensors(const NetSpec& s) {
  std::vector<Tensor<S>> t;
  t.push_back(make_tensor<S>("conv1.weight", {s.conv1, s.in_channels, 3, 3}));
  t.push_back(make_tensor<S>("conv1.bias", {s.conv1}));
  t.push_back(make_tensor<S>("conv2.weight", {s.conv2, s.conv1, 3, 3}));
  t.push_back(make_tensor<S>("conv2.bias", {s.conv2}));
  t.push_back(make_tensor<S>("fc1.weight", {s.hidden, s.pooled_features()}));
  t.push_back(make_tensor<S>("fc1.bias", {s.hidden}));
  t.push_back(make_tensor<S>("fc2.weight", {s.outputs, s.hidden}));
  t.push_back(make_tensor<S>("fc2.bias", {s.outputs}));
  return t;
}

template <typename S>
void check_shapes(const PredictorParams<S>& p) {
  p.spec.validate();
  if (p.weights.size() != kParamTensorCount) throw StructuralError("predictor: wrong tensor count");
  const auto expected = zero_tensors<S>(p.spec);
  for (int i = 0; i < kParamTensorCount; ++i) {
    if (p.weights[i].shape != expected[i].shape || p.weights[i].size() != expected[i].size()) {
      throw StructuralError("predictor: tensor " + expected[i].name + " has the wrong shape");
    }
  }
}

template <typename S>
S loss_of(const std::vector<S>& out, const Correction& target, const std::vector<bool>& mask) {
  return loss_and_grad<S>(out, target, mask).loss;
}

}  // namespace

void NetSpec::validate() const {
  if (width <= 0 || height <= 0 || width % 4 != 0 || height % 4 != 0) {
    throw StructuralError("net spec: width and height must be positive multiples of 4");
  }
  if (image_channels < 0 || in_channels <= 0 || image_channels > in_channels || conv1 <= 0 ||
      conv2 <= 0 || hidden <= 0 || outputs <= 0 || outputs % 2 != 0) {
    throw StructuralError("net spec: invalid channel or output counts");
  }
}

template <typename S>
std::size_t PredictorParams<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : weights) n += t.size();
  return n;
}

template <typename S>
template <typename Other>
PredictorParams<Other> PredictorParams<S>::cast() const {
  PredictorParams<Other> out;
  out.spec = spec;
  out.version = version;
  auto convert = [](const std::vector<Tensor<S>>& src) {
    std::vector<Tensor<Other>> dst;
    for (const auto& t : src) {
      dst.push_back({t.name, t.shape, AlignedVector<Other>(t.values.begin(), t.values.end())});
    }
    return dst;
  };
  out.weights = convert(weights);
  out.momentum = convert(momentum);
  return out;
}

template <typename S>
PredictorParams<S> zero_params(const NetSpec& spec) {
  spec.validate();
  PredictorParams<S> p;
  p.spec = spec;
  p.weights = zero_tensors<S>(spec);
  p.momentum = zero_tensors<S>(spec);
  return p;
}

template <typename S>
PredictorParams<S> init_params(const NetSpec& spec, Rng& rng, double heatmap_std) {
  PredictorParams<S> p = zero_params<S>(spec);
  auto fill = [&](Tensor<S>& t, double std) {
    for (S& v : t.values) v = static_cast<S>(rng.normal(0.0, std));
  };

  Tensor<S>& w1 = p.weights[kConv1W];
  const double image_std = std::sqrt(2.0 / (9.0 * spec.in_channels));
  for (int o = 0; o < spec.conv1; ++o) {
    for (int c = 0; c < spec.in_channels; ++c) {
      const double std = c < spec.image_channels ? image_std : heatmap_std;
      for (int k = 0; k < 9; ++k) {
        w1.values[(std::size_t(o) * spec.in_channels + c) * 9 + k] = static_cast<S>(rng.normal(0.0, std));
      }
    }
  }
  fill(p.weights[kConv2W], std::sqrt(2.0 / (9.0 * spec.conv1)));
  fill(p.weights[kFc1W], std::sqrt(2.0 / spec.pooled_features()));
  fill(p.weights[kFc2W], std::sqrt(1.0 / spec.hidden));
  return p;
}

template <typename S>
void forward_batch(const PredictorParams<S>& params, std::span<const AugmentedInput> inputs,
                   ForwardCache<S>& cache) {
  const FlushSubnormals ftz;
  check_shapes(params);
  const NetSpec& s = params.spec;
  const int batch = static_cast<int>(inputs.size());
  if (batch == 0) throw UsageError("forward: empty batch");
  for (const auto& x : inputs) {
    if (x.width != s.width || x.height != s.height || x.channels != s.in_channels ||
        x.data.size() != std::size_t(s.width) * s.height * s.in_channels) {
      throw StructuralError("forward: input is " + std::to_string(x.width) + "x" +
                            std::to_string(x.height) + "x" + std::to_string(x.channels) +
                            ", network expects " + std::to_string(s.width) + "x" +
                            std::to_string(s.height) + "x" + std::to_string(s.in_channels));
    }
  }

  const int h1 = s.height, w1 = s.width;
  const int h2 = h1 / 2, w2 = w1 / 2;
  const std::size_t hw1 = std::size_t(h1) * w1, hw2 = std::size_t(h2) * w2;
  const std::size_t hw3 = hw2 / 4;
  const int feat = s.pooled_features();

  cache.batch = batch;
  cache.owner = &params;
  cache.version = params.version;
  for (auto* v : {&cache.act1, &cache.pool1, &cache.act2}) v->resize(batch);
  cache.inputs.resize(batch);
  cache.arg1.resize(batch);
  cache.arg2.resize(batch);
  cache.features.assign(std::size_t(feat) * batch, S(0));

  CMapR<S> wc1(params.weights[kConv1W].values.data(), s.conv1, s.in_channels * 9);
  CMapR<S> wc2(params.weights[kConv2W].values.data(), s.conv2, s.conv1 * 9);

  for (int b = 0; b < batch; ++b) {
    cache.inputs[b].assign(inputs[b].data.begin(), inputs[b].data.end());
    im2col(inputs[b].data.data(), s.in_channels, h1, w1, cache.cols1, cache.cols1_shape);
    auto& a1 = cache.act1[b];
    a1.resize(std::size_t(s.conv1) * hw1);
    MapR<S>(a1.data(), s.conv1, hw1).noalias() = wc1 * CMapR<S>(cache.cols1.data(), s.in_channels * 9, hw1);
    bias_relu(a1.data(), params.weights[kConv1B].values.data(), s.conv1, hw1);

    cache.pool1[b].resize(std::size_t(s.conv1) * hw2);
    cache.arg1[b].resize(cache.pool1[b].size());
    maxpool(a1.data(), s.conv1, h1, w1, cache.pool1[b].data(), cache.arg1[b].data());

    im2col(cache.pool1[b].data(), s.conv1, h2, w2, cache.cols2, cache.cols2_shape);
    auto& a2 = cache.act2[b];
    a2.resize(std::size_t(s.conv2) * hw2);
    MapR<S>(a2.data(), s.conv2, hw2).noalias() = wc2 * CMapR<S>(cache.cols2.data(), s.conv1 * 9, hw2);
    bias_relu(a2.data(), params.weights[kConv2B].values.data(), s.conv2, hw2);

    cache.arg2[b].resize(std::size_t(s.conv2) * hw3);
    maxpool(a2.data(), s.conv2, h2, w2, cache.features.data() + std::size_t(b) * feat,
            cache.arg2[b].data());
  }

  CMapR<S> wf1(params.weights[kFc1W].values.data(), s.hidden, feat);
  CMapR<S> wf2(params.weights[kFc2W].values.data(), s.outputs, s.hidden);
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> bf1(params.weights[kFc1B].values.data(), s.hidden);
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> bf2(params.weights[kFc2B].values.data(), s.outputs);

  cache.hidden.resize(std::size_t(s.hidden) * batch);
  MapC<S> hid(cache.hidden.data(), s.hidden, batch);
  hid.noalias() = wf1 * CMapC<S>(cache.features.data(), feat, batch);
  hid.colwise() += bf1;
  relu_inplace(cache.hidden.data(), cache.hidden.size());

  cache.output.resize(std::size_t(s.outputs) * batch);
  MapC<S> out(cache.output.data(), s.outputs, batch);
  out.noalias() = wf2 * hid;
  out.colwise() += bf2;
}

template <typename S>
std::vector<S> forward(const PredictorParams<S>& params, const AugmentedInput& input, ForwardCache<S>& cache) {
  forward_batch<S>(params, std::span<const AugmentedInput>(&input, 1), cache);
  return std::vector<S>(cache.output.begin(), cache.output.end());
}

template <typename S>
LossAndGrad<S> loss_and_grad(std::span<const S> predicted, const Correction& target,
                             const std::vector<bool>& mask) {
  const std::size_t k = target.size();
  if (predicted.size() != 2 * k || mask.size() != k) {
    throw StructuralError("loss_and_grad: " + std::to_string(predicted.size()) + " outputs for " +
                          std::to_string(k) + " keypoints and " + std::to_string(mask.size()) +
                          " mask entries");
  }
  LossAndGrad<S> r;
  r.grad.assign(2 * k, S(0));
  for (std::size_t i = 0; i < k; ++i) {
    if (!mask[i]) continue;
    const S ex = predicted[2 * i] - static_cast<S>(target.deltas[i].x);
    const S ey = predicted[2 * i + 1] - static_cast<S>(target.deltas[i].y);
    r.loss += ex * ex + ey * ey;
    r.grad[2 * i] = S(2) * ex;
    r.grad[2 * i + 1] = S(2) * ey;
  }
  return r;
}

template <typename S>
std::vector<Tensor<S>> backward(const PredictorParams<S>& params, const ForwardCache<S>& cache,
                                std::span<const S> output_grad) {
  const FlushSubnormals ftz;
  if (cache.batch == 0 || cache.owner == nullptr) throw UsageError("backward: no forward cache");
  if (cache.owner != &params || cache.version != params.version) {
    throw UsageError("backward: forward cache is stale (parameters changed since forward)");
  }
  const NetSpec& s = params.spec;
  const int batch = cache.batch;
  if (output_grad.size() != std::size_t(s.outputs) * batch) {
    throw StructuralError("backward: output gradient has the wrong size");
  }

  const int h1 = s.height, w1 = s.width;
  const int h2 = h1 / 2, w2 = w1 / 2;
  const std::size_t hw1 = std::size_t(h1) * w1, hw2 = std::size_t(h2) * w2;
  const int feat = s.pooled_features();

  std::vector<Tensor<S>> g = zero_tensors<S>(s);

  const AlignedVector<S> dout_buf(output_grad.begin(), output_grad.end());
  CMapC<S> dout(dout_buf.data(), s.outputs, batch);
  CMapC<S> hid(cache.hidden.data(), s.hidden, batch);
  MapR<S>(g[kFc2W].values.data(), s.outputs, s.hidden).noalias() = dout * hid.transpose();
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(g[kFc2B].values.data(), s.outputs) = dout.rowwise().sum();

  MatC<S> dhid = CMapR<S>(params.weights[kFc2W].values.data(), s.outputs, s.hidden).transpose() * dout;
  dhid = dhid.cwiseProduct((hid.array() > S(0)).template cast<S>().matrix());

  CMapC<S> features(cache.features.data(), feat, batch);
  MapR<S>(g[kFc1W].values.data(), s.hidden, feat).noalias() = dhid * features.transpose();
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(g[kFc1B].values.data(), s.hidden) = dhid.rowwise().sum();
  MatC<S> dfeat = CMapR<S>(params.weights[kFc1W].values.data(), s.hidden, feat).transpose() * dhid;

  MapR<S> gwc1(g[kConv1W].values.data(), s.conv1, s.in_channels * 9);
  MapR<S> gwc2(g[kConv2W].values.data(), s.conv2, s.conv1 * 9);
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gbc1(g[kConv1B].values.data(), s.conv1);
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gbc2(g[kConv2B].values.data(), s.conv2);
  CMapR<S> wc2(params.weights[kConv2W].values.data(), s.conv2, s.conv1 * 9);

  AlignedVector<S> dact2, dcols2, dpool1, dact1;
  for (int b = 0; b < batch; ++b) {
    dact2.assign(std::size_t(s.conv2) * hw2, S(0));
    unpool_add(dfeat.col(b).data(), cache.arg2[b].data(), s.conv2, h2, w2, dact2.data());
    const auto& a2 = cache.act2[b];
    for (std::size_t i = 0; i < dact2.size(); ++i) {
      if (!(a2[i] > S(0))) dact2[i] = S(0);
    }
    MapR<S> d2(dact2.data(), s.conv2, hw2);
    im2col(cache.pool1[b].data(), s.conv1, h2, w2, cache.cols2, cache.cols2_shape);
    gwc2.noalias() += d2 * CMapR<S>(cache.cols2.data(), s.conv1 * 9, hw2).transpose();
    gbc2 += d2.rowwise().sum();

    dcols2.resize(std::size_t(s.conv1) * 9 * hw2);
    MapR<S>(dcols2.data(), s.conv1 * 9, hw2).noalias() = wc2.transpose() * d2;
    dpool1.assign(std::size_t(s.conv1) * hw2, S(0));
    col2im_add(dcols2.data(), s.conv1, h2, w2, dpool1.data());

    dact1.assign(std::size_t(s.conv1) * hw1, S(0));
    unpool_add(dpool1.data(), cache.arg1[b].data(), s.conv1, h1, w1, dact1.data());
    const auto& a1 = cache.act1[b];
    for (std::size_t i = 0; i < dact1.size(); ++i) {
      if (!(a1[i] > S(0))) dact1[i] = S(0);
    }
    MapR<S> d1(dact1.data(), s.conv1, hw1);
    im2col(cache.inputs[b].data(), s.in_channels, h1, w1, cache.cols1, cache.cols1_shape);
    gwc1.noalias() += d1 * CMapR<S>(cache.cols1.data(), s.in_channels * 9, hw1).transpose();
    gbc1 += d1.rowwise().sum();
  }
  return g;
}

template <typename S>
void sgd_update(PredictorParams<S>& params, const std::vector<Tensor<S>>& grads, double learning_rate,
                double momentum) {
  if (grads.size() != params.weights.size()) throw StructuralError("sgd_update: tensor count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != params.weights[i].size()) {
      throw StructuralError("sgd_update: gradient for " + params.weights[i].name + " has the wrong size");
    }
    if (!all_finite(grads[i].values)) {
      throw DivergenceError("sgd_update: non-finite gradient in " + params.weights[i].name);
    }
  }
  const S lr = static_cast<S>(learning_rate);
  const S mu = static_cast<S>(momentum);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& w = params.weights[i].values;
    auto& m = params.momentum[i].values;
    const auto& g = grads[i].values;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = mu * m[j] + g[j];
      w[j] -= lr * m[j];
    }
    if (!all_finite(w)) throw DivergenceError("sgd_update: non-finite weight in " + params.weights[i].name);
  }
  ++params.version;
}

GradientCheckResult gradient_check(const PredictorParams<double>& params, const AugmentedInput& input,
                                   const Correction& target, const std::vector<bool>& mask,
                                   double epsilon, int samples, Rng& rng) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw ValidationError("gradient_check: epsilon outside [1e-7, 1e-3]");
  if (samples <= 0) throw ValidationError("gradient_check: need at least one sample");

  ForwardCache<double> cache;
  const auto out = forward(params, input, cache);
  const auto lg = loss_and_grad<double>(out, target, mask);
  const auto grads = backward<double>(params, cache, lg.grad);

  PredictorParams<double> probe = params;
  GradientCheckResult result;
  ForwardCache<double> scratch;
  for (int n = 0; n < samples; ++n) {
    const std::size_t t = rng.below(probe.weights.size());
    auto& values = probe.weights[t].values;
    const std::size_t i = rng.below(values.size());
    const double original = values[i];

    values[i] = original + epsilon;
    const double plus = loss_of(forward(probe, input, scratch), target, mask);
    values[i] = original - epsilon;
    const double minus = loss_of(forward(probe, input, scratch), target, mask);
    values[i] = original;

    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double analytic = grads[t].values[i];
    const double rel = std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
    ++result.checked;
    if (result.worst_parameter.empty() || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = probe.weights[t].name + "[" + std::to_string(i) + "]";
    }
  }
  return result;
}

#define IEF_INSTANTIATE(S)                                                                         \
  template struct PredictorParams<S>;                                                              \
  template PredictorParams<S> zero_params<S>(const NetSpec&);                                      \
  template PredictorParams<S> init_params<S>(const NetSpec&, Rng&, double);                        \
  template void forward_batch<S>(const PredictorParams<S>&, std::span<const AugmentedInput>,       \
                                 ForwardCache<S>&);                                                \
  template std::vector<S> forward<S>(const PredictorParams<S>&, const AugmentedInput&,             \
                                     ForwardCache<S>&);                                            \
  template LossAndGrad<S> loss_and_grad<S>(std::span<const S>, const Correction&,                  \
                                           const std::vector<bool>&);                              \
  template std::vector<Tensor<S>> backward<S>(const PredictorParams<S>&, const ForwardCache<S>&,   \
                                              std::span<const S>);                                 \
  template void sgd_update<S>(PredictorParams<S>&, const std::vector<Tensor<S>>&, double, double);

IEF_INSTANTIATE(float)
IEF_INSTANTIATE(double)
#undef IEF_INSTANTIATE

template PredictorParams<double> PredictorParams<float>::cast<double>() const;
template PredictorParams<float> PredictorParams<double>::cast<float>() const;
template PredictorParams<float> PredictorParams<float>::cast<float>() const;
template PredictorParams<double> PredictorParams<double>::cast<double>() const;

}  // namespace ief
