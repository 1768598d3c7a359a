// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ief/errors.hpp"
#include "ief/predictor.hpp"
#include "ief/rng.hpp"

namespace ief {
namespace {

NetSpec small_spec() {
  NetSpec s;
  s.width = 8;
  s.height = 8;
  s.image_channels = 1;
  s.in_channels = 3;
  s.conv1 = 4;
  s.conv2 = 5;
  s.hidden = 7;
  s.outputs = 4;
  return s;
}

AugmentedInput random_input(const NetSpec& s, Rng& rng) {
  AugmentedInput x(s.width, s.height, s.image_channels, s.in_channels - s.image_channels);
  for (float& v : x.data) v = float(rng.uniform());
  return x;
}

// Biases are drawn too so that the ReLUs see both signs.
template <typename S>
PredictorParams<S> random_params(const NetSpec& s, Rng& rng) {
  PredictorParams<S> p = init_params<S>(s, rng);
  for (auto& t : p.weights) {
    if (t.shape.size() == 1) {
      for (S& v : t.values) v = S(rng.normal(0.0, 0.1));
    }
  }
  return p;
}

// Straightforward loop implementation of the reference network.
std::vector<double> naive_forward(const PredictorParams<double>& p, const AugmentedInput& x) {
  const NetSpec& s = p.spec;
  auto conv_relu = [](const std::vector<double>& in, int cin, int h, int w, const Tensor<double>& wt,
                      const Tensor<double>& bias, int cout) {
    std::vector<double> out(std::size_t(cout) * h * w);
    for (int o = 0; o < cout; ++o) {
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          double acc = bias.values[o];
          for (int c = 0; c < cin; ++c) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = y + ky - 1, ix = xx + kx - 1;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += wt.values[((std::size_t(o) * cin + c) * 3 + ky) * 3 + kx] *
                       in[(std::size_t(c) * h + iy) * w + ix];
              }
            }
          }
          out[(std::size_t(o) * h + y) * w + xx] = std::max(0.0, acc);
        }
      }
    }
    return out;
  };
  auto pool = [](const std::vector<double>& in, int c, int h, int w) {
    std::vector<double> out(std::size_t(c) * (h / 2) * (w / 2));
    for (int k = 0; k < c; ++k) {
      for (int y = 0; y < h / 2; ++y) {
        for (int xx = 0; xx < w / 2; ++xx) {
          double m = -std::numeric_limits<double>::infinity();
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              m = std::max(m, in[(std::size_t(k) * h + 2 * y + dy) * w + 2 * xx + dx]);
            }
          }
          out[(std::size_t(k) * (h / 2) + y) * (w / 2) + xx] = m;
        }
      }
    }
    return out;
  };
  auto fc = [](const std::vector<double>& in, const Tensor<double>& wt, const Tensor<double>& bias,
               bool relu) {
    const std::size_t rows = bias.values.size();
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = bias.values[r];
      for (std::size_t c = 0; c < in.size(); ++c) acc += wt.values[r * in.size() + c] * in[c];
      out[r] = relu ? std::max(0.0, acc) : acc;
    }
    return out;
  };
  std::vector<double> in(x.data.begin(), x.data.end());
  auto a1 = conv_relu(in, s.in_channels, s.height, s.width, p.weights[kConv1W], p.weights[kConv1B], s.conv1);
  auto p1 = pool(a1, s.conv1, s.height, s.width);
  auto a2 = conv_relu(p1, s.conv1, s.height / 2, s.width / 2, p.weights[kConv2W], p.weights[kConv2B],
                      s.conv2);
  auto p2 = pool(a2, s.conv2, s.height / 2, s.width / 2);
  auto h = fc(p2, p.weights[kFc1W], p.weights[kFc1B], true);
  return fc(h, p.weights[kFc2W], p.weights[kFc2B], false);
}

double naive_loss(const PredictorParams<double>& p, const AugmentedInput& x, const Correction& t,
                  const std::vector<bool>& mask) {
  auto out = naive_forward(p, x);
  double l = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!mask[k]) continue;
    l += std::pow(out[2 * k] - t.deltas[k].x, 2) + std::pow(out[2 * k + 1] - t.deltas[k].y, 2);
  }
  return l;
}

Correction random_target(std::size_t k, Rng& rng) {
  Correction c = Correction::zeros(k);
  for (Vec2& d : c.deltas) d = {rng.normal(0, 3), rng.normal(0, 3)};
  return c;
}

TEST(Forward, MatchesNaiveImplementation) {
  Rng rng(1);
  const NetSpec s = small_spec();
  for (int n = 0; n < 10; ++n) {
    auto p = random_params<double>(s, rng);
    auto x = random_input(s, rng);
    ForwardCache<double> cache;
    auto got = forward(p, x, cache);
    auto want = naive_forward(p, x);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);

    auto pf = p.cast<float>();
    ForwardCache<float> fcache;
    auto gotf = forward(pf, x, fcache);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(gotf[i], want[i], 1e-4);
  }
}

TEST(Forward, ZeroWeightsGiveZeroOutput) {
  NetSpec s = small_spec();
  s.outputs = 32;
  Rng rng(2);
  auto p = zero_params<float>(s);
  ForwardCache<float> cache;
  auto out = forward(p, random_input(s, rng), cache);
  ASSERT_EQ(out.size(), 32u);
  for (float v : out) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, DeterministicAndBatchConsistent) {
  Rng rng(3);
  const NetSpec s = small_spec();
  auto p = random_params<float>(s, rng);
  std::vector<AugmentedInput> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(random_input(s, rng));
  ForwardCache<float> a, b;
  forward_batch<float>(p, xs, a);
  forward_batch<float>(p, xs, b);
  EXPECT_EQ(a.output, b.output);
  for (int i = 0; i < 5; ++i) {
    ForwardCache<float> one;
    auto single = forward(p, xs[i], one);
    auto batched = a.output_of(i, s.outputs);
    for (int j = 0; j < s.outputs; ++j) EXPECT_NEAR(single[j], batched[j], 1e-5);
  }
}

TEST(Forward, ShapeMismatch) {
  Rng rng(4);
  const NetSpec s = small_spec();
  auto p = random_params<float>(s, rng);
  ForwardCache<float> cache;
  AugmentedInput wrong(8, 8, 1, 3);
  EXPECT_THROW(forward(p, wrong, cache), StructuralError);
  AugmentedInput small(4, 8, 1, 2);
  EXPECT_THROW(forward(p, small, cache), StructuralError);
  EXPECT_THROW(forward_batch<float>(p, {}, cache), UsageError);
}

TEST(LossAndGrad, Examples) {
  std::vector<double> pred{1, 0};
  auto r = loss_and_grad<double>(pred, Correction::zeros(1), {true});
  EXPECT_EQ(r.loss, 1.0);
  EXPECT_EQ(r.grad, (std::vector<double>{2, 0}));

  Correction t{{{1, 0}}};
  r = loss_and_grad<double>(pred, t, {true});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad, (std::vector<double>{0, 0}));

  std::vector<double> pred2{3, -4, 5, 6};
  r = loss_and_grad<double>(pred2, Correction::zeros(2), {false, false});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad, (std::vector<double>(4, 0.0)));

  EXPECT_THROW(loss_and_grad<double>(pred2, Correction::zeros(1), {true}), StructuralError);
}

TEST(Backward, LinearInOutputGradient) {
  Rng rng(5);
  const NetSpec s = small_spec();
  auto p = random_params<double>(s, rng);
  ForwardCache<double> cache;
  forward(p, random_input(s, rng), cache);
  std::vector<double> g(s.outputs), g2(s.outputs), zero(s.outputs, 0.0);
  for (int i = 0; i < s.outputs; ++i) {
    g[i] = rng.normal();
    g2[i] = 2 * g[i];
  }
  auto z = backward<double>(p, cache, zero);
  for (const auto& t : z) {
    for (double v : t.values) EXPECT_EQ(v, 0.0);
  }
  auto a = backward<double>(p, cache, g);
  auto b = backward<double>(p, cache, g2);
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t].shape, p.weights[t].shape);
    for (std::size_t i = 0; i < a[t].size(); ++i) EXPECT_EQ(b[t].values[i], 2 * a[t].values[i]);
  }
}

TEST(Backward, StaleOrMissingCache) {
  Rng rng(6);
  const NetSpec s = small_spec();
  auto p = random_params<double>(s, rng);
  std::vector<double> g(s.outputs, 1.0);
  ForwardCache<double> empty;
  EXPECT_THROW(backward<double>(p, empty, g), UsageError);

  ForwardCache<double> cache;
  forward(p, random_input(s, rng), cache);
  auto grads = backward<double>(p, cache, g);
  sgd_update(p, grads, 1e-3, 0.9);
  EXPECT_THROW(backward<double>(p, cache, g), UsageError);

  auto other = p;
  EXPECT_THROW(backward<double>(other, cache, g), UsageError);
  std::vector<double> short_grad(1, 0.0);
  forward(p, random_input(s, rng), cache);
  EXPECT_THROW(backward<double>(p, cache, short_grad), StructuralError);
}

// Central differences on the loop implementation, independent of both the
// library forward pass and its backward pass.
TEST(Backward, MatchesNaiveFiniteDifferences) {
  Rng rng(7);
  const NetSpec s = small_spec();
  const std::vector<bool> mask{true, true};
  double worst = 0;
  for (int n = 0; n < 6; ++n) {
    auto p = random_params<double>(s, rng);
    auto x = random_input(s, rng);
    auto t = random_target(2, rng);
    ForwardCache<double> cache;
    auto out = forward(p, x, cache);
    auto lg = loss_and_grad<double>(out, t, mask);
    auto grads = backward<double>(p, cache, lg.grad);
    for (int probe = 0; probe < 40; ++probe) {
      const std::size_t ti = rng.below(kParamTensorCount);
      const std::size_t i = rng.below(p.weights[ti].size());
      auto q = p;
      const double w = q.weights[ti].values[i];
      const double eps = 1e-6;
      q.weights[ti].values[i] = w + eps;
      const double up = naive_loss(q, x, t, mask);
      q.weights[ti].values[i] = w - eps;
      const double down = naive_loss(q, x, t, mask);
      const double num = (up - down) / (2 * eps);
      const double ana = grads[ti].values[i];
      const double rel = std::fabs(ana - num) / std::max(1e-12, std::fabs(ana) + std::fabs(num));
      if (std::fabs(ana - num) > 1e-7) worst = std::max(worst, rel);
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(GradientCheck, ReportsSmallErrorOnReferenceNet) {
  Rng rng(8);
  NetSpec s;
  s.in_channels = 8;
  s.outputs = 12;
  auto p = init_params<double>(s, rng);
  auto x = random_input(s, rng);
  auto r = gradient_check(p, x, random_target(6, rng), std::vector<bool>(6, true), 1e-6, 25, rng);
  EXPECT_EQ(r.checked, 25u);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
  EXPECT_THROW(gradient_check(p, x, random_target(6, rng), std::vector<bool>(6, true), 1e-2, 5, rng),
               ValidationError);
}

TEST(GradientCheck, LinearLayerAgreesClosely) {
  // Gradients of the final (linear) layer: the loss is quadratic in them, so
  // central differences are exact up to roundoff.
  Rng rng(9);
  const NetSpec s = small_spec();
  auto p = random_params<double>(s, rng);
  auto x = random_input(s, rng);
  auto t = random_target(2, rng);
  const std::vector<bool> mask{true, true};
  ForwardCache<double> cache;
  auto lg = loss_and_grad<double>(forward(p, x, cache), t, mask);
  auto grads = backward<double>(p, cache, lg.grad);
  for (std::size_t i = 0; i < p.weights[kFc2W].size(); ++i) {
    auto q = p;
    q.weights[kFc2W].values[i] += 1e-4;
    const double up = naive_loss(q, x, t, mask);
    q.weights[kFc2W].values[i] -= 2e-4;
    const double down = naive_loss(q, x, t, mask);
    EXPECT_NEAR((up - down) / 2e-4, grads[kFc2W].values[i], 1e-8);
  }
}

TEST(MaskSoundness, MaskedTargetDoesNotMatter) {
  Rng rng(10);
  const NetSpec s = small_spec();
  auto p = random_params<double>(s, rng);
  auto x = random_input(s, rng);
  auto t = random_target(2, rng);
  const std::vector<bool> mask{true, false};
  ForwardCache<double> cache;
  auto out = forward(p, x, cache);
  auto a = loss_and_grad<double>(out, t, mask);
  auto t2 = t;
  t2.deltas[1] = {1e3, -1e3};
  auto b = loss_and_grad<double>(out, t2, mask);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
  EXPECT_EQ(backward<double>(p, cache, a.grad), backward<double>(p, cache, b.grad));

  // Output weights of the masked keypoint get exactly zero gradient.
  auto g = backward<double>(p, cache, a.grad);
  for (int r = 2; r < 4; ++r) {
    for (int c = 0; c < s.hidden; ++c) EXPECT_EQ(g[kFc2W].values[r * s.hidden + c], 0.0);
    EXPECT_EQ(g[kFc2B].values[r], 0.0);
  }
}

std::vector<Tensor<float>> random_grads(const NetSpec& s, Rng& rng) {
  auto g = zero_params<float>(s).weights;
  for (auto& t : g) {
    for (float& v : t.values) v = float(rng.normal());
  }
  return g;
}

TEST(SgdUpdate, ZeroLearningRateKeepsWeights) {
  Rng rng(11);
  const NetSpec s = small_spec();
  auto p = random_params<float>(s, rng);
  const auto before = p.weights;
  sgd_update(p, random_grads(s, rng), 0.0, 0.9);
  EXPECT_EQ(p.weights, before);
}

TEST(SgdUpdate, PlainStepSubtractsGradient) {
  Rng rng(12);
  const NetSpec s = small_spec();
  auto p = random_params<float>(s, rng);
  const auto before = p.weights;
  const auto g = random_grads(s, rng);
  sgd_update(p, g, 1.0, 0.0);
  for (std::size_t t = 0; t < g.size(); ++t) {
    for (std::size_t i = 0; i < g[t].size(); ++i) {
      EXPECT_EQ(p.weights[t].values[i], before[t].values[i] - g[t].values[i]);
    }
  }
}

TEST(SgdUpdate, MomentumRecurrence) {
  Rng rng(13);
  const NetSpec s = small_spec();
  auto p = random_params<float>(s, rng);
  const auto w0 = p.weights;
  const auto g1 = random_grads(s, rng), g2 = random_grads(s, rng);
  const float lr = 0.125f, mu = 0.5f;
  sgd_update(p, g1, lr, mu);
  sgd_update(p, g2, lr, mu);
  for (std::size_t t = 0; t < g1.size(); ++t) {
    for (std::size_t i = 0; i < g1[t].size(); ++i) {
      const float m1 = g1[t].values[i];
      const float m2 = mu * m1 + g2[t].values[i];
      const float w1 = w0[t].values[i] - lr * m1;
      EXPECT_EQ(p.momentum[t].values[i], m2);
      EXPECT_EQ(p.weights[t].values[i], w1 - lr * m2);
    }
  }
  EXPECT_EQ(p.version, 2u);
}

TEST(SgdUpdate, DeterministicFromIdenticalState) {
  Rng rng(14);
  const NetSpec s = small_spec();
  auto a = random_params<float>(s, rng);
  auto b = a;
  const auto g = random_grads(s, rng);
  sgd_update(a, g, 0.01, 0.9);
  sgd_update(b, g, 0.01, 0.9);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.momentum, b.momentum);
}

TEST(SgdUpdate, NonFiniteGradientNamesTensor) {
  Rng rng(15);
  const NetSpec s = small_spec();
  auto p = random_params<float>(s, rng);
  auto g = random_grads(s, rng);
  g[kConv2B].values[1] = std::numeric_limits<float>::quiet_NaN();
  try {
    sgd_update(p, g, 0.01, 0.9);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2.bias"), std::string::npos);
  }
  g.pop_back();
  EXPECT_THROW(sgd_update(p, g, 0.01, 0.9), StructuralError);
}

TEST(SgdUpdate, SmallStepDoesNotIncreaseBatchLoss) {
  Rng rng(16);
  NetSpec s;
  s.in_channels = 8;
  s.outputs = 12;
  auto p = init_params<float>(s, rng);
  std::vector<AugmentedInput> xs;
  std::vector<Correction> ts;
  for (int i = 0; i < 8; ++i) {
    xs.push_back(random_input(s, rng));
    ts.push_back(random_target(6, rng));
  }
  const std::vector<bool> mask(6, true);
  auto batch_loss = [&](std::vector<float>* grad) {
    ForwardCache<float> cache;
    forward_batch<float>(p, xs, cache);
    double total = 0;
    if (grad) grad->clear();
    for (int i = 0; i < 8; ++i) {
      auto lg = loss_and_grad<float>(cache.output_of(i, s.outputs), ts[i], mask);
      total += lg.loss;
      if (grad) grad->insert(grad->end(), lg.grad.begin(), lg.grad.end());
    }
    if (grad) {
      auto g = backward<float>(p, cache, *grad);
      sgd_update(p, g, 1e-4, 0.9);
    }
    return total;
  };
  std::vector<float> grad;
  const double before = batch_loss(&grad);
  const double after = batch_loss(nullptr);
  EXPECT_LT(after, before);
}

TEST(Params, ReproducibleInitAndExactCast) {
  NetSpec s;
  s.in_channels = 8;
  s.outputs = 12;
  Rng r1(42), r2(42);
  auto a = init_params<float>(s, r1);
  auto b = init_params<float>(s, r2);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.parameter_count(),
            std::size_t(16 * 8 * 9 + 16 + 32 * 16 * 9 + 32 + 128 * 32 * 16 * 16 + 128 + 12 * 128 + 12));
  EXPECT_EQ(a.cast<double>().cast<float>().weights, a.weights);
  for (int t : {kConv1B, kConv2B, kFc1B, kFc2B}) {
    for (float v : a.weights[t].values) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Params, HeatmapChannelStd) {
  NetSpec s;
  s.in_channels = 8;
  s.conv1 = 64;
  Rng rng(43);
  auto p = init_params<double>(s, rng, 0.1);
  double sum2 = 0;
  std::size_t n = 0;
  const auto& w = p.weights[kConv1W].values;
  for (int o = 0; o < s.conv1; ++o) {
    for (int c = s.image_channels; c < s.in_channels; ++c) {
      for (int k = 0; k < 9; ++k) {
        const double v = w[(std::size_t(o) * s.in_channels + c) * 9 + k];
        sum2 += v * v;
        ++n;
      }
    }
  }
  EXPECT_NEAR(std::sqrt(sum2 / n), 0.1, 0.005);
}

TEST(NetSpec, Validation) {
  NetSpec s;
  s.width = 30;
  EXPECT_THROW(s.validate(), StructuralError);
  s = NetSpec{};
  s.outputs = 0;
  EXPECT_THROW(s.validate(), StructuralError);
}

}  // namespace
}  // namespace ief
