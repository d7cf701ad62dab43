#include <gtest/gtest.h>

#include <cmath>

#include "htr/layers.hpp"
#include "test_util.hpp"

namespace htr {
namespace {

using testing::gradient_check;
using testing::random_tensor;
using testing::weighted_sum;

// Direct six-loop cross-correlation over an (H, W, Cin) image.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2DSpec& s) {
  const Index h = x.dim(0), wd = x.dim(1), cin = x.dim(2), cout = s.out_channels;
  const Index oh = s.out_h(h), ow = s.out_w(wd);
  Index pt = 0, pl = 0;
  if (s.padding == Padding::same) {
    pt = std::max<Index>((oh - 1) * s.stride_h + s.kernel_h - h, 0) / 2;
    pl = std::max<Index>((ow - 1) * s.stride_w + s.kernel_w - wd, 0) / 2;
  }
  Tensor out({oh, ow, cout});
  for (Index oy = 0; oy < oh; ++oy)
    for (Index ox = 0; ox < ow; ++ox)
      for (Index co = 0; co < cout; ++co) {
        double acc = b[co];
        for (Index ky = 0; ky < s.kernel_h; ++ky)
          for (Index kx = 0; kx < s.kernel_w; ++kx)
            for (Index ci = 0; ci < cin; ++ci) {
              const Index iy = oy * s.stride_h + ky - pt, ix = ox * s.stride_w + kx - pl;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += x.at({iy, ix, ci}) * w.at({ky, kx, ci, co});
            }
        out.at({oy, ox, co}) = acc;
      }
  return out;
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

TEST(Conv2DTest, OneByOneIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor(rng, {4, 5, 3});
  Tensor w({1, 1, 3, 3});
  for (Index c = 0; c < 3; ++c) w.at({0, 0, c, c}) = 1.0;
  Graph g;
  const Conv2DSpec spec{1, 1, 3, 3, 1, 1, Padding::same};
  const Tensor y = conv2d(g.constant(x), spec, g.constant(w), g.constant(Tensor({3}))).value();
  EXPECT_EQ(y, x);
}

TEST(Conv2DTest, OnesKernelOnConstantImageSumsToNine) {
  Graph g;
  const Conv2DSpec spec{3, 3, 1, 1, 1, 1, Padding::valid};
  const Tensor y = conv2d(g.constant(Tensor({5, 5, 1}, 1.0)), spec, g.constant(Tensor({3, 3, 1, 1}, 1.0)),
                          g.constant(Tensor({1}))).value();
  ASSERT_EQ(y.shape(), (Shape{3, 3, 1}));
  for (double v : y.values()) EXPECT_EQ(v, 9.0);
}

TEST(Conv2DTest, MatchesNaiveLoopOracle) {
  Rng rng(7);
  for (Padding pad : {Padding::valid, Padding::same}) {
    for (Index stride : {1, 2}) {
      const Conv2DSpec spec{3, 3, 2, 4, stride, stride, pad};
      const Tensor x = random_tensor(rng, {6, 6, 2});
      const Tensor w = random_tensor(rng, spec.weight_shape());
      const Tensor b = random_tensor(rng, {4});
      Graph g;
      const Tensor y = conv2d(g.constant(x), spec, g.constant(w), g.constant(b)).value();
      const Tensor expected = naive_conv(x, w, b, spec);
      ASSERT_EQ(y.shape(), expected.shape());
      for (Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected[i], 1e-12);
    }
  }
}

TEST(Conv2DTest, BatchedEqualsPerImage) {
  Rng rng(8);
  const Conv2DSpec spec{3, 2, 2, 3, 2, 1, Padding::same};
  const Tensor x = random_tensor(rng, {3, 5, 4, 2});
  const Tensor w = random_tensor(rng, spec.weight_shape());
  const Tensor b = random_tensor(rng, {3});
  Graph g;
  Var y = conv2d(g.constant(x), spec, g.constant(w), g.constant(b));
  for (Index n = 0; n < 3; ++n) {
    const Tensor single = conv2d(select(g.constant(x), n), spec, g.constant(w), g.constant(b)).value();
    EXPECT_EQ(select(y, n).value(), single);
  }
}

TEST(Conv2DTest, ChannelMismatchIsShapeError) {
  Graph g;
  const Conv2DSpec spec{3, 3, 2, 4};
  EXPECT_THROW(conv2d(g.constant(Tensor({5, 5, 3})), spec, g.constant(Tensor(spec.weight_shape())),
                      g.constant(Tensor({4}))),
               ShapeError);
}

TEST(GatedConvTest, SaturatedGates) {
  Rng rng(9);
  const Conv2DSpec spec{3, 3, 2, 3};
  const Tensor x = random_tensor(rng, {5, 4, 2});
  const Tensor wf = random_tensor(rng, spec.weight_shape());
  const Tensor bf = random_tensor(rng, {3});
  const Tensor wg(spec.weight_shape());
  Graph g;
  const Tensor plain = conv2d(g.constant(x), spec, g.constant(wf), g.constant(bf)).value();
  const Tensor open = gated_conv2d(g.constant(x), spec, g.constant(wf), g.constant(wg), g.constant(bf),
                                   g.constant(Tensor({3}, 50.0))).value();
  const Tensor closed = gated_conv2d(g.constant(x), spec, g.constant(wf), g.constant(wg), g.constant(bf),
                                     g.constant(Tensor({3}, -50.0))).value();
  for (Index i = 0; i < plain.size(); ++i) {
    EXPECT_NEAR(open[i], plain[i], 1e-9);
    EXPECT_NEAR(closed[i], 0.0, 1e-9);
  }
}

TEST(GatedConvTest, MatchesCompositionOfOracles) {
  Rng rng(10);
  const Conv2DSpec spec{3, 3, 2, 3};
  const Tensor x = random_tensor(rng, {6, 5, 2});
  const Tensor wf = random_tensor(rng, spec.weight_shape()), wg = random_tensor(rng, spec.weight_shape());
  const Tensor bf = random_tensor(rng, {3}), bg = random_tensor(rng, {3});
  Graph g;
  const Tensor y = gated_conv2d(g.constant(x), spec, g.constant(wf), g.constant(wg), g.constant(bf),
                                g.constant(bg)).value();
  const Tensor feat = naive_conv(x, wf, bf, spec), gate = naive_conv(x, wg, bg, spec);
  for (Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], feat[i] * sig(gate[i]), 1e-12);
}

TEST(DepthwiseSeparableTest, IdentityPointwiseEqualsDepthwiseStage) {
  Rng rng(12);
  const Conv2DSpec spec{3, 3, 3, 3, 1, 1, Padding::same};
  const Tensor x = random_tensor(rng, {5, 6, 3});
  const Tensor dw = random_tensor(rng, {3, 3, 3});
  const Tensor db = random_tensor(rng, {3});
  Tensor pw({1, 1, 3, 3});
  for (Index c = 0; c < 3; ++c) pw.at({0, 0, c, c}) = 1.0;
  Graph g;
  const Tensor y = depthwise_separable_conv(g.constant(x), spec, g.constant(dw), g.constant(pw),
                                            g.constant(db), g.constant(Tensor({3}))).value();
  const Tensor depth = depthwise_conv2d(g.constant(x), spec, g.constant(dw), g.constant(db)).value();
  for (Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], depth[i], 1e-15);
}

TEST(DepthwiseSeparableTest, SingleChannelEqualsComposedConv) {
  Rng rng(13);
  const Conv2DSpec spec{3, 3, 1, 1, 2, 2, Padding::same};
  const Tensor x = random_tensor(rng, {7, 6, 1});
  const Tensor dw = random_tensor(rng, {3, 3, 1});
  const Tensor pw = random_tensor(rng, {1, 1, 1, 1});
  const Tensor db = random_tensor(rng, {1}), pb = random_tensor(rng, {1});
  // pw * (dw * x + db) + pb == (pw dw) * x + (pw db + pb)
  Tensor kernel({3, 3, 1, 1});
  for (Index i = 0; i < 9; ++i) kernel[i] = dw[i] * pw[0];
  const Tensor bias({1}, {pw[0] * db[0] + pb[0]});
  Graph g;
  const Tensor y = depthwise_separable_conv(g.constant(x), spec, g.constant(dw), g.constant(pw),
                                            g.constant(db), g.constant(pb)).value();
  const Tensor expected = naive_conv(x, kernel, bias, spec);
  ASSERT_EQ(y.shape(), expected.shape());
  for (Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected[i], 1e-12);
}

TEST(DepthwiseSeparableTest, MatchesNaiveLoopOracle) {
  Rng rng(14);
  const Conv2DSpec spec{3, 3, 3, 5, 2, 1, Padding::same};
  const Tensor x = random_tensor(rng, {6, 7, 3});
  const Tensor dw = random_tensor(rng, {3, 3, 3}), pw = random_tensor(rng, {1, 1, 3, 5});
  const Tensor db = random_tensor(rng, {3}), pb = random_tensor(rng, {5});
  Graph g;
  const Tensor y = depthwise_separable_conv(g.constant(x), spec, g.constant(dw), g.constant(pw),
                                            g.constant(db), g.constant(pb)).value();
  // Depthwise stage as a naive per-channel loop, then a 1x1 mixing loop.
  Conv2DSpec single{3, 3, 1, 1, spec.stride_h, spec.stride_w, spec.padding};
  const Index oh = spec.out_h(6), ow = spec.out_w(7);
  Tensor depth({oh, ow, 3});
  for (Index c = 0; c < 3; ++c) {
    Tensor xc({6, 7, 1}), kc({3, 3, 1, 1});
    for (Index i = 0; i < 42; ++i) xc[i] = x[i * 3 + c];
    for (Index i = 0; i < 9; ++i) kc[i] = dw[i * 3 + c];
    const Tensor dc = naive_conv(xc, kc, Tensor({1}, {db[c]}), single);
    for (Index i = 0; i < oh * ow; ++i) depth[i * 3 + c] = dc[i];
  }
  for (Index p = 0; p < oh * ow; ++p)
    for (Index co = 0; co < 5; ++co) {
      double acc = pb[co];
      for (Index ci = 0; ci < 3; ++ci) acc += depth[p * 3 + ci] * pw[ci * 5 + co];
      EXPECT_NEAR(y[p * 5 + co], acc, 1e-12);
    }
}

LSTMParams bind_lstm(Graph& g, const Tensor& wx, const Tensor& wh, const Tensor& b) {
  return {g.constant(wx), g.constant(wh), g.constant(b)};
}

TEST(LstmTest, ZeroWeightsGiveZeroOutput) {
  Rng rng(15);
  const Index f = 3, h = 4;
  Graph g;
  const LSTMParams p = bind_lstm(g, Tensor({f, 4 * h}), Tensor({h, 4 * h}), Tensor({4 * h}));
  const LSTMSpec spec{f, h, Direction::bidirectional};
  const Tensor y = lstm_forward(g.constant(random_tensor(rng, {6, f}, -5, 5)), spec, p, p).value();
  ASSERT_EQ(y.shape(), (Shape{6, 2 * h}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmTest, SingleStepMatchesCellFormula) {
  Rng rng(16);
  const Index f = 3, h = 2;
  const Tensor x = random_tensor(rng, {1, f});
  const Tensor wx = random_tensor(rng, {f, 4 * h}), wh = random_tensor(rng, {h, 4 * h});
  const Tensor b = random_tensor(rng, {4 * h});
  Graph g;
  const Tensor y = lstm(g.constant(x), bind_lstm(g, wx, wh, b), false).value();
  for (Index j = 0; j < h; ++j) {
    auto z = [&](Index block) {
      double acc = b[block * h + j];
      for (Index k = 0; k < f; ++k) acc += x[k] * wx(k, block * h + j);
      return acc;
    };
    const double c = sig(z(0)) * std::tanh(z(2));  // zero previous cell state
    EXPECT_NEAR(y(0, j), sig(z(3)) * std::tanh(c), 1e-14);
  }
}

TEST(LstmTest, PalindromeGivesMirroredHalves) {
  Rng rng(18);
  const Index f = 2, h = 3, steps = 7;
  Tensor x({steps, f});
  for (Index t = 0; t <= steps / 2; ++t)
    for (Index k = 0; k < f; ++k) x(t, k) = x(steps - 1 - t, k) = rng.uniform(-1, 1);
  const Tensor wx = random_tensor(rng, {f, 4 * h}), wh = random_tensor(rng, {h, 4 * h});
  const Tensor b = random_tensor(rng, {4 * h});
  Graph g;
  const LSTMParams p = bind_lstm(g, wx, wh, b);
  const Tensor y = lstm_forward(g.constant(x), {f, h, Direction::bidirectional}, p, p).value();
  for (Index t = 0; t < steps; ++t)
    for (Index j = 0; j < h; ++j) EXPECT_NEAR(y(t, j), y(steps - 1 - t, h + j), 1e-14);
}

TEST(LstmTest, EmptySequenceGivesEmptyOutput) {
  Graph g;
  const LSTMParams p = bind_lstm(g, Tensor({2, 8}), Tensor({2, 8}), Tensor({8}));
  const Tensor y = lstm_forward(g.constant(Tensor({0, 2})), {2, 2, Direction::bidirectional}, p, p).value();
  EXPECT_EQ(y.shape(), (Shape{0, 4}));
}

TEST(LstmTest, BatchedEqualsPerSequence) {
  Rng rng(19);
  const Index f = 3, h = 2;
  const Tensor x = random_tensor(rng, {3, 5, f});
  const Tensor wx = random_tensor(rng, {f, 4 * h}), wh = random_tensor(rng, {h, 4 * h});
  const Tensor b = random_tensor(rng, {4 * h});
  Graph g;
  const LSTMParams p = bind_lstm(g, wx, wh, b);
  Var all = lstm(g.constant(x), p, true);
  for (Index n = 0; n < 3; ++n) {
    const Tensor single = lstm(select(g.constant(x), n), p, true).value();
    const Tensor batched = select(all, n).value();
    for (Index i = 0; i < single.size(); ++i) EXPECT_NEAR(batched[i], single[i], 1e-14);
  }
}

TEST(PoolTest, MaxPoolPicksMaximum) {
  Graph g;
  const Tensor y = maxpool2x2(g.constant(Tensor({2, 2, 1}, {1, 2, 3, 4}))).value();
  EXPECT_EQ(y, Tensor({1, 1, 1}, {4}));
}

TEST(PoolTest, OddDimensionsAreTruncated) {
  Graph g;
  EXPECT_EQ(maxpool2x2(g.constant(Tensor({5, 7, 2}))).value().shape(), (Shape{2, 3, 2}));
  EXPECT_EQ(maxpool2d(g.constant(Tensor({4, 9, 1, 3})), 2, 1).value().shape(), (Shape{4, 4, 1, 3}));
}

TEST(PoolTest, GlobalAverage) {
  Graph g;
  const Tensor y = avgpool_global(g.constant(Tensor({2, 2, 2}, {1, 10, 2, 20, 3, 30, 4, 40}))).value();
  EXPECT_EQ(y, Tensor({2}, {2.5, 25}));
}

TEST(BatchNormTest, UnitRunningStatsAreIdentityAtInference) {
  Rng rng(20);
  const Tensor x = random_tensor(rng, {2, 3, 4, 5}, -2, 2);
  Tensor mean_stat({5}), var_stat({5}, 1.0);
  Graph g;
  const Tensor y = batchnorm(g.constant(x), g.constant(Tensor({5}, 1.0)), g.constant(Tensor({5})), mean_stat,
                             var_stat, false).value();
  for (Index i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-9);
}

TEST(BatchNormTest, TrainingNormalizesAndUpdatesRunningStats) {
  Rng rng(21);
  const Tensor x = random_tensor(rng, {8, 3}, 2, 6);
  Tensor mean_stat({3}), var_stat({3}, 1.0);
  Graph g;
  const Tensor y = batchnorm(g.constant(x), g.constant(Tensor({3}, 1.0)), g.constant(Tensor({3})), mean_stat,
                             var_stat, true).value();
  for (Index c = 0; c < 3; ++c) {
    double m = 0, s = 0, xm = 0;
    for (Index r = 0; r < 8; ++r) {
      m += y(r, c);
      s += y(r, c) * y(r, c);
      xm += x(r, c);
    }
    EXPECT_NEAR(m / 8, 0.0, 1e-12);
    EXPECT_NEAR(s / 8, 1.0, 1e-6);
    EXPECT_NEAR(mean_stat[c], 0.1 * xm / 8, 1e-12);
  }
}

TEST(DropoutTest, ZeroProbabilityAndInferenceAreIdentity) {
  Rng rng(22);
  const Tensor x = random_tensor(rng, {4, 6});
  Graph g;
  Var xv = g.constant(x);
  EXPECT_EQ(dropout(xv, 0.0, true, 1).value(), x);
  EXPECT_EQ(dropout(xv, 0.5, false, 1).value(), x);
}

TEST(DropoutTest, TrainingScalesSurvivors) {
  Graph g;
  const Tensor y = dropout(g.constant(Tensor({1000}, 1.0)), 0.5, true, 99).value();
  int kept = 0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    kept += v > 0;
  }
  EXPECT_GT(kept, 400);
  EXPECT_LT(kept, 600);
}

// Per-layer gradient checks.
TEST(LayerGradientTest, Conv2D) {
  Rng rng(30);
  for (Padding pad : {Padding::same, Padding::valid}) {
    const Conv2DSpec spec{3, 2, 2, 3, 2, 1, pad};
    auto build = [&](Graph&, const std::vector<Var>& v) {
      return weighted_sum(conv2d(v[0], spec, v[1], v[2]), 1);
    };
    EXPECT_LE(gradient_check(build, {random_tensor(rng, {2, 5, 4, 2}), random_tensor(rng, spec.weight_shape()),
                                     random_tensor(rng, {3})}),
              1e-6);
  }
}

TEST(LayerGradientTest, GatedConv) {
  Rng rng(31);
  const Conv2DSpec spec{3, 3, 2, 2};
  auto build = [&](Graph&, const std::vector<Var>& v) {
    return weighted_sum(gated_conv2d(v[0], spec, v[1], v[2], v[3], v[4]), 2);
  };
  EXPECT_LE(gradient_check(build, {random_tensor(rng, {4, 4, 2}), random_tensor(rng, spec.weight_shape()),
                                   random_tensor(rng, spec.weight_shape()), random_tensor(rng, {2}),
                                   random_tensor(rng, {2})}),
            1e-6);
}

TEST(LayerGradientTest, DepthwiseSeparable) {
  Rng rng(32);
  const Conv2DSpec spec{3, 3, 3, 4, 2, 2, Padding::same};
  auto build = [&](Graph&, const std::vector<Var>& v) {
    return weighted_sum(depthwise_separable_conv(v[0], spec, v[1], v[2], v[3], v[4]), 3);
  };
  EXPECT_LE(gradient_check(build, {random_tensor(rng, {2, 5, 5, 3}), random_tensor(rng, {3, 3, 3}),
                                   random_tensor(rng, {1, 1, 3, 4}), random_tensor(rng, {3}),
                                   random_tensor(rng, {4})}),
            1e-6);
}

TEST(LayerGradientTest, MaxPool) {
  Rng rng(33);
  // Distinct values spaced well beyond the finite-difference step.
  Tensor x({1, 4, 5, 2});
  std::vector<double> vals(static_cast<std::size_t>(x.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.1 * static_cast<double>(i);
  rng.shuffle(std::span<double>(vals));
  for (Index i = 0; i < x.size(); ++i) x[i] = vals[static_cast<std::size_t>(i)];
  auto build = [](Graph&, const std::vector<Var>& v) { return weighted_sum(maxpool2d(v[0], 2, 2), 4); };
  EXPECT_LE(gradient_check(build, {x}), 1e-6);
}

TEST(LayerGradientTest, GlobalAveragePool) {
  Rng rng(34);
  auto build = [](Graph&, const std::vector<Var>& v) { return weighted_sum(avgpool_global(v[0]), 5); };
  EXPECT_LE(gradient_check(build, {random_tensor(rng, {2, 3, 4, 3})}), 1e-6);
}

TEST(LayerGradientTest, BatchNormTrainingAndInference) {
  Rng rng(35);
  for (bool training : {true, false}) {
    auto build = [&](Graph&, const std::vector<Var>& v) {
      Tensor rm({3}, 0.2), rv({3}, 1.5);
      return weighted_sum(batchnorm(v[0], v[1], v[2], rm, rv, training), 6);
    };
    EXPECT_LE(gradient_check(build, {random_tensor(rng, {2, 3, 2, 3}), random_tensor(rng, {3}),
                                     random_tensor(rng, {3})}),
              1e-6)
        << "training=" << training;
  }
}

TEST(LayerGradientTest, DenseAndDropout) {
  Rng rng(36);
  auto build = [](Graph&, const std::vector<Var>& v) {
    return weighted_sum(dropout(dense(v[0], v[1], v[2]), 0.3, true, 77), 7);
  };
  EXPECT_LE(gradient_check(build, {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4, 5}),
                                   random_tensor(rng, {5})}),
            1e-6);
}

TEST(LayerGradientTest, LstmBothDirections) {
  Rng rng(37);
  const Index f = 3, h = 2;
  for (int trial = 0; trial < 4; ++trial) {
    auto build = [&](Graph&, const std::vector<Var>& v) {
      const LSTMParams fw{v[1], v[2], v[3]};
      const LSTMParams bw{v[4], v[5], v[6]};
      return weighted_sum(lstm_forward(v[0], {f, h, Direction::bidirectional}, fw, bw), 8);
    };
    EXPECT_LE(gradient_check(build, {random_tensor(rng, {2, 4, f}), random_tensor(rng, {f, 4 * h}),
                                     random_tensor(rng, {h, 4 * h}), random_tensor(rng, {4 * h}),
                                     random_tensor(rng, {f, 4 * h}), random_tensor(rng, {h, 4 * h}),
                                     random_tensor(rng, {4 * h})}),
              1e-6);
  }
}

}  // namespace
}  // namespace htr
