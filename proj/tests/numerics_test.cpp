#include <gtest/gtest.h>

#include <cmath>

#include "htr/autodiff.hpp"
#include "test_util.hpp"

namespace htr {
namespace {

using testing::gradient_check;
using testing::random_tensor;
using testing::weighted_sum;

TEST(MatmulTest, IdentityAndProjector) {
  Graph g;
  Var eye = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var m = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(matmul(eye, m).value(), Tensor({2, 2}, {1, 2, 3, 4}));

  Var proj = g.constant(Tensor({2, 2}, {1, 0, 0, 0}));
  Var b = g.constant(Tensor({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(matmul(proj, b).value(), Tensor({2, 2}, {5, 6, 0, 0}));
}

TEST(MatmulTest, MatchesTripleLoop) {
  Rng rng(11);
  const Tensor a = random_tensor(rng, {3, 4});
  const Tensor b = random_tensor(rng, {4, 2});
  Graph g;
  const Tensor c = matmul(g.constant(a), g.constant(b)).value();
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 2; ++j) {
      double acc = 0;
      for (Index k = 0; k < 4; ++k) acc += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), acc, 1e-12);
    }
  }
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] and [2x3]"), std::string::npos) << msg;
  }
}

TEST(BackwardTest, SumGivesOnes) {
  Parameter w{"w", Tensor({2, 3, 2}, 0.7)};
  Graph g;
  Var loss = sum(g.parameter(w));
  g.backward(loss);
  const Tensor grad = g.gradient(w);
  EXPECT_EQ(grad.shape(), w.value.shape());
  for (double v : grad.values()) EXPECT_EQ(v, 1.0);
}

TEST(BackwardTest, HalfSquaredNormGivesInput) {
  Rng rng(3);
  Parameter w{"w", random_tensor(rng, {4, 3})};
  Graph g;
  Var wv = g.parameter(w);
  Var loss = scale(sum(mul(wv, wv)), 0.5);
  g.backward(loss);
  const Tensor grad = g.gradient(w);
  for (Index i = 0; i < grad.size(); ++i) EXPECT_NEAR(grad[i], w.value[i], 1e-15);
}

TEST(BackwardTest, TwoLayerNetMatchesFiniteDifferences) {
  Rng rng(5);
  std::vector<Tensor> leaves = {random_tensor(rng, {4, 3}), random_tensor(rng, {3, 5}),
                                random_tensor(rng, {5}), random_tensor(rng, {5, 2}),
                                random_tensor(rng, {2})};
  auto build = [](Graph& g, const std::vector<Var>& v) {
    Var h = tanh(add_bias(matmul(v[0], v[1]), v[2]));
    Var out = add_bias(matmul(h, v[3]), v[4]);
    return sum(mul(out, out));
  };
  EXPECT_LE(gradient_check(build, leaves), 1e-6);
}

TEST(BackwardTest, GradientCheckDetectsWrongRule) {
  // x^2 with a deliberately wrong derivative (x instead of 2x).
  auto bad_square = [](Var x) {
    Tensor out = x.value();
    out.flat() = out.flat().array().square().matrix();
    const Var in[] = {x};
    return x.graph().record(std::move(out), in, [x](Graph& g, const Tensor& go) {
      if (Tensor* gx = g.grad_target(x)) gx->flat().array() += go.flat().array() * x.value().flat().array();
    }, "bad_square");
  };
  Rng rng(6);
  auto build = [&](Graph&, const std::vector<Var>& v) { return sum(bad_square(v[0])); };
  EXPECT_GT(gradient_check(build, {random_tensor(rng, {3, 3}, 0.5, 1.0)}), 0.1);
}

TEST(BackwardTest, NonScalarLossIsContractError) {
  Parameter w{"w", Tensor({2, 2}, 1.0)};
  Graph g;
  Var x = g.parameter(w);
  EXPECT_THROW(g.backward(x), ContractError);
}

TEST(BackwardTest, UnreachableParametersGetZeroGradients) {
  Parameter used{"used", Tensor({3}, 2.0)};
  Parameter unused{"unused", Tensor({2, 2}, 5.0)};
  Parameter never{"never", Tensor({4}, 1.0)};
  Graph g;
  Var a = g.parameter(used);
  g.parameter(unused);
  g.backward(sum(a));
  const Tensor gu = g.gradient(unused);
  const Tensor gn = g.gradient(never);
  EXPECT_EQ(gu.shape(), unused.value.shape());
  EXPECT_EQ(gn.shape(), never.value.shape());
  EXPECT_EQ(gu.flat().cwiseAbs().sum(), 0.0);
  EXPECT_EQ(gn.flat().cwiseAbs().sum(), 0.0);
}

TEST(SoftmaxTest, SymmetricRowIsUniform) {
  Graph g;
  const Tensor y = softmax_rows(g.constant(Tensor({1, 3}, {0, 0, 0}))).value();
  for (Index j = 0; j < 3; ++j) EXPECT_NEAR(y(0, j), 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTest, LargeLogitsDoNotOverflow) {
  Graph g;
  const Tensor y = softmax_rows(g.constant(Tensor({1, 2}, {1000, 0}))).value();
  EXPECT_TRUE(std::isfinite(y(0, 0)));
  EXPECT_NEAR(y(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(y(0, 1), 0.0, 1e-15);
}

TEST(SoftmaxTest, MatchesDirectFormula) {
  Graph g;
  const Tensor y = softmax_rows(g.constant(Tensor({1, 3}, {1, 2, 3}))).value();
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(y(0, 0), std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(y(0, 1), std::exp(2.0) / z, 1e-12);
  EXPECT_NEAR(y(0, 2), std::exp(3.0) / z, 1e-12);
}

TEST(SoftmaxTest, RowsSumToOneForLargeMagnitudes) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = random_tensor(rng, {4, 7}, -1000.0, 1000.0);
    Graph g;
    const Tensor y = softmax_rows(g.constant(x)).value();
    for (Index r = 0; r < 4; ++r) {
      double s = 0;
      for (Index c = 0; c < 7; ++c) {
        EXPECT_GE(y(r, c), 0.0);
        s += y(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(DeterminismTest, IdenticalInputsGiveBitIdenticalOutputs) {
  Rng rng(23);
  const Tensor a = random_tensor(rng, {5, 6});
  const Tensor b = random_tensor(rng, {6, 3});
  auto run = [&] {
    Graph g;
    return log_softmax_rows(tanh(matmul(g.constant(a), g.constant(b)))).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(PermuteTest, MatchesIndexArithmetic) {
  Rng rng(2);
  const Tensor x = random_tensor(rng, {2, 3, 4, 5});
  const std::vector<int> perm = {0, 2, 1, 3};
  const Tensor y = permute(x, perm);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 3, 5}));
  for (Index a = 0; a < 2; ++a)
    for (Index b = 0; b < 3; ++b)
      for (Index c = 0; c < 4; ++c)
        for (Index d = 0; d < 5; ++d) EXPECT_EQ(y.at({a, c, b, d}), x.at({a, b, c, d}));
}

// Every differentiable op, random shapes, 100 trials each.
struct OpCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> make_leaves;
  std::function<Var(Graph&, const std::vector<Var>&)> apply;
};

Index pick(Rng& rng, Index lo, Index hi) { return lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

std::vector<OpCase> op_cases() {
  auto two_same = [](Rng& rng) {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
    return std::vector<Tensor>{random_tensor(rng, s), random_tensor(rng, s)};
  };
  auto one = [](Rng& rng) {
    return std::vector<Tensor>{random_tensor(rng, {pick(rng, 1, 4), pick(rng, 1, 5)})};
  };
  return {
      {"add", two_same, [](Graph&, const std::vector<Var>& v) { return add(v[0], v[1]); }},
      {"sub", two_same, [](Graph&, const std::vector<Var>& v) { return sub(v[0], v[1]); }},
      {"mul", two_same, [](Graph&, const std::vector<Var>& v) { return mul(v[0], v[1]); }},
      {"scale", one, [](Graph&, const std::vector<Var>& v) { return scale(v[0], -1.7); }},
      {"add_scalar", one, [](Graph&, const std::vector<Var>& v) { return add_scalar(v[0], 0.3); }},
      {"matmul",
       [](Rng& rng) {
         const Index m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
         return std::vector<Tensor>{random_tensor(rng, {m, k}), random_tensor(rng, {k, n})};
       },
       [](Graph&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }},
      {"matmul_last",
       [](Rng& rng) {
         const Index k = pick(rng, 1, 4);
         return std::vector<Tensor>{random_tensor(rng, {2, pick(rng, 1, 3), k}),
                                    random_tensor(rng, {k, pick(rng, 1, 3)})};
       },
       [](Graph&, const std::vector<Var>& v) { return matmul_last(v[0], v[1]); }},
      {"add_bias",
       [](Rng& rng) {
         const Index n = pick(rng, 1, 4);
         return std::vector<Tensor>{random_tensor(rng, {pick(rng, 1, 3), n}), random_tensor(rng, {n})};
       },
       [](Graph&, const std::vector<Var>& v) { return add_bias(v[0], v[1]); }},
      {"sum", one, [](Graph&, const std::vector<Var>& v) { return reshape(sum(v[0]), {1}); }},
      {"mean", one, [](Graph&, const std::vector<Var>& v) { return reshape(mean(v[0]), {1}); }},
      {"relu",
       [](Rng& rng) {
         // Keep samples away from the kink so central differences are valid.
         Tensor t = random_tensor(rng, {pick(rng, 1, 4), pick(rng, 1, 4)});
         for (double& x : t.values()) x = x >= 0 ? x + 0.01 : x - 0.01;
         return std::vector<Tensor>{t};
       },
       [](Graph&, const std::vector<Var>& v) { return relu(v[0]); }},
      {"sigmoid", one, [](Graph&, const std::vector<Var>& v) { return sigmoid(v[0]); }},
      {"tanh", one, [](Graph&, const std::vector<Var>& v) { return tanh(v[0]); }},
      {"softmax_rows", one, [](Graph&, const std::vector<Var>& v) { return softmax_rows(v[0]); }},
      {"log_softmax_rows", one,
       [](Graph&, const std::vector<Var>& v) { return log_softmax_rows(v[0]); }},
      {"reshape", one,
       [](Graph&, const std::vector<Var>& v) { return reshape(v[0], {v[0].value().size()}); }},
      {"transpose", one, [](Graph&, const std::vector<Var>& v) { return transpose(v[0]); }},
      {"permute",
       [](Rng& rng) {
         return std::vector<Tensor>{
             random_tensor(rng, {pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 2)})};
       },
       [](Graph&, const std::vector<Var>& v) { return permute(v[0], {0, 2, 1, 3}); }},
      {"concat_last",
       [](Rng& rng) {
         const Index r = pick(rng, 1, 3);
         return std::vector<Tensor>{random_tensor(rng, {r, pick(rng, 1, 3)}),
                                    random_tensor(rng, {r, pick(rng, 1, 3)})};
       },
       [](Graph&, const std::vector<Var>& v) { return concat_last(v[0], v[1]); }},
      {"select", one, [](Graph&, const std::vector<Var>& v) { return select(v[0], v[0].value().dim(0) - 1); }},
      {"cross_entropy",
       [](Rng& rng) {
         return std::vector<Tensor>{random_tensor(rng, {3, pick(rng, 2, 5)}, -3.0, 3.0)};
       },
       [](Graph&, const std::vector<Var>& v) {
         const int k = static_cast<int>(v[0].value().dim(1));
         const std::vector<int> targets = {0, k - 1, k / 2};
         return reshape(cross_entropy_logits(v[0], targets), {1});
       }},
  };
}

TEST(GradientPropertyTest, EveryOpMatchesFiniteDifferences) {
  Rng rng(2024);
  for (const OpCase& op : op_cases()) {
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::uint64_t wseed = rng.next();
      auto build = [&](Graph& g, const std::vector<Var>& v) { return weighted_sum(op.apply(g, v), wseed); };
      worst = std::max(worst, gradient_check(build, op.make_leaves(rng)));
    }
    EXPECT_LE(worst, 1e-6) << op.name;
  }
}

}  // namespace
}  // namespace htr
