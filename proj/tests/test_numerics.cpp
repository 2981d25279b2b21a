#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hsrl/numerics/errors.hpp"
#include "hsrl/numerics/optimizer.hpp"
#include "hsrl/numerics/rng.hpp"
#include "hsrl/numerics/tensor.hpp"
#include "support/oracles.hpp"

using namespace hsrl;
using namespace hsrl::numerics;
using hsrl::testing::check_gradients;
using hsrl::testing::random_vector;

TEST(Matvec, IdentityAndDirectArithmetic) {
  EXPECT_EQ(matvec(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::vector({3, 4})).to_vector(),
            (std::vector<double>{3, 4}));
  EXPECT_EQ(matvec(Tensor::matrix(1, 2, {1, 2}), Tensor::vector({3, 4})).to_vector(),
            (std::vector<double>{11}));
}

TEST(Matvec, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(matvec(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)), Tensor::vector({1, 2})),
               DimensionError);
}

TEST(Matvec, GradientMatchesCentralDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor w = Tensor::parameter({8, 8}, random_vector(rng, 64));
    Tensor x = Tensor::parameter({8}, random_vector(rng, 8));
    auto r = check_gradients({w, x}, [&] { return sum(matvec(w, x)); });
    ASSERT_LT(r.worst, 1e-4) << "trial " << trial;
  }
}

TEST(Softmax, SymmetricAndStable) {
  auto p = softmax(Tensor::vector({0, 0, 0, 0})).to_vector();
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
  auto q = softmax(Tensor::vector({1000, 0})).to_vector();
  EXPECT_NEAR(q[0], 1.0, 1e-12);
  EXPECT_NEAR(q[1], 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(log_softmax(Tensor::vector({1000, 0})).to_vector()[1]));
}

TEST(Softmax, MatchesReferenceAndGradient) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto xs = random_vector(rng, 16, 2.0);
    const auto ref = hsrl::testing::ref_softmax(xs);
    Tensor x = Tensor::parameter({16}, xs);
    const auto got = softmax(x).to_vector();
    for (std::size_t i = 0; i < 16; ++i) ASSERT_NEAR(got[i], ref[i], 1e-14);
    Tensor probe = Tensor::vector(random_vector(rng, 16));
    auto r = check_gradients({x}, [&] { return dot(softmax(x), probe); });
    ASSERT_LT(r.worst, 1e-4);
    auto s = check_gradients({x}, [&] { return dot(log_softmax(x), probe); });
    ASSERT_LT(s.worst, 1e-4);
  }
}

TEST(LayerNorm, ConstantAndTwoPointInputs) {
  Tensor one = Tensor::vector({1, 1}), zero = Tensor::vector({0, 0});
  Tensor g4 = Tensor::vector({1, 1, 1, 1}), b4 = Tensor::vector({0, 0, 0, 0});
  for (double v : layer_norm(Tensor::vector({1, 1, 1, 1}), g4, b4).to_vector()) {
    EXPECT_DOUBLE_EQ(v, 0.0);
  }
  auto y = layer_norm(Tensor::vector({-1, 1}), one, zero).to_vector();
  EXPECT_NEAR(y[0], -1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0, 1e-5);
}

TEST(LayerNorm, MatchesReferenceAndGradient) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto xs = random_vector(rng, 32, 1.5);
    Tensor x = Tensor::parameter({32}, xs);
    Tensor gain = Tensor::parameter({32}, random_vector(rng, 32));
    Tensor bias = Tensor::parameter({32}, random_vector(rng, 32));
    Tensor ones = Tensor::constant({32}, std::vector<double>(32, 1.0));
    Tensor zeros = Tensor::constant({32}, std::vector<double>(32, 0.0));
    const auto ref = hsrl::testing::ref_layer_norm(xs);
    const auto got = layer_norm(x, ones, zeros).to_vector();
    for (std::size_t i = 0; i < 32; ++i) ASSERT_NEAR(got[i], ref[i], 1e-12);
    Tensor probe = Tensor::vector(random_vector(rng, 32));
    auto r = check_gradients({x, gain, bias},
                             [&] { return dot(layer_norm(x, gain, bias), probe); });
    ASSERT_LT(r.worst, 1e-4);
  }
}

TEST(Primitives, ElementwiseGradients) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = Tensor::parameter({6}, random_vector(rng, 6));
    Tensor b = Tensor::parameter({6}, random_vector(rng, 6));
    Tensor pos = Tensor::parameter({6}, std::vector<double>(6, 0.0));
    for (std::size_t i = 0; i < 6; ++i) pos.mutable_data()[i] = 0.5 + rng.uniform();
    Tensor m = Tensor::parameter({3, 6}, random_vector(rng, 18));
    Tensor p = Tensor::parameter({3}, random_vector(rng, 3));
    Tensor probe = Tensor::vector(random_vector(rng, 6));
    const std::vector<std::function<Tensor()>> cases = {
        [&] { return dot(add(a, b), probe); },
        [&] { return dot(sub(a, b), probe); },
        [&] { return dot(mul(a, b), probe); },
        [&] { return dot(scale(add_scalar(a, 0.3), -1.7), probe); },
        [&] { return dot(tanh(a), probe); },
        [&] { return dot(sigmoid(a), probe); },
        [&] { return dot(log_sigmoid(a), probe); },
        [&] { return dot(exp(a), probe); },
        [&] { return dot(log(pos), probe); },
        [&] { return mean(mul(a, a)); },
        [&] { return dot(vecmat(p, m), probe); },
        [&] { return dot(mean_rows(m), probe); },
        [&] { return dot(row(m, 1), probe); },
        [&] { return sum(concat(a, b)); },
    };
    for (std::size_t c = 0; c < cases.size(); ++c) {
      auto r = check_gradients({a, b, pos, m, p}, cases[c]);
      ASSERT_LT(r.worst, 1e-4) << "case " << c << " trial " << trial;
    }
    Tensor k = Tensor::parameter({4, 6}, random_vector(rng, 24));
    auto r = check_gradients({m, k}, [&] {
      return sum(softmax_rows(matmul(m, k, true)));
    });
    ASSERT_LT(r.worst, 1e-4);
    auto r2 = check_gradients({m, a}, [&] { return sum(mul(mean_rows(add_rows(m, a)), a)); });
    ASSERT_LT(r2.worst, 1e-4);
  }
}

TEST(Backward, TrivialGradients) {
  Tensor x = Tensor::parameter({5}, {1, 2, 3, 4, 5});
  backward(sum(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
  Tensor y = Tensor::parameter({2}, {1, 2});
  backward(dot(y, y));
  EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(y.grad()[1], 4.0);
}

TEST(Backward, GraphIsTopologicallyOrdered) {
  Tensor x = Tensor::parameter({3}, {1, 2, 3});
  Tensor y = tanh(scale(x, 2.0));
  Tensor loss = sum(mul(y, x));
  const Graph g = collect_graph(loss);
  std::vector<const detail::Node*> seen;
  for (const detail::Node* n : g.nodes) {
    for (const auto& parent : n->parents) {
      EXPECT_NE(std::find(seen.begin(), seen.end(), parent.get()), seen.end());
    }
    seen.push_back(n);
  }
  EXPECT_EQ(g.nodes.back(), loss.node());
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tensor x = Tensor::parameter({1}, {3.0});
  backward(sum(add(mul(x, x), x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Tensor, NonFiniteIsAnError) {
  EXPECT_THROW(log(Tensor::vector({0.0})), NumericError);
  EXPECT_THROW(Tensor::constant({2}, {1.0}), DimensionError);
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::parameter({2}, {1, 2});
  NoGradGuard guard;
  Tensor y = scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::parameter({3}, {1, 2, 3});
  Optimizer opt({p});
  opt.zero_grad();
  for (int i = 0; i < 5; ++i) opt.step();
  EXPECT_EQ(p.to_vector(), (std::vector<double>{1, 2, 3}));
}

TEST(Optimizer, PlainSgdStep) {
  Tensor p = Tensor::parameter({}, {1.0});
  OptimizerOptions o;
  o.mode = OptimizerMode::kSgd;
  o.learning_rate = 0.1;
  Optimizer opt({p}, o);
  backward(p);
  opt.step();
  EXPECT_DOUBLE_EQ(p.item(), 0.9);
}

TEST(Optimizer, ConvergesToAnalyticOptimum) {
  Tensor p = Tensor::parameter({}, {0.0});
  OptimizerOptions o;
  o.learning_rate = 0.05;
  Optimizer opt({p}, o);
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    Tensor d = add_scalar(p, -3.0);
    backward(mul(d, d));
    opt.step();
  }
  EXPECT_LT(std::fabs(p.item() - 3.0), 1e-2);
}

TEST(Optimizer, NonFiniteGradientAbortsWithoutMoving) {
  Tensor p = Tensor::parameter({2}, {1.0, 2.0});
  Optimizer opt({p});
  p.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(opt.step(), TrainingError);
  EXPECT_EQ(p.to_vector(), (std::vector<double>{1.0, 2.0}));
}

TEST(Rng, DeriveIsDeterministicAndIndependent) {
  Rng a(5), b(5);
  EXPECT_EQ(a.derive(3).next_u64(), b.derive(3).next_u64());
  EXPECT_NE(a.derive(3).next_u64(), a.derive(4).next_u64());
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  Rng c(9);
  for (int i = 0; i < 1000; ++i) {
    const auto v = c.uniform_int(7);
    ASSERT_LT(v, 7u);
  }
}
