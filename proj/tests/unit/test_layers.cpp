#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "casdet/error.hpp"
#include "casdet/gru.hpp"
#include "casdet/layers.hpp"
#include "casdet/optim.hpp"
#include "grad_suite.hpp"
#include "gradcheck.hpp"

using namespace casdet;

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  t.at({1, 2}) = 4.0;
  EXPECT_EQ(t[5], 4.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(ReLU, Forward) {
  ReLU r("r");
  const Tensor y = r.forward(Tensor({3}, std::vector<double>{-1.0, 0.0, 2.0}), Mode::kInfer);
  EXPECT_EQ(y.to_vector(), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(MaxPool, BlockMaxima) {
  MaxPool2D p("p");
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = static_cast<double>((i * 7) % 16);
  const Tensor y = p.forward(Tensor({1, 1, 4, 4}, v), Mode::kInfer);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (int by = 0; by < 2; ++by) {
    for (int bx = 0; bx < 2; ++bx) {
      double m = -1;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) m = std::max(m, v[(2 * by + dy) * 4 + 2 * bx + dx]);
      EXPECT_EQ(y.at({0, 0, static_cast<std::size_t>(by), static_cast<std::size_t>(bx)}), m);
    }
  }
}

TEST(MaxPool, FloorAndCeilExtents) {
  EXPECT_EQ(MaxPool2D("f", false).output_shape({1, 2, 193, 938}), (Shape{1, 2, 96, 469}));
  EXPECT_EQ(MaxPool2D("c", true).output_shape({1, 2, 193, 938}), (Shape{1, 2, 97, 469}));
}

TEST(Conv2D, ImpulseGivesPlateau) {
  std::mt19937_64 rng(1);
  Conv2D c("c", {3, 3, 1, 1}, rng);
  c.kernel().value.fill(1.0);
  Tensor x({1, 1, 7, 7});
  x.at({0, 0, 3, 3}) = 1.0;
  const Tensor y = c.forward(x, Mode::kInfer);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      const bool inside = i >= 2 && i <= 4 && j >= 2 && j <= 4;
      EXPECT_EQ(y.at({0, 0, i, j}), inside ? 1.0 : 0.0);
    }
  }
}

TEST(Conv2D, ShapeMismatchNamesBothShapes) {
  std::mt19937_64 rng(1);
  Conv2D c("conv", {3, 3, 2, 4}, rng);
  try {
    c.forward(Tensor({1, 3, 5, 5}), Mode::kInfer);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[1, 3, 5, 5]"), std::string::npos) << e.what();
  }
}

TEST(Conv2D, BackwardWithoutForwardIsLogicError) {
  std::mt19937_64 rng(1);
  Conv2D c("c", {3, 3, 1, 1}, rng);
  EXPECT_THROW(c.backward(Tensor({1, 1, 3, 3})), std::logic_error);
  c.forward(Tensor({1, 1, 3, 3}), Mode::kInfer);
  EXPECT_THROW(c.backward(Tensor({1, 1, 3, 3})), std::logic_error);
}

TEST(BiGRU, ZeroWeightsGiveZeroOutput) {
  std::mt19937_64 rng(1);
  BiGRU g("g", {3, 4}, rng);
  for (Parameter* p : g.parameters()) p->value.fill(0.0);
  std::mt19937_64 r2(2);
  const Tensor y = g.forward(casdet::testing::random_tensor({2, 5, 3}, r2), Mode::kInfer);
  ASSERT_EQ(y.shape(), (Shape{2, 5, 8}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BiGRU, BackwardDirectionReadsFuture) {
  std::mt19937_64 rng(3);
  BiGRU g("g", {1, 2}, rng);
  Tensor x({1, 4, 1});
  const Tensor y0 = g.forward(x, Mode::kInfer);
  x.at({0, 3, 0}) = 1.0;
  const Tensor y1 = g.forward(x, Mode::kInfer);
  // Forward states before the change are unaffected; backward states are.
  EXPECT_EQ(y0.at({0, 0, 0}), y1.at({0, 0, 0}));
  EXPECT_NE(y0.at({0, 0, 2}), y1.at({0, 0, 2}));
}

TEST(Sigmoid, LocalGradientAtZero) {
  Sigmoid s("s");
  const Tensor y = s.forward(Tensor({1}), Mode::kTrain);
  EXPECT_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(s.backward(Tensor({1}, 1.0))[0], 0.25);
}

TEST(Sigmoid, StableForLargeInputs) {
  Sigmoid s("s");
  const Tensor y = s.forward(Tensor({2}, std::vector<double>{-800.0, 800.0}), Mode::kInfer);
  EXPECT_TRUE(y.all_finite());
  EXPECT_EQ(y[1], 1.0);
}

TEST(Dropout, GradientReusesMaskAndScale) {
  Dropout d("d", 0.5, 7);
  const Tensor x({1, 1000}, 1.0);
  const Tensor y = d.forward(x, Mode::kTrain);
  const Tensor g = d.backward(Tensor({1, 1000}, 3.0));
  std::size_t kept = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    ASSERT_TRUE(y[i] == 0.0 || y[i] == 2.0);
    EXPECT_EQ(g[i], 3.0 * y[i]);
    kept += y[i] != 0.0;
  }
  EXPECT_GT(kept, 400u);
  EXPECT_LT(kept, 600u);
  EXPECT_EQ(d.forward(x, Mode::kInfer), x);
}

TEST(Dense, CountsAndShape) {
  std::mt19937_64 rng(1);
  Dense d("d", {4, 3}, rng);
  EXPECT_EQ(d.trainable_count(), 15u);
  EXPECT_EQ(d.output_shape({2, 7, 4}), (Shape{2, 7, 3}));
}

TEST(Conv2D, CountSixBySix) {
  std::mt19937_64 rng(1);
  Conv2D c("c", {6, 6, 1, 64}, rng);
  EXPECT_EQ(c.trainable_count(), 2368u);
}

TEST(Flatten, FeatureIndexIsChannelMajor) {
  FlattenPerTimestep f("f");
  Tensor x({1, 2, 3, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const Tensor y = f.forward(x, Mode::kInfer);
  ASSERT_EQ(y.shape(), (Shape{1, 4, 6}));
  // y[n, w, c*H + h] = x[n, c, h, w]
  EXPECT_EQ(y.at({0, 1, 1 * 3 + 2}), x.at({0, 1, 2, 1}));
}

TEST(Residual, BroadcastShortcutWithoutProjection) {
  std::mt19937_64 rng(1);
  ResidualBlock r("r", {1, 4, false}, rng);
  EXPECT_EQ(r.projection(), nullptr);
  EXPECT_EQ(r.output_shape({1, 1, 5, 5}), (Shape{1, 4, 5, 5}));
  ResidualBlock p("p", {1, 4, true}, rng);
  ASSERT_NE(p.projection(), nullptr);
  EXPECT_EQ(p.trainable_count(), r.trainable_count() + 4 + 4);
}

TEST(BatchNorm, RunningStatisticsUpdate) {
  BatchNorm b("b", {1});
  Tensor x({1, 1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  b.forward(x, Mode::kTrain);
  const auto params = b.parameters();
  EXPECT_NEAR(params[2]->value[0], 0.01 * 2.5, 1e-15);
  EXPECT_NEAR(params[3]->value[0], 0.99 + 0.01 * 1.25, 1e-15);
  EXPECT_FALSE(params[2]->trainable);
  EXPECT_EQ(b.trainable_count(), 2u);
  EXPECT_EQ(b.total_count(), 4u);
}

TEST(Loss, AnalyticValues) {
  const Tensor t({4}, std::vector<double>{0, 1, 1, 0});
  EXPECT_LT(bce_loss(t, t).loss, 1e-6);
  EXPECT_NEAR(bce_loss(Tensor({4}, 0.5), t).loss, std::log(2.0), 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  EXPECT_LT(casdet::testing::bce_gradient_error(50, 4), 1e-6);
}

TEST(Loss, ClampedEntriesHaveZeroGradient) {
  const LossResult r = bce_loss(Tensor({2}, std::vector<double>{0.0, 1.0}), Tensor({2}, std::vector<double>{1, 0}));
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_EQ(r.gradient[0], 0.0);
  EXPECT_EQ(r.gradient[1], 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter p{"w", Tensor({3}, 2.0), Tensor({3}), true};
  std::vector<Parameter*> ps{&p};
  AdamState s = make_adam_state(ps);
  adam_step(ps, s);
  EXPECT_EQ(s.t, 1u);
  for (double v : p.value.values()) EXPECT_EQ(v, 2.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p{"w", Tensor({1}, 0.0), Tensor({1}, 1.0), true};
  Parameter q{"u", Tensor({1}, 0.0), Tensor({1}, 1.0), true};
  std::vector<Parameter*> ps{&p, &q};
  AdamState s = make_adam_state(ps, {1e-4});
  adam_step(ps, s);
  EXPECT_NEAR(p.value[0], -1e-4 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.value[0], q.value[0]);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Parameter p{"head/dense/kernel", Tensor({1}), Tensor({1}, NAN), true};
  std::vector<Parameter*> ps{&p};
  AdamState s = make_adam_state(ps);
  try {
    adam_step(ps, s);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("head/dense/kernel"), std::string::npos);
  }
}

TEST(Adam, SkipsNonTrainableState) {
  Parameter p{"bn/moving_mean", Tensor({1}, 0.3), Tensor({1}, 1.0), false};
  std::vector<Parameter*> ps{&p};
  AdamState s = make_adam_state(ps);
  adam_step(ps, s);
  EXPECT_EQ(p.value[0], 0.3);
}

TEST(GradientSuite, EveryLayerAndPairWithinTolerance) {
  const auto rows = casdet::testing::run_gradient_suite(20, 2024);
  EXPECT_GE(rows.size(), 10u + 40u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.shapes, 20u);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name << " worst " << r.worst;
  }
}
