// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "vg3s/error.hpp"
#include "vg3s/gradcheck.hpp"
#include "vg3s/losses.hpp"
#include "vg3s/metrics.hpp"
#include "vg3s/ops.hpp"
#include "vg3s/rng.hpp"

namespace vg3s {
namespace {

// Random distributions [V, K] with labels in 0..K-2 or empty.
Tensor random_probs(std::size_t V, std::size_t K, Rng& rng) {
  Tensor p({V, K});
  for (std::size_t v = 0; v < V; ++v) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += p[v * K + k] = rng.uniform(0.05, 1.0);
    for (std::size_t k = 0; k < K; ++k) p[v * K + k] /= s;
  }
  return p;
}

std::vector<std::uint8_t> random_labels(std::size_t V, std::size_t K, Rng& rng) {
  std::vector<std::uint8_t> gt(V);
  for (auto& g : gt) {
    const std::size_t c = rng.next_u64() % K;
    g = c == K - 1 ? kEmptyLabel : static_cast<std::uint8_t>(c);
  }
  return gt;
}

double eval(const std::function<Var(Tape&, Var)>& f, const Tensor& p) {
  Tape t(false);
  return f(t, t.constant(p)).value().item();
}

TEST(CrossEntropy, PerfectPredictionIsZero) {
  const Tensor p({3, 3}, {1, 0, 0, 0, 0, 1, 0, 1, 0});
  EXPECT_EQ(eval([](Tape&, Var x) { return cross_entropy(x, {0, kEmptyLabel, 1}); }, p), 0.0);
}

TEST(CrossEntropy, UniformOverFourIsLogFour) {
  const Tensor p({2, 4}, 0.25);
  EXPECT_NEAR(eval([](Tape&, Var x) { return cross_entropy(x, {2, kEmptyLabel}); }, p), std::log(4.0), 1e-15);
  EXPECT_NEAR(std::log(4.0), 1.3863, 1e-4);
}

TEST(CrossEntropy, ZeroProbabilityIsFloored) {
  const Tensor p({1, 2}, {1, 0});
  EXPECT_NEAR(eval([](Tape&, Var x) { return cross_entropy(x, {kEmptyLabel}); }, p), -std::log(kLogFloor), 1e-12);
}

TEST(CrossEntropy, ClassWeightsGiveWeightedMean) {
  const Tensor p({2, 2}, {0.5, 0.5, 0.25, 0.75});
  LossConfig cfg;
  cfg.class_weights = {3.0, 1.0};
  const double got = eval([&](Tape&, Var x) { return cross_entropy(x, {0, kEmptyLabel}, cfg); }, p);
  EXPECT_NEAR(got, (3 * std::log(2.0) + std::log(4.0 / 3.0)) / 4.0, 1e-15);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const Tensor p = random_probs(12, 3, rng);
    const auto gt = random_labels(12, 3, rng);
    const auto r = gradcheck([&](Tape&, const std::vector<Var>& x) { return cross_entropy(x[0], gt); }, {p});
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

TEST(Lovasz, CorrectOneHotIsZero) {
  const Tensor p({3, 3}, {1, 0, 0, 0, 0, 1, 0, 1, 0});
  EXPECT_EQ(eval([](Tape&, Var x) { return lovasz_softmax(x, {0, kEmptyLabel, 1}); }, p), 0.0);
}

TEST(Lovasz, SingleVoxel) {
  const Tensor p({1, 3}, {0.2, 0.7, 0.1});
  const auto per = lovasz_per_class(p, {1});
  ASSERT_TRUE(per[1]);
  EXPECT_NEAR(*per[1], 0.3, 1e-15);
  EXPECT_FALSE(per[0]);
  EXPECT_FALSE(per[2]);
}

TEST(Lovasz, HalfJaccardGivesHalfLoss) {
  // class 0 is predicted on all four voxels, two of them correctly
  const Tensor p({4, 2}, {1, 0, 1, 0, 1, 0, 1, 0});
  const auto per = lovasz_per_class(p, {0, 0, kEmptyLabel, kEmptyLabel});
  EXPECT_NEAR(*per[0], 0.5, 1e-15);
}

TEST(Lovasz, HypercubeVerticesEqualOneMinusJaccard) {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t V = 5 + rng.next_u64() % 40;
    const std::size_t K = 2 + rng.next_u64() % 4;
    const auto gt = random_labels(V, K, rng);
    Tensor p({V, K});
    std::vector<std::size_t> pred(V);
    for (std::size_t v = 0; v < V; ++v) {
      pred[v] = rng.next_u64() % K;
      p[v * K + pred[v]] = 1.0;
    }
    const auto per = lovasz_per_class(p, gt);
    for (std::size_t k = 0; k < K; ++k) {
      std::size_t inter = 0;
      std::size_t uni = 0;
      bool present = false;
      for (std::size_t v = 0; v < V; ++v) {
        const std::size_t g = gt[v] == kEmptyLabel ? K - 1 : gt[v];
        present |= g == k;
        inter += g == k && pred[v] == k;
        uni += g == k || pred[v] == k;
      }
      ASSERT_EQ(per[k].has_value(), present);
      if (present) {
        EXPECT_NEAR(*per[k], 1.0 - static_cast<double>(inter) / static_cast<double>(uni), 1e-9);
      }
    }
  }
}

TEST(Lovasz, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 50);
    const Tensor p = random_probs(10, 4, rng);
    const auto gt = random_labels(10, 4, rng);
    const auto r = gradcheck([&](Tape&, const std::vector<Var>& x) { return lovasz_softmax(x[0], gt); }, {p});
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

TEST(Lovasz, NonNegative) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    const Tensor p = random_probs(15, 3, rng);
    const auto gt = random_labels(15, 3, rng);
    EXPECT_GE(eval([&](Tape&, Var x) { return lovasz_softmax(x, gt); }, p), 0.0);
  }
}

TEST(TotalLoss, LinearCombination) {
  Rng rng(5);
  const Tensor p = random_probs(9, 3, rng);
  const auto gt = random_labels(9, 3, rng);
  const double ce = eval([&](Tape&, Var x) { return cross_entropy(x, gt); }, p);
  const double lv = eval([&](Tape&, Var x) { return lovasz_softmax(x, gt); }, p);
  LossConfig cfg;
  cfg.lambda = 1;
  cfg.beta = 0;
  EXPECT_EQ(eval([&](Tape&, Var x) { return total_loss(x, gt, cfg); }, p), ce);
  cfg.lambda = 0;
  cfg.beta = 1;
  EXPECT_EQ(eval([&](Tape&, Var x) { return total_loss(x, gt, cfg); }, p), lv);
  cfg.lambda = 1;
  EXPECT_EQ(eval([&](Tape&, Var x) { return total_loss(x, gt, cfg); }, p), ce + lv);
  const Tensor perfect({2, 3}, {0, 1, 0, 0, 0, 1});
  EXPECT_EQ(eval([&](Tape&, Var x) { return total_loss(x, {1, kEmptyLabel}, cfg); }, perfect), 0.0);
  cfg.lambda = 0;
  cfg.beta = 0;
  EXPECT_THROW(eval([&](Tape&, Var x) { return total_loss(x, gt, cfg); }, p), ConfigError);
}

LabelGrid grid_of(std::vector<std::uint8_t> labels, std::size_t classes) {
  LabelGrid g(GridSpec{{labels.size(), 1, 1}, {0, 0, 0}, 1.0}, classes);
  g.labels = std::move(labels);
  return g;
}

TEST(Confusion, IdenticalGridsAreDiagonal) {
  Rng rng(3);
  const auto labels = random_labels(200, 4, rng);
  ConfusionMatrix cm(3);
  cm.accumulate(grid_of(labels, 3), grid_of(labels, 3));
  EXPECT_EQ(cm.total(), 200u);
  for (std::size_t g = 0; g < 4; ++g) {
    for (std::size_t p = 0; p < 4; ++p) {
      if (g != p) EXPECT_EQ(cm.at(g, p), 0u);
    }
  }
  EXPECT_EQ(miou(cm).value, 1.0);
  EXPECT_EQ(sc_iou(cm).value, 1.0);
}

TEST(Confusion, OrderOfAccumulationDoesNotMatter) {
  Rng rng(4);
  const LabelGrid a1 = grid_of(random_labels(50, 4, rng), 3);
  const LabelGrid a2 = grid_of(random_labels(50, 4, rng), 3);
  const LabelGrid b1 = grid_of(random_labels(50, 4, rng), 3);
  const LabelGrid b2 = grid_of(random_labels(50, 4, rng), 3);
  ConfusionMatrix ab(3), ba(3);
  ab.accumulate(a1, a2);
  ab.accumulate(b1, b2);
  ba.accumulate(b1, b2);
  ba.accumulate(a1, a2);
  EXPECT_EQ(ab, ba);
  EXPECT_EQ(ab.total(), 100u);
}

TEST(Confusion, WorkerCountDoesNotMatter) {
  Rng rng(6);
  const LabelGrid p = grid_of(random_labels(1000, 5, rng), 4);
  const LabelGrid g = grid_of(random_labels(1000, 5, rng), 4);
  ConfusionMatrix one(4);
  one.accumulate(p, g, 1);
  for (unsigned w : {2u, 8u}) {
    ConfusionMatrix many(4);
    many.accumulate(p, g, w);
    EXPECT_EQ(many, one);
  }
}

TEST(Confusion, MismatchedGridsRejected) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(cm.accumulate(grid_of({0, 1}, 2), grid_of({0, 1, 1}, 2)), ShapeError);
}

TEST(Metrics, HandBuiltIou) {
  ConfusionMatrix cm(1);
  cm.at(0, 0) = 3;  // TP
  cm.at(1, 0) = 1;  // FP: empty predicted as class 0
  cm.at(0, 1) = 2;  // FN
  EXPECT_EQ(class_iou(cm, 0).value, 0.5);
  EXPECT_EQ(miou(cm).value, 0.5);
}

TEST(Metrics, MeanOfClassIous) {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 1;
  cm.at(0, 2) = 1;  // class 0: 1 / 2
  cm.at(1, 1) = 1;
  cm.at(2, 1) = 3;  // class 1: 1 / 4
  EXPECT_EQ(miou(cm).value, 0.375);
}

TEST(Metrics, ZeroUnionClassesSkipped) {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 4;
  cm.at(3, 3) = 10;
  const Metric m = miou(cm);
  EXPECT_TRUE(m.defined);
  EXPECT_EQ(m.value, 1.0);
}

TEST(Metrics, EmptyPredictionGivesZeroScIou) {
  ConfusionMatrix cm(2);
  cm.accumulate(grid_of({kEmptyLabel, kEmptyLabel, kEmptyLabel}, 2), grid_of({0, 1, kEmptyLabel}, 2));
  const Metric m = sc_iou(cm);
  EXPECT_TRUE(m.defined);
  EXPECT_EQ(m.value, 0.0);
}

TEST(Metrics, AllEmptyIsUndefined) {
  ConfusionMatrix cm(2);
  cm.accumulate(grid_of({kEmptyLabel, kEmptyLabel}, 2), grid_of({kEmptyLabel, kEmptyLabel}, 2));
  EXPECT_FALSE(sc_iou(cm).defined);
  EXPECT_EQ(sc_iou(cm).value, 0.0);
  EXPECT_FALSE(miou(cm).defined);
}

TEST(Metrics, ScIouMergesOccupiedClasses) {
  ConfusionMatrix cm(2);
  cm.accumulate(grid_of({1, 0, 0, kEmptyLabel}, 2), grid_of({0, 1, 0, 0}, 2));
  // every gt voxel is occupied; three are predicted occupied
  EXPECT_EQ(sc_iou(cm).value, 0.75);
  EXPECT_LT(miou(cm).value, sc_iou(cm).value);
}

}  // namespace
}  // namespace vg3s
