// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vg3s/error.hpp"
#include "vg3s/gradcheck.hpp"
#include "vg3s/ops.hpp"
#include "vg3s/rng.hpp"

using namespace vg3s;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// A fixed random projection so the checked scalar mixes every output element.
Var weighted_sum(Var y, std::uint64_t seed) {
  Rng rng(seed ^ 0xabcdef);
  Tensor w = random_tensor(y.shape(), rng);
  return sum(mul(y, y.tape()->constant(w)));
}

struct OpCase {
  std::string name;
  std::vector<std::vector<Shape>> shapes;  // at least three shape sets
  std::function<Var(const std::vector<Var>&)> op;
  double lo = -1.0;
  double hi = 1.0;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"add", {{{3, 4}, {3, 4}}, {{2, 3, 4}, {4}}, {{5, 1}, {1, 6}}},
                   [](const std::vector<Var>& v) { return add(v[0], v[1]); }});
  cases.push_back({"sub", {{{3, 4}, {3, 4}}, {{2, 3, 4}, {3, 1}}, {{6}, {6}}},
                   [](const std::vector<Var>& v) { return sub(v[0], v[1]); }});
  cases.push_back({"mul", {{{3, 4}, {3, 4}}, {{2, 3, 4}, {4}}, {{4, 1, 2}, {3, 1}}},
                   [](const std::vector<Var>& v) { return mul(v[0], v[1]); }});
  cases.push_back({"gelu", {{{7}}, {{3, 4}}, {{2, 2, 3}}}, [](const std::vector<Var>& v) { return gelu(v[0]); },
                   -3.0, 3.0});
  cases.push_back({"sigmoid", {{{7}}, {{3, 4}}, {{2, 2, 3}}},
                   [](const std::vector<Var>& v) { return sigmoid(v[0]); }, -4.0, 4.0});
  cases.push_back({"tanh", {{{7}}, {{3, 4}}, {{2, 2, 3}}}, [](const std::vector<Var>& v) { return tanh(v[0]); }});
  cases.push_back({"exp", {{{7}}, {{3, 4}}, {{2, 2, 3}}}, [](const std::vector<Var>& v) { return exp(v[0]); }});
  cases.push_back({"sin_cos", {{{7}}, {{3, 4}}, {{2, 2, 3}}},
                   [](const std::vector<Var>& v) { return mul(sin(v[0]), cos(v[0])); }});
  cases.push_back({"dropout_train", {{{7}}, {{3, 4}}, {{2, 2, 3}}},
                   [](const std::vector<Var>& v) { return dropout(v[0], 0.3, 11, 2, 5, true); }});
  cases.push_back({"matmul", {{{3, 4}, {4, 5}}, {{2, 3, 4}, {4, 2}}, {{4}, {4, 3}}},
                   [](const std::vector<Var>& v) { return matmul(v[0], v[1]); }});
  cases.push_back({"linear", {{{3, 4}, {4, 5}, {5}}, {{2, 3, 4}, {4, 2}, {2}}, {{1, 6}, {6, 3}, {3}}},
                   [](const std::vector<Var>& v) { return linear(v[0], v[1], v[2]); }});
  cases.push_back({"softmax_last", {{{4, 5}}, {{3}}, {{2, 3, 4}}},
                   [](const std::vector<Var>& v) { return softmax(v[0], v[0].shape().size() - 1); }, -3.0, 3.0});
  cases.push_back({"softmax_axis0", {{{4, 5}}, {{3, 2}}, {{2, 3, 4}}},
                   [](const std::vector<Var>& v) { return softmax(v[0], 0); }, -3.0, 3.0});
  cases.push_back({"layer_norm", {{{4, 5}, {5}, {5}}, {{3, 8}, {8}, {8}}, {{2, 3, 4}, {4}, {4}}},
                   [](const std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2]); }});
  cases.push_back({"normalize_rows", {{{4, 4}}, {{3, 2}}, {{5, 3}}},
                   [](const std::vector<Var>& v) { return normalize_rows(add_scalar(v[0], 2.0)); }});
  cases.push_back({"sum_axis", {{{4, 5}}, {{2, 3, 4}}, {{3, 2, 2}}},
                   [](const std::vector<Var>& v) { return sum_axis(v[0], 1); }});
  cases.push_back({"slice_concat", {{{4, 5}}, {{6, 3}}, {{4, 2}}},
                   [](const std::vector<Var>& v) {
                     Var a = slice(v[0], 0, 0, 2);
                     Var b = slice(v[0], 0, 1, v[0].shape()[0]);
                     return concat({b, a}, 0);
                   }});
  cases.push_back({"reshape_mean", {{{4, 5}}, {{2, 3, 4}}, {{6}}},
                   [](const std::vector<Var>& v) {
                     return mul(reshape(v[0], {v[0].value().numel()}), mean(v[0]));
                   }});
  cases.push_back({"conv_depthwise", {{{5, 5, 3}, {3, 3, 3}}, {{4, 6, 2}, {3, 3, 2}}, {{6, 6, 4}, {3, 3, 4}}},
                   [](const std::vector<Var>& v) { return conv2d(v[0], v[1], ConvMode::kDepthwise, 1, 1); }});
  cases.push_back({"conv_pointwise", {{{4, 4, 3}, {3, 5}}, {{2, 6, 2}, {2, 2}}, {{3, 3, 4}, {4, 1}}},
                   [](const std::vector<Var>& v) { return conv2d(v[0], v[1], ConvMode::kPointwise); }});
  cases.push_back({"conv_strided", {{{6, 6, 2}, {3, 3, 2, 3}}, {{4, 8, 3}, {3, 3, 3, 2}}, {{5, 5, 2}, {3, 3, 2, 2}}},
                   [](const std::vector<Var>& v) { return conv2d(v[0], v[1], ConvMode::kStrided, 2, 1); }});
  cases.push_back({"conv_transposed",
                   {{{3, 3, 2}, {2, 2, 2, 3}}, {{2, 4, 3}, {4, 4, 3, 2}}, {{2, 2, 2}, {3, 3, 2, 2}}},
                   [](const std::vector<Var>& v) {
                     return conv2d(v[0], v[1], ConvMode::kTransposed, v[1].shape()[0] == 3 ? 2 : v[1].shape()[0]);
                   }});
  cases.push_back({"global_avg_pool", {{{3, 3, 2}}, {{2, 5, 3}}, {{4, 4, 1}}},
                   [](const std::vector<Var>& v) { return global_avg_pool(v[0]); }});
  cases.push_back({"bilinear_sample", {{{4, 4, 3}, {6, 2}}, {{3, 5, 2}, {4, 2}}, {{6, 2, 1}, {5, 2}}},
                   [](const std::vector<Var>& v) {
                     // keep coordinates strictly inside the clamp-free band
                     Var uv = add_scalar(scale(v[1], 0.3), 0.5);
                     return bilinear_sample(v[0], uv);
                   }});
  return cases;
}

}  // namespace

// --------------------------------------------------------------------------
// softmax

TEST(Softmax, UniformLogitsGiveUniformDistribution) {
  Tape tape;
  Var y = softmax(tape.constant(Tensor::from({0, 0, 0})), 0);
  for (double v : y.value().data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, ClosedFormTwoClasses) {
  Tape tape;
  Var y = softmax(tape.constant(Tensor::from({0.0, std::log(3.0)})), 0);
  EXPECT_NEAR(y.value()[0], 0.25, 1e-15);
  EXPECT_NEAR(y.value()[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(3);
  Tape tape;
  Var y = softmax(tape.constant(random_tensor({4, 5}, rng, -5, 5)), 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) s += y.value().at({r, c});
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, MonotoneInInputs) {
  Tape tape;
  Var y = softmax(tape.constant(Tensor::from({0.1, 0.5, -0.2})), 0);
  Var z = softmax(tape.constant(Tensor::from({0.1, 0.9, -0.2})), 0);
  EXPECT_GT(z.value()[1], y.value()[1]);
}

TEST(Softmax, AxisOutOfRange) {
  Tape tape;
  EXPECT_THROW(softmax(tape.constant(Tensor({2, 2})), 2), ShapeError);
}

// --------------------------------------------------------------------------
// layer_norm

TEST(LayerNorm, ConstantVectorMapsToZero) {
  Tape tape;
  Var y = layer_norm(tape.constant(Tensor({4}, 2.5)), tape.constant(Tensor({4}, 1.0)), tape.constant(Tensor({4})));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementClosedForm) {
  Tape tape;
  Var y = layer_norm(tape.constant(Tensor::from({1, 3})), tape.constant(Tensor({2}, 1.0)), tape.constant(Tensor({2})));
  EXPECT_NEAR(y.value()[0], -1.0, 1e-6);
  EXPECT_NEAR(y.value()[1], 1.0, 1e-6);
}

TEST(LayerNorm, PreAffineMeanIsZero) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tape tape;
    Var y = layer_norm(tape.constant(random_tensor({6, 9}, rng, -10, 10)), tape.constant(Tensor({9}, 1.0)),
                       tape.constant(Tensor({9})));
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 9; ++c) s += y.value().at({r, c});
      EXPECT_NEAR(s / 9.0, 0.0, 1e-10);
    }
  }
}

TEST(LayerNorm, AffineLengthMismatch) {
  Tape tape;
  EXPECT_THROW(layer_norm(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2})), tape.constant(Tensor({3}))),
               ShapeError);
}

// --------------------------------------------------------------------------
// conv2d

TEST(Conv2d, DepthwiseCenterKernelIsIdentity) {
  Rng rng(1);
  Tensor x = random_tensor({5, 4, 3}, rng);
  Tensor k({3, 3, 3}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) k.at({1, 1, c}) = 1.0;
  Tape tape;
  Var y = conv2d(tape.constant(x), tape.constant(k), ConvMode::kDepthwise, 1, 1);
  EXPECT_EQ(y.value(), x);
}

TEST(Conv2d, PointwiseIdentityMatrixIsIdentity) {
  Rng rng(2);
  Tensor x = random_tensor({3, 3, 4}, rng);
  Tensor k({4, 4}, 0.0);
  for (std::size_t c = 0; c < 4; ++c) k.at({c, c}) = 1.0;
  Tape tape;
  Var y = conv2d(tape.constant(x), tape.constant(k), ConvMode::kPointwise);
  EXPECT_EQ(y.value(), x);
}

TEST(Conv2d, TransposedOnesKernelReplicatesValue) {
  Tape tape;
  Var y = conv2d(tape.constant(Tensor({1, 1, 1}, 2.75)), tape.constant(Tensor({2, 2, 1, 1}, 1.0)),
                 ConvMode::kTransposed, 2);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 1}));
  for (double v : y.value().data()) EXPECT_EQ(v, 2.75);
}

TEST(Conv2d, OutputExtents) {
  Tape tape;
  Var x = tape.constant(Tensor({8, 6, 2}));
  EXPECT_EQ(conv2d(x, tape.constant(Tensor({3, 3, 2})), ConvMode::kDepthwise, 1, 1).shape(), (Shape{8, 6, 2}));
  EXPECT_EQ(conv2d(x, tape.constant(Tensor({2, 5})), ConvMode::kPointwise).shape(), (Shape{8, 6, 5}));
  EXPECT_EQ(conv2d(x, tape.constant(Tensor({3, 3, 2, 4})), ConvMode::kStrided, 2, 1).shape(), (Shape{4, 3, 4}));
  EXPECT_EQ(conv2d(x, tape.constant(Tensor({4, 4, 2, 3})), ConvMode::kTransposed, 4).shape(), (Shape{32, 24, 3}));
}

TEST(Conv2d, ChannelMismatchThrows) {
  Tape tape;
  Var x = tape.constant(Tensor({4, 4, 3}));
  EXPECT_THROW(conv2d(x, tape.constant(Tensor({3, 3, 2})), ConvMode::kDepthwise, 1, 1), ShapeError);
  EXPECT_THROW(conv2d(x, tape.constant(Tensor({2, 5})), ConvMode::kPointwise), ShapeError);
  EXPECT_THROW(conv2d(x, tape.constant(Tensor({3, 3, 2, 1})), ConvMode::kStrided, 2, 1), ShapeError);
  EXPECT_THROW(conv2d(x, tape.constant(Tensor({3, 3, 3})), ConvMode::kDepthwise, 0, 1), std::invalid_argument);
}

// --------------------------------------------------------------------------
// global_avg_pool

TEST(GlobalAvgPool, ArithmeticMean) {
  Tape tape;
  Tensor x(Shape{2, 2, 1}, std::vector<double>{1, 3, 5, 7});
  EXPECT_DOUBLE_EQ(global_avg_pool(tape.constant(x)).value()[0], 4.0);
  EXPECT_DOUBLE_EQ(global_avg_pool(tape.constant(Tensor({3, 5, 2}, -1.25))).value()[1], -1.25);
}

TEST(GlobalAvgPool, MatchesBruteForce) {
  Rng rng(9);
  Tensor x = random_tensor({5, 7, 3}, rng);
  Tape tape;
  Var y = global_avg_pool(tape.constant(x));
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 7; ++j) s += x.at({i, j, c});
    EXPECT_NEAR(y.value()[c], s / 35.0, 1e-12);
  }
}

TEST(GlobalAvgPool, EmptyExtentThrows) {
  Tape tape;
  EXPECT_THROW(global_avg_pool(tape.constant(Tensor({0, 3, 2}))), ShapeError);
}

// --------------------------------------------------------------------------
// bilinear_sample

TEST(BilinearSample, CenterCellsAndEdges) {
  Tape tape;
  Var map = tape.constant(Tensor(Shape{2, 2, 1}, std::vector<double>{1, 2, 3, 4}));
  auto at = [&](double u, double v) {
    return bilinear_sample(map, tape.constant(Tensor(Shape{1, 2}, std::vector<double>{u, v}))).value()[0];
  };
  EXPECT_DOUBLE_EQ(at(0.5, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(at(0.25, 0.25), 1.0);
  EXPECT_DOUBLE_EQ(at(0.75, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(at(0.25, 0.75), 3.0);
  EXPECT_DOUBLE_EQ(at(0.5, 0.0), 1.5);
}

TEST(BilinearSample, NonFiniteCoordinateThrows) {
  Tape tape;
  Var map = tape.constant(Tensor({2, 2, 1}));
  Tensor uv(Shape{1, 2}, std::vector<double>{0.5, 0.5});
  Var coords = tape.constant(uv);
  EXPECT_NO_THROW(bilinear_sample(map, coords));
  uv[1] = std::nan("");
  EXPECT_THROW(tape.constant(uv), NumericError);
}

// --------------------------------------------------------------------------
// elementwise

TEST(Elementwise, ClosedForms) {
  Tape tape;
  EXPECT_EQ(sigmoid(tape.constant(Tensor::scalar(0.0))).value().item(), 0.5);
  EXPECT_EQ(gelu(tape.constant(Tensor::scalar(0.0))).value().item(), 0.0);
  // exact-CDF GELU, not the tanh approximation
  EXPECT_NEAR(gelu(tape.constant(Tensor::scalar(1.0))).value().item(), 0.8413447460685429, 1e-15);
}

TEST(Dropout, ZeroRateAndEvalAreIdentity) {
  Rng rng(4);
  Tensor x = random_tensor({10}, rng);
  Tape tape;
  Var v = tape.constant(x);
  for (std::uint64_t seed : {0u, 1u, 77u}) {
    EXPECT_EQ(dropout(v, 0.0, seed, 3, 9, true).value(), x);
    EXPECT_EQ(dropout(v, 0.5, seed, 3, 9, false).value(), x);
  }
}

TEST(Dropout, MaskIsPureFunctionOfSeedSiteStep) {
  Rng rng(5);
  Tensor x = random_tensor({64}, rng);
  Tape tape;
  Var v = tape.constant(x);
  EXPECT_EQ(dropout(v, 0.3, 1, 2, 3, true).value(), dropout(v, 0.3, 1, 2, 3, true).value());
  EXPECT_NE(dropout(v, 0.3, 1, 2, 3, true).value(), dropout(v, 0.3, 1, 2, 4, true).value());
  EXPECT_NE(dropout(v, 0.3, 1, 2, 3, true).value(), dropout(v, 0.3, 1, 7, 3, true).value());
}

TEST(Binary, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(add(tape.constant(Tensor({3, 4})), tape.constant(Tensor({3}))), ShapeError);
  EXPECT_THROW(matmul(tape.constant(Tensor({3, 4})), tape.constant(Tensor({3, 4}))), ShapeError);
}

TEST(Elementwise, NonFiniteOutputIsAnError) {
  Tape tape;
  EXPECT_THROW(exp(tape.constant(Tensor::scalar(1000.0))), NumericError);
}

// --------------------------------------------------------------------------
// backward

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1, -2, 3}), true);
  tape.backward(sum(x));
  for (double g : tape.grad(x).data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquares) {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1, 2}), true);
  Var loss = sum(mul(x, x));
  tape.backward(loss);
  EXPECT_EQ(tape.grad(x), Tensor::from({2, 4}));
  EXPECT_EQ(tape.grad(loss).item(), 1.0);
}

TEST(Backward, FanOutAccumulates) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0), true);
  Var y = add(mul(x, x), scale(x, 2.0));  // x^2 + 2x
  tape.backward(y);
  EXPECT_EQ(tape.grad(x).item(), 8.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1, 2}), true);
  EXPECT_THROW(tape.backward(scale(x, 2.0)), ShapeError);
}

TEST(Backward, DetachedGradientRequestThrows) {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1, 2}), true);
  Var c = tape.constant(Tensor::from({3, 4}));
  tape.backward(sum(mul(x, c)));
  EXPECT_EQ(tape.grad(x), Tensor::from({3, 4}));
  EXPECT_THROW(tape.grad(c), std::invalid_argument);
}

TEST(Backward, VisitsRecordsInReverseOrder) {
  std::vector<int> order;
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(1.0), true);
  auto tagged = [&](Var in, int tag) {
    return tape.record("tag", in.value(), {in}, [&order, &tape, in, tag](const Tensor& g, const Tensor&) {
      order.push_back(tag);
      (*tape.grad_slot(in))[0] += g[0];
    });
  };
  Var a = tagged(x, 1);
  Var b = tagged(a, 2);
  Var c = tagged(b, 3);
  tape.backward(c);
  EXPECT_EQ(order, (std::vector<int>{3, 2, 1}));
}

// Every differentiable op: >= 5 seeds x >= 3 shapes against central differences.
TEST(GradCheck, EveryOpMatchesFiniteDifferences) {
  for (const OpCase& c : op_cases()) {
    ASSERT_GE(c.shapes.size(), 3u) << c.name;
    for (const auto& shapes : c.shapes) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed * 7919 + 13);
        std::vector<Tensor> inputs;
        for (const Shape& s : shapes) inputs.push_back(random_tensor(s, rng, c.lo, c.hi));
        auto fn = [&](Tape&, const std::vector<Var>& v) { return weighted_sum(c.op(v), seed); };
        GradCheckResult r = gradcheck(fn, inputs);
        EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " seed " << seed << " input " << r.worst_input << "["
                                         << r.worst_index << "]";
      }
    }
  }
}

TEST(GradCheck, CompositeChain) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 100);
    std::vector<Tensor> inputs{random_tensor({4, 4, 3}, rng), random_tensor({3, 3, 3}, rng),
                               random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)};
    auto fn = [&](Tape&, const std::vector<Var>& v) {
      Var y = conv2d(v[0], v[1], ConvMode::kDepthwise, 1, 1);
      Var gate = sigmoid(global_avg_pool(y));
      y = conv2d(mul(y, gate), v[2], ConvMode::kPointwise);
      y = layer_norm(gelu(y), v[3], v[4]);
      return weighted_sum(softmax(reshape(y, {16, 5}), 1), seed);
    };
    EXPECT_LT(gradcheck(fn, inputs).max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalOutputs) {
  auto run = [] {
    Rng rng(42);
    Tape tape;
    Var x = tape.constant(random_tensor({6, 6, 4}, rng));
    Var k = tape.constant(random_tensor({3, 3, 4, 4}, rng));
    Var y = conv2d(x, k, ConvMode::kStrided, 2, 1);
    y = dropout(gelu(y), 0.2, 5, 1, 0, true);
    return softmax(y, 2).value();
  };
  EXPECT_EQ(run(), run());
}
