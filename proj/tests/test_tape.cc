#include <gtest/gtest.h>

#include <random>

#include "test_util.h"
#include "tim/errors.h"
#include "tim/tape.h"

namespace tim {
namespace {

using testing::LossBuilder;
using testing::random_tensor;
using testing::worst_gradient_error;

// Reduces any node to a scalar through a fixed random weighting, so every
// output element influences the loss differently.
Var weighted_sum(Tape& tape, Var v, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(v, tape.constant(random_tensor(v.shape(), rng))));
}

struct PrimitiveCase {
  const char* name;
  std::map<std::string, Tensor> params;
  LossBuilder build;
};

std::vector<PrimitiveCase> primitive_cases() {
  std::mt19937_64 rng(11);
  auto r = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return random_tensor(s, rng, lo, hi);
  };
  std::vector<PrimitiveCase> cases;
  cases.push_back({"matmul", {{"a", r({3, 4})}, {"b", r({4, 2})}},
                   [](Tape& t, const auto& v) { return weighted_sum(t, matmul(v.at("a"), v.at("b"))); }});
  cases.push_back({"batched_matmul", {{"a", r({2, 1, 3})}, {"b", r({2, 3, 4})}},
                   [](Tape& t, const auto& v) {
                     return weighted_sum(t, batched_matmul(v.at("a"), v.at("b")));
                   }});
  cases.push_back({"transpose", {{"a", r({2, 3})}},
                   [](Tape& t, const auto& v) { return weighted_sum(t, transpose(v.at("a"))); }});
  cases.push_back({"add", {{"a", r({2, 3})}, {"b", r({2, 3})}},
                   [](Tape& t, const auto& v) { return weighted_sum(t, add(v.at("a"), v.at("b"))); }});
  cases.push_back({"mul", {{"a", r({2, 3})}, {"b", r({2, 3})}},
                   [](Tape& t, const auto& v) { return weighted_sum(t, mul(v.at("a"), v.at("b"))); }});
  cases.push_back({"add_row", {{"a", r({3, 2})}, {"b", r({1, 2})}},
                   [](Tape& t, const auto& v) { return weighted_sum(t, add_row(v.at("a"), v.at("b"))); }});
  cases.push_back({"scale", {{"a", r({2, 2})}},
                   [](Tape& t, const auto& v) { return weighted_sum(t, scale(v.at("a"), -1.7)); }});
  cases.push_back({"add_scalar", {{"a", r({2, 2})}},
                   [](Tape& t, const auto& v) {
                     return weighted_sum(t, mul(add_scalar(v.at("a"), 0.3), v.at("a")));
                   }});
  cases.push_back({"sigmoid", {{"a", r({2, 3}, -3, 3)}},
                   [](Tape& t, const auto& v) { return weighted_sum(t, sigmoid(v.at("a"))); }});
  // Keep relu inputs away from the kink.
  Tensor relu_in = r({3, 3});
  for (double& x : relu_in.mutable_data()) x = x < 0 ? x - 0.1 : x + 0.1;
  cases.push_back({"relu", {{"a", relu_in}},
                   [](Tape& t, const auto& v) { return weighted_sum(t, relu(v.at("a"))); }});
  cases.push_back({"reshape", {{"a", r({2, 6})}},
                   [](Tape& t, const auto& v) {
                     return weighted_sum(t, reshape(v.at("a"), Shape{3, 4}));
                   }});
  cases.push_back({"concat_cols", {{"a", r({3, 2})}, {"b", r({3, 1})}},
                   [](Tape& t, const auto& v) {
                     return weighted_sum(t, concat_cols(v.at("a"), v.at("b")));
                   }});
  cases.push_back({"gather_rows", {{"a", r({2, 3})}},
                   [](Tape& t, const auto& v) {
                     return weighted_sum(t, gather_rows(v.at("a"), {1, 0, 1, 1}));
                   }});
  cases.push_back({"softmax_rows", {{"a", r({3, 4}, -2, 2)}},
                   [](Tape& t, const auto& v) {
                     return weighted_sum(t, softmax_rows(v.at("a"), 0.7));
                   }});
  cases.push_back({"rope_rotate", {{"a", r({4, 6})}},
                   [](Tape& t, const auto& v) {
                     return weighted_sum(t, rope_rotate(v.at("a"), 100.0));
                   }});
  cases.push_back({"l2_normalize_rows", {{"a", r({3, 4})}},
                   [](Tape& t, const auto& v) {
                     return weighted_sum(t, l2_normalize_rows(v.at("a")));
                   }});
  cases.push_back({"sum", {{"a", r({2, 2})}},
                   [](Tape&, const auto& v) { return sum(mul(v.at("a"), v.at("a"))); }});
  cases.push_back({"bce_mean", {{"a", r({4, 1}, -2, 2)}},
                   [](Tape&, const auto& v) {
                     return bce_mean(sigmoid(v.at("a")), {1, 0, 0, 1});
                   }});
  cases.push_back({"bce_with_logits_mean", {{"a", r({4, 1}, -3, 3)}},
                   [](Tape&, const auto& v) {
                     return bce_with_logits_mean(v.at("a"), {1, 0, 1, 0});
                   }});
  return cases;
}

TEST(TapeTest, EveryPrimitiveMatchesFiniteDifferences) {
  for (const auto& c : primitive_cases()) {
    std::string worst;
    const double err = worst_gradient_error(c.build, c.params, &worst);
    EXPECT_LE(err, 1e-6) << c.name << " (" << worst << ")";
  }
}

TEST(TapeTest, ForwardValuesMatchValueKernels) {
  std::mt19937_64 rng(5);
  const Tensor a = random_tensor(Shape{3, 4}, rng);
  Tape tape;
  Var x = tape.constant(a);
  EXPECT_EQ(softmax_rows(x, 0.5).value(), softmax_rows(a, 0.5));
  EXPECT_EQ(rope_rotate(x, 50.0).value(), rope_rotate(a, 50.0));
  EXPECT_EQ(l2_normalize_rows(x).value(), l2_normalize_rows(a));
  EXPECT_EQ(transpose(x).value(), transpose(a));
}

TEST(TapeTest, BceWithLogitsAgreesWithBceOnProbabilities) {
  Tape tape;
  Var z = tape.constant(Tensor::Matrix({{0.3}, {-1.2}, {2.0}}));
  const std::vector<double> labels{1, 0, 0};
  EXPECT_NEAR(bce_with_logits_mean(z, labels).value().item(),
              bce_mean(sigmoid(z), labels).value().item(), 1e-14);
}

TEST(TapeTest, BceWithLogitsIsFiniteForHugeLogits) {
  Tape tape;
  Var z = tape.parameter("z", Tensor::Matrix({{800.0}, {-800.0}}));
  Var loss = bce_with_logits_mean(z, {0, 1});
  EXPECT_NEAR(loss.value().item(), 800.0, 1e-9);
  const auto g = tape.gradients(loss);
  EXPECT_NEAR(g.at("z")[0], 0.5, 1e-12);
  EXPECT_NEAR(g.at("z")[1], -0.5, 1e-12);
}

TEST(TapeTest, UnusedParametersGetZeroGradient) {
  Tape tape;
  Var a = tape.parameter("a", Tensor::Matrix({{1.0, 2.0}}));
  tape.parameter("unused", Tensor::Matrix({{3.0}}));
  const auto g = tape.gradients(sum(a));
  EXPECT_EQ(g.at("unused"), Tensor::Zeros(Shape{1, 1}));
  EXPECT_EQ(g.at("a"), Tensor::Matrix({{1.0, 1.0}}));
}

TEST(TapeTest, ReusedNodeAccumulatesGradient) {
  Tape tape;
  Var a = tape.parameter("a", Tensor::Matrix({{2.0}}));
  const auto g = tape.gradients(sum(mul(a, add(a, a))));  // 2a^2
  EXPECT_DOUBLE_EQ(g.at("a")[0], 8.0);
}

TEST(TapeTest, RejectsNonScalarLossAndDuplicateNames) {
  Tape tape;
  Var a = tape.parameter("a", Tensor::Matrix({{1.0, 2.0}}));
  EXPECT_THROW(tape.gradients(a), InvalidInput);
  EXPECT_THROW(tape.parameter("a", Tensor::Scalar(1.0)), InvalidInput);
}

TEST(TapeTest, ShapeErrorsAreReported) {
  Tape tape;
  Var a = tape.constant(Tensor::Zeros(Shape{2, 3}));
  Var b = tape.constant(Tensor::Zeros(Shape{2, 2}));
  EXPECT_THROW(add(a, b), InvalidInput);
  EXPECT_THROW(matmul(a, a), InvalidInput);
  EXPECT_THROW(gather_rows(a, {5}), InvalidInput);
  EXPECT_THROW(bce_mean(a, {1.0}), InvalidInput);
}

TEST(TapeTest, ReplayReproducesRecordedValues) {
  std::mt19937_64 rng(8);
  Tape tape;
  Var w = tape.parameter("w", random_tensor(Shape{4, 4}, rng));
  Var x = tape.constant(random_tensor(Shape{3, 4}, rng));
  Var h = l2_normalize_rows(rope_rotate(matmul(x, w), 10.0));
  Var s = softmax_rows(matmul(h, transpose(h)), 2.0);
  sum(sigmoid(s));
  const auto values = tape.replay();
  ASSERT_EQ(values.size(), tape.node_count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    EXPECT_EQ(values[i], tape.value(Var(&tape, static_cast<int>(i)))) << "node " << i;
  }
}

}  // namespace
}  // namespace tim
