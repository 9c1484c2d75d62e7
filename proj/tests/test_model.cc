#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.h"
#include "tim/errors.h"
#include "tim/model.h"

namespace tim {
namespace {

using testing::random_tensor;
using Mat = std::vector<std::vector<double>>;

ModelConfig small_config(bool rope, bool dte) {
  ModelConfig c;
  c.slots = 4;
  c.history_days = 3;
  c.feature_dim = 5;
  c.attention_dim = 8;
  c.context_dim = 2;
  c.mlp_hidden = {8, 4};
  c.use_rope = rope;
  c.use_dte = dte;
  c.rope_base = 100.0;
  c.seed = 3;
  return c;
}

UserDayExample random_example(const ModelConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  UserDayExample ex;
  ex.x = random_tensor(Shape{c.slots, c.history_days, c.feature_dim}, rng, 0.0, 1.0);
  for (std::size_t d = 0; d < c.history_days; ++d) {
    ex.hist_date_types.push_back(d % 3 == 2 ? DateType::kRest : DateType::kWork);
  }
  ex.target_date_type = DateType::kRest;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < c.context_dim; ++i) ex.context.push_back(u(rng));
  for (std::size_t s = 0; s < c.slots; ++s) ex.labels.push_back(s % 2);
  return ex;
}

// Loop-based reference implementation of the full forward pass.
Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

void rotate_and_normalize(Mat& m, bool rope, double base) {
  const std::size_t d = m[0].size();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (rope) {
      for (std::size_t j = 0; j < d / 2; ++j) {
        const double th = static_cast<double>(i) / std::pow(base, 2.0 * j / d);
        const double x = m[i][2 * j], y = m[i][2 * j + 1];
        m[i][2 * j] = x * std::cos(th) - y * std::sin(th);
        m[i][2 * j + 1] = x * std::sin(th) + y * std::cos(th);
      }
    }
    double n = 0.0;
    for (double v : m[i]) n += v * v;
    n = std::sqrt(n);
    for (double& v : m[i]) v /= n;
  }
}

std::vector<double> reference_ctr(const UserDayExample& ex, const ModelParams& p,
                                  const ModelConfig& c) {
  const std::size_t K = c.slots, L = c.history_days, d1 = c.feature_dim;
  const Mat dte = to_mat(p.at("tau.dte"));
  std::vector<double> dq(d1, 0.0);
  if (c.use_dte) dq = dte[static_cast<int>(ex.target_date_type)];
  const Mat q1 = mm(Mat{dq}, to_mat(p.at("tau.w1_q")));
  Mat o1;
  for (std::size_t k = 0; k < K; ++k) {
    Mat z(L, std::vector<double>(d1));
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t f = 0; f < d1; ++f)
        z[l][f] = ex.x[(k * L + l) * d1 + f] +
                  (c.use_dte ? dte[static_cast<int>(ex.hist_date_types[l])][f] : 0.0);
    const Mat k1 = mm(z, to_mat(p.at("tau.w1_k")));
    const Mat v1 = mm(z, to_mat(p.at("tau.w1_v")));
    std::vector<double> s(L);
    double mx = -INFINITY;
    for (std::size_t l = 0; l < L; ++l) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c.attention_dim; ++j) dot += q1[0][j] * k1[l][j];
      s[l] = dot / std::sqrt(static_cast<double>(c.attention_dim));
      mx = std::max(mx, s[l]);
    }
    double total = 0.0;
    for (double& v : s) total += (v = std::exp(v - mx));
    std::vector<double> row(c.attention_dim, 0.0);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < c.attention_dim; ++j) row[j] += s[l] / total * v1[l][j];
    o1.push_back(row);
  }
  Mat q2 = mm(o1, to_mat(p.at("tau.w2_q")));
  Mat k2 = mm(o1, to_mat(p.at("tau.w2_k")));
  const Mat v2 = mm(o1, to_mat(p.at("tau.w2_v")));
  rotate_and_normalize(q2, c.use_rope, c.rope_base);
  rotate_and_normalize(k2, c.use_rope, c.rope_base);
  Mat mix(K, std::vector<double>(K));
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      double dot = 1.0;
      for (std::size_t t = 0; t < q2[i].size(); ++t) dot += q2[i][t] * k2[j][t];
      mix[i][j] = dot;
    }
  Mat h = mm(mix, v2);
  for (auto& row : h) row.insert(row.end(), ex.context.begin(), ex.context.end());
  const std::size_t layers = c.mlp_hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    h = mm(h, to_mat(p.at("head.w" + std::to_string(i))));
    const Mat b = to_mat(p.at("head.b" + std::to_string(i)));
    for (auto& row : h)
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] += b[0][j];
        if (i + 1 < layers) row[j] = std::max(0.0, row[j]);
      }
  }
  std::vector<double> out;
  for (auto& row : h) out.push_back(1.0 / (1.0 + std::exp(-row[0])));
  return out;
}

class AblationTest : public ::testing::TestWithParam<std::pair<bool, bool>> {};

TEST_P(AblationTest, ForwardMatchesLoopReference) {
  const auto [rope, dte] = GetParam();
  const ModelConfig c = small_config(rope, dte);
  ModelParams p = init_params(c);
  // Larger date embeddings so the DTE path visibly matters.
  std::mt19937_64 rng(17);
  p.tensors["tau.dte"] = random_tensor(Shape{2, c.feature_dim}, rng);
  const UserDayExample ex = random_example(c, 5);
  const auto got = predict_slot_ctr(ex, p, c);
  const auto want = reference_ctr(ex, p, c);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t s = 0; s < got.size(); ++s) EXPECT_NEAR(got[s], want[s], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(AllFlags, AblationTest,
                         ::testing::Values(std::make_pair(false, false),
                                           std::make_pair(false, true),
                                           std::make_pair(true, false),
                                           std::make_pair(true, true)));

TEST(ModelTest, TargetAttentionValuePathMatchesGraph) {
  const ModelConfig c = small_config(true, true);
  ModelParams p = init_params(c);
  std::mt19937_64 rng(2);
  p.tensors["tau.dte"] = random_tensor(Shape{2, c.feature_dim}, rng);
  const UserDayExample ex = random_example(c, 9);
  const TauOutputs tau = tau_forward(ex, p, c);
  const std::size_t L = c.history_days, d1 = c.feature_dim;
  const Tensor& dte = p.at("tau.dte");
  Tensor d_hist = Tensor::Zeros(Shape{L, d1});
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t f = 0; f < d1; ++f)
      d_hist.at(l, f) = dte.at(static_cast<int>(ex.hist_date_types[l]), f);
  Tensor d_q = Tensor::Zeros(Shape{1, d1});
  for (std::size_t f = 0; f < d1; ++f) d_q[f] = dte.at(1, f);
  for (std::size_t k = 0; k < c.slots; ++k) {
    Tensor x_k = Tensor::Zeros(Shape{L, d1});
    for (std::size_t i = 0; i < L * d1; ++i) x_k[i] = ex.x[k * L * d1 + i];
    Tensor w;
    const Tensor o = target_attention(x_k, d_hist, d_q, p, c, &w);
    for (std::size_t j = 0; j < c.attention_dim; ++j) EXPECT_NEAR(o[j], tau.o1.at(k, j), 1e-13);
    for (std::size_t l = 0; l < L; ++l) EXPECT_NEAR(w[l], tau.attention.at(k, l), 1e-14);
  }
  const Tensor o2 = linear_self_attention(tau.o1, p, c);
  EXPECT_EQ(o2, tau.o2);
}

TEST(ModelTest, AttentionRowsAreDistributions) {
  const ModelConfig c = small_config(true, true);
  const auto tau = tau_forward(random_example(c, 1), init_params(c), c);
  for (std::size_t k = 0; k < c.slots; ++k) {
    double total = 0.0;
    for (std::size_t l = 0; l < c.history_days; ++l) {
      EXPECT_GE(tau.attention.at(k, l), 0.0);
      total += tau.attention.at(k, l);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(ModelTest, WithoutDteAttentionIsUniform) {
  const ModelConfig c = small_config(true, false);
  const auto tau = tau_forward(random_example(c, 4), init_params(c), c);
  for (std::size_t i = 0; i < tau.attention.size(); ++i) {
    EXPECT_NEAR(tau.attention[i], 1.0 / static_cast<double>(c.history_days), 1e-15);
  }
}

TEST(ModelTest, OnesTermSurvivesZeroProjections) {
  // With G(Q) G(K)^T contributing nothing every slot sees the column sum of V.
  ModelConfig c = small_config(false, true);
  ModelParams p = init_params(c);
  p.tensors["tau.w2_q"] = Tensor::Zeros(Shape{c.attention_dim, c.attention_dim});
  std::mt19937_64 rng(6);
  const Tensor o1 = random_tensor(Shape{c.slots, c.attention_dim}, rng);
  const Tensor o2 = linear_self_attention(o1, p, c);
  const Tensor v = matmul(o1, p.at("tau.w2_v"));
  for (std::size_t j = 0; j < c.attention_dim; ++j) {
    double col = 0.0;
    for (std::size_t k = 0; k < c.slots; ++k) col += v.at(k, j);
    for (std::size_t k = 0; k < c.slots; ++k) EXPECT_NEAR(o2.at(k, j), col, 1e-13);
  }
  c.scale_ones_by_slots = true;
  const Tensor scaled = linear_self_attention(o1, p, c);
  EXPECT_NEAR(scaled.at(0, 0), o2.at(0, 0) / static_cast<double>(c.slots), 1e-14);
}

TEST(ModelTest, RopeMakesSelfAttentionPositionAware) {
  // Identical slot inputs: without RoPE every output row matches.
  ModelConfig c = small_config(false, true);
  const ModelParams p = init_params(c);
  std::mt19937_64 rng(7);
  const Tensor row = random_tensor(Shape{1, c.attention_dim}, rng);
  Tensor o1 = Tensor::Zeros(Shape{c.slots, c.attention_dim});
  for (std::size_t k = 0; k < c.slots; ++k)
    for (std::size_t j = 0; j < c.attention_dim; ++j) o1.at(k, j) = row[j];
  const Tensor flat = linear_self_attention(o1, p, c);
  EXPECT_NEAR(flat.at(0, 0), flat.at(3, 0), 1e-14);
  c.use_rope = true;
  const Tensor rotated = linear_self_attention(o1, p, c);
  EXPECT_GT(std::abs(rotated.at(0, 0) - rotated.at(3, 0)), 1e-6);
}

TEST(ModelTest, RopeInnerProductsDependOnlyOnOffset) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pos(0, 30), shift(1, 30);
  const std::size_t d = 8;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(Shape{1, d}, rng), y = random_tensor(Shape{1, d}, rng);
    const int m = pos(rng), n = pos(rng), s = shift(rng);
    auto place = [&](const Tensor& v, int at) {
      Tensor t = Tensor::Zeros(Shape{static_cast<std::size_t>(at) + 1, d});
      for (std::size_t j = 0; j < d; ++j) t.at(at, j) = v[j];
      return rope_rotate(t, 10000.0);
    };
    auto dot = [&](const Tensor& a, int ra, const Tensor& b, int rb) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += a.at(ra, j) * b.at(rb, j);
      return acc;
    };
    const double base = dot(place(x, m), m, place(y, n), n);
    const double shifted = dot(place(x, m + s), m + s, place(y, n + s), n + s);
    EXPECT_NEAR(base, shifted, 1e-9);
  }
}

TEST(ModelTest, PredictionsStayInsideOpenInterval) {
  const ModelConfig c = small_config(true, true);
  ModelParams p = init_params(c);
  // Saturate the output layer.
  for (double& v : p.tensors["head.b2"].mutable_data()) v = 1e4;
  for (double s : predict_slot_ctr(random_example(c, 2), p, c)) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
  for (double& v : p.tensors["head.b2"].mutable_data()) v = -1e4;
  for (double s : predict_slot_ctr(random_example(c, 2), p, c)) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(ModelTest, BaselinesIgnoreAttentionParameters) {
  ModelConfig c = small_config(true, true);
  c.kind = ModelKind::kMlpContext;
  EXPECT_EQ(c.head_input_dim(), c.context_dim + c.slots);
  c.kind = ModelKind::kMlpInteraction;
  EXPECT_EQ(c.head_input_dim(), c.context_dim + c.slots + c.feature_dim);
  const ModelParams p = init_params(c);
  EXPECT_NO_THROW(check_param_shapes(p, c));
  const auto ctr = predict_slot_ctr(random_example(c, 3), p, c);
  EXPECT_EQ(ctr.size(), c.slots);
}

TEST(ModelTest, InitIsSeededAndShapesAreChecked) {
  const ModelConfig c = small_config(true, true);
  const ModelParams a = init_params(c), b = init_params(c);
  EXPECT_EQ(a.tensors, b.tensors);
  EXPECT_EQ(a.at("tau.w1_q").shape(), Shape({5, 8}));
  EXPECT_EQ(a.at("tau.w2_v").shape(), Shape({8, 8}));
  EXPECT_EQ(a.at("tau.dte").shape(), Shape({2, 5}));
  EXPECT_EQ(a.at("head.w0").shape(), Shape({10, 8}));
  EXPECT_EQ(a.at("head.b2").shape(), Shape({1, 1}));
  for (double v : a.at("head.b0").data()) EXPECT_EQ(v, 0.0);
  ModelParams bad = a;
  bad.tensors["tau.w1_k"] = Tensor::Zeros(Shape{5, 7});
  EXPECT_THROW(check_param_shapes(bad, c), InvalidInput);
  ModelConfig other = c;
  other.seed = 4;
  EXPECT_NE(init_params(other).tensors, a.tensors);
}

TEST(ModelTest, ConfigValidation) {
  ModelConfig c = small_config(true, true);
  c.attention_dim = 7;
  EXPECT_THROW(c.validate(), ConfigError);  // RoPE pairs coordinates
  c = small_config(true, true);
  c.slots = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_model_kind("transformer"), ConfigError);
  EXPECT_EQ(parse_model_kind(model_kind_name(ModelKind::kMlpInteraction)),
            ModelKind::kMlpInteraction);
}

TEST(ModelTest, ExampleValidationNamesTheField) {
  const ModelConfig c = small_config(true, true);
  UserDayExample ex = random_example(c, 1);
  ex.context.pop_back();
  try {
    ex.validate(c);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("context"), std::string::npos);
  }
  ex = random_example(c, 1);
  ex.labels[0] = 2;
  EXPECT_THROW(ex.validate(c), InvalidInput);
}

}  // namespace
}  // namespace tim
