#include <gtest/gtest.h>

#include <cmath>

#include "test_util.h"
#include "tim/errors.h"
#include "tim/simulator.h"
#include "tim/train.h"

namespace tim {
namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.slots = 12;
  c.history_days = 7;
  c.attention_dim = 8;
  c.mlp_hidden = {16};
  return c;
}

std::vector<UserDayExample> tiny_dataset(std::size_t users, std::uint64_t seed) {
  PopulationConfig pc;
  pc.size = users;
  HistoryConfig hc;
  hc.history_days = 7;
  const auto population = generate_population(pc, seed);
  const std::vector<std::int64_t> days{14, 15, 19};
  return make_dataset(population, hc, days, seed);
}

TEST(TrainTest, LossDecreasesOnSyntheticData) {
  const auto data = tiny_dataset(60, 1);
  const ModelConfig c = tiny_config();
  TrainHyper h;
  h.epochs = 6;
  h.lr = 3e-3;
  const double before = mean_loss(data, init_params(c), c);
  const TrainResult r = train(data, c, h);
  ASSERT_EQ(r.log.epoch_loss.size(), 6u);
  EXPECT_LT(mean_loss(data, r.params, c), before);
  EXPECT_LT(r.log.epoch_loss.back(), r.log.epoch_loss.front());
}

TEST(TrainTest, IsDeterministicForFixedSeeds) {
  const auto data = tiny_dataset(20, 2);
  const ModelConfig c = tiny_config();
  TrainHyper h;
  h.epochs = 2;
  const TrainResult a = train(data, c, h), b = train(data, c, h);
  EXPECT_EQ(a.params.tensors, b.params.tensors);
  EXPECT_EQ(a.log.epoch_loss, b.log.epoch_loss);
  h.seed = 99;
  EXPECT_NE(train(data, c, h).params.tensors, a.params.tensors);
}

TEST(TrainTest, ZeroLearningRateLeavesWeightsUntouched) {
  const auto data = tiny_dataset(10, 3);
  const ModelConfig c = tiny_config();
  TrainHyper h;
  h.epochs = 1;
  h.lr = 0.0;
  EXPECT_EQ(train(data, c, h).params.tensors, init_params(c).tensors);
}

TEST(TrainTest, BaselinesTrainToo) {
  const auto data = tiny_dataset(30, 4);
  for (ModelKind kind : {ModelKind::kMlpContext, ModelKind::kMlpInteraction}) {
    ModelConfig c = tiny_config();
    c.kind = kind;
    TrainHyper h;
    h.epochs = 3;
    h.lr = 3e-3;
    const TrainResult r = train(data, c, h);
    EXPECT_LT(mean_loss(data, r.params, c), mean_loss(data, init_params(c), c))
        << model_kind_name(kind);
  }
}

TEST(TrainTest, RejectsEmptyDatasetAndBadExamples) {
  const ModelConfig c = tiny_config();
  EXPECT_THROW(train({}, c, TrainHyper{}), InvalidInput);
  auto data = tiny_dataset(2, 5);
  data[1].context.push_back(0.0);
  EXPECT_THROW(train(data, c, TrainHyper{}), InvalidInput);
}

TEST(TrainTest, StripeScoreIsZeroWithoutDateEmbeddings) {
  ModelConfig c = tiny_config();
  c.use_dte = false;
  const auto probe = calendar(0, 14);
  EXPECT_NEAR(attention_stripe_score(init_params(c), probe, c), 0.0, 1e-15);
}

TEST(TrainTest, StripeScoreSeesPlantedDateTypes) {
  ModelConfig c = tiny_config();
  ModelParams p = init_params(c);
  // Make the work and rest embeddings opposite and the projections identity
  // on the first coordinates, so same-type days score higher.
  Tensor dte = Tensor::Zeros(Shape{2, c.feature_dim});
  dte.at(0, 0) = 3.0;
  dte.at(1, 0) = -3.0;
  p.tensors["tau.dte"] = dte;
  Tensor eye = Tensor::Zeros(Shape{c.feature_dim, c.attention_dim});
  for (std::size_t i = 0; i < c.feature_dim; ++i) eye.at(i, i) = 1.0;
  p.tensors["tau.w1_q"] = eye;
  p.tensors["tau.w1_k"] = eye;
  const auto probe = calendar(0, 14);
  const Tensor a = date_type_attention(p, probe, c);
  EXPECT_GT(a.at(0, 1), a.at(0, 5));  // work->work beats work->rest
  EXPECT_GT(attention_stripe_score(p, probe, c), 0.0);
  // Single-type probe: no cross pairs.
  EXPECT_EQ(attention_stripe_score(p, calendar(0, 5), c), 0.0);
}

TEST(TrainTest, DateTypeAttentionNeedsTim) {
  ModelConfig c = tiny_config();
  c.kind = ModelKind::kMlpContext;
  EXPECT_THROW(date_type_attention(init_params(c), calendar(0, 7), c), InvalidInput);
}

}  // namespace
}  // namespace tim
