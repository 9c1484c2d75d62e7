#pragma once

#include <cstdint>
#include <vector>

#include "tim/model.h"

namespace tim {

struct TrainHyper {
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainingLog {
  std::vector<double> epoch_loss;  // mean training loss seen during each epoch
};

struct TrainResult {
  ModelParams params;
  TrainingLog log;
};

// Mini-batch Adam on mean per-slot binary cross-entropy. Initial weights come
// from init_params(config); batch order from hyper.seed. Throws InvalidInput
// on an empty dataset and NumericalError if the loss goes non-finite.
TrainResult train(const std::vector<UserDayExample>& dataset,
                  const ModelConfig& config, const TrainHyper& hyper);

// Mean BCE of params over a dataset, without training.
double mean_loss(const std::vector<UserDayExample>& dataset,
                 const ModelParams& params, const ModelConfig& config);

// L x L target-attention weights obtained by querying with each probe day's
// date-type row against every probe day's date-type key.
Tensor date_type_attention(const ModelParams& params,
                           const std::vector<DateType>& probe_dates,
                           const ModelConfig& config);

// Mean attention between same-type probe days minus the mean across types.
// Positive when attention stripes follow the work/rest calendar.
double attention_stripe_score(const ModelParams& params,
                              const std::vector<DateType>& probe_dates,
                              const ModelConfig& config);

}  // namespace tim
