#include "tim/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tim/errors.h"

namespace tim {

namespace {

struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
};

}  // namespace

TrainResult train(const std::vector<UserDayExample>& dataset,
                  const ModelConfig& config, const TrainHyper& hyper) {
  if (dataset.empty()) throw InvalidInput("train: empty dataset");
  if (hyper.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(hyper.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  for (const auto& ex : dataset) ex.validate(config);

  TrainResult result{init_params(config), {}};
  std::map<std::string, AdamSlot> adam;
  for (const auto& [name, t] : result.params.tensors) {
    adam[name] = {std::vector<double>(t.size(), 0.0),
                  std::vector<double>(t.size(), 0.0)};
  }

  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      Tape tape;
      auto vars = register_params(tape, result.params);
      Var total = example_loss(tape, vars, dataset[order[start]], config);
      for (std::size_t i = start + 1; i < end; ++i) {
        total = add(total, example_loss(tape, vars, dataset[order[i]], config));
      }
      const double batch = static_cast<double>(end - start);
      Var loss = scale(total, 1.0 / batch);
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        throw NumericalError("non-finite training loss at epoch " +
                             std::to_string(epoch) + ", step " +
                             std::to_string(step));
      }
      loss_total += loss_value * batch;

      const auto grads = tape.gradients(loss);
      ++step;
      const double bias1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
      for (auto& [name, param] : result.params.tensors) {
        const Tensor& g = grads.at(name);
        AdamSlot& slot = adam[name];
        auto w = param.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          slot.m[i] = hyper.beta1 * slot.m[i] + (1.0 - hyper.beta1) * g[i];
          slot.v[i] = hyper.beta2 * slot.v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
          const double m_hat = slot.m[i] / bias1;
          const double v_hat = slot.v[i] / bias2;
          w[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.adam_eps);
        }
      }
    }
    result.log.epoch_loss.push_back(loss_total /
                                    static_cast<double>(dataset.size()));
  }
  return result;
}

double mean_loss(const std::vector<UserDayExample>& dataset,
                 const ModelParams& params, const ModelConfig& config) {
  if (dataset.empty()) throw InvalidInput("mean_loss: empty dataset");
  double total = 0.0;
  for (const auto& ex : dataset) {
    Tape tape;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : params.tensors) vars.emplace(name, tape.constant(t));
    total += example_loss(tape, vars, ex, config).value().item();
  }
  return total / static_cast<double>(dataset.size());
}

Tensor date_type_attention(const ModelParams& params,
                           const std::vector<DateType>& probe_dates,
                           const ModelConfig& config) {
  if (config.kind != ModelKind::kTim) {
    throw InvalidInput("date-type attention needs a TIM model");
  }
  const std::size_t n = probe_dates.size();
  if (n == 0) throw InvalidInput("no probe dates");
  const std::size_t d1 = config.feature_dim;
  Tensor embeddings = Tensor::Zeros(Shape{n, d1});
  if (config.use_dte) {
    const Tensor& dte = params.at("tau.dte");
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<std::size_t>(probe_dates[i]);
      for (std::size_t j = 0; j < d1; ++j) embeddings.at(i, j) = dte.at(row, j);
    }
  }
  const Tensor queries = matmul(embeddings, params.at("tau.w1_q"));
  const Tensor keys = matmul(embeddings, params.at("tau.w1_k"));
  return softmax_rows(matmul(queries, transpose(keys)),
                      1.0 / std::sqrt(static_cast<double>(config.attention_dim)));
}

double attention_stripe_score(const ModelParams& params,
                              const std::vector<DateType>& probe_dates,
                              const ModelConfig& config) {
  const Tensor attention = date_type_attention(params, probe_dates, config);
  const std::size_t n = probe_dates.size();
  double same = 0.0, cross = 0.0;
  std::size_t same_count = 0, cross_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (probe_dates[i] == probe_dates[j]) {
        same += attention.at(i, j);
        ++same_count;
      } else {
        cross += attention.at(i, j);
        ++cross_count;
      }
    }
  }
  if (cross_count == 0) return 0.0;
  return same / static_cast<double>(same_count) -
         cross / static_cast<double>(cross_count);
}

}  // namespace tim
