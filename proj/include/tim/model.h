#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tim/tape.h"
#include "tim/tensor.h"

namespace tim {

enum class DateType : std::uint8_t { kWork = 0, kRest = 1 };

// kTim is the full temporal interaction model. The two MLP kinds are the
// baselines: context + slot one-hot, optionally with per-slot interaction
// features averaged over the history window.
enum class ModelKind : std::uint8_t { kTim, kMlpContext, kMlpInteraction };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::kTim;
  std::size_t slots = 12;          // K
  std::size_t history_days = 14;   // L
  std::size_t feature_dim = 5;     // d1, also the date-type embedding width
  std::size_t attention_dim = 16;  // d2
  std::size_t context_dim = 4;
  std::vector<std::size_t> mlp_hidden{64, 32};
  bool use_rope = true;
  bool use_dte = true;
  double rope_base = 10000.0;
  // Divides (J + G(Q)G(K)^T)V by K. Off by default.
  bool scale_ones_by_slots = false;
  std::uint64_t seed = 1;

  // Throws ConfigError.
  void validate() const;
  std::size_t head_input_dim() const;
};

using SlotCtr = std::vector<double>;

struct UserDayExample {
  std::uint64_t user_id = 0;
  std::int64_t day = 0;
  Tensor x;  // K x L x d1
  std::vector<DateType> hist_date_types;
  DateType target_date_type = DateType::kWork;
  std::vector<double> context;
  std::vector<int> labels;

  // Throws InvalidInput naming the first inconsistent field.
  void validate(const ModelConfig& config) const;
};

// Named weight tensors. Names are stable and used as checkpoint keys:
//   tau.w1_q, tau.w1_k, tau.w1_v, tau.w2_q, tau.w2_k, tau.w2_v, tau.dte,
//   head.w<i>, head.b<i> for each dense layer (last one is the output).
struct ModelParams {
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const;
  std::size_t scalar_count() const;
};

// Xavier-uniform projections and dense weights, zero biases, N(0, 0.01^2)
// date-type rows; seeded from config.seed.
ModelParams init_params(const ModelConfig& config);

// Checks every tensor against the shapes implied by config. Throws
// InvalidInput naming the offending tensor.
void check_param_shapes(const ModelParams& params, const ModelConfig& config);

// Single-slot target attention evaluated directly on values. x_k and d_hist
// are L x d1, d_q is 1 x d1. When config.use_dte is false both date inputs
// are treated as zero. `weights`, if given, receives the 1 x L attention row.
Tensor target_attention(const Tensor& x_k, const Tensor& d_hist,
                        const Tensor& d_q, const ModelParams& params,
                        const ModelConfig& config, Tensor* weights = nullptr);

// O2 = (J + G(Q2) G(K2)^T) V2 for a K x d2 input.
Tensor linear_self_attention(const Tensor& o1, const ModelParams& params,
                             const ModelConfig& config);

std::map<std::string, Var> register_params(Tape& tape, const ModelParams& params);

struct ForwardGraph {
  Var logits;     // K x 1
  Var attention;  // K x L (TIM only)
  Var o1;         // K x d2 (TIM only)
  Var o2;         // K x d2 (TIM only)
  Var head_input;
};

ForwardGraph build_forward(Tape& tape, const std::map<std::string, Var>& vars,
                           const UserDayExample& example,
                           const ModelConfig& config);

// Loss term for one example: mean BCE over its K slots.
Var example_loss(Tape& tape, const std::map<std::string, Var>& vars,
                 const UserDayExample& example, const ModelConfig& config);

struct TauOutputs {
  Tensor attention;
  Tensor o1;
  Tensor o2;
};

TauOutputs tau_forward(const UserDayExample& example, const ModelParams& params,
                       const ModelConfig& config);

// Per-slot click probabilities, each strictly inside (0, 1).
SlotCtr predict_slot_ctr(const UserDayExample& example, const ModelParams& params,
                         const ModelConfig& config);

}  // namespace tim
