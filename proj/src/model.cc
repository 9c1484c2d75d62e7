#include "tim/model.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "tim/errors.h"

namespace tim {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTim: return "tim";
    case ModelKind::kMlpContext: return "mlp";
    case ModelKind::kMlpInteraction: return "mlp_int";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "tim") return ModelKind::kTim;
  if (name == "mlp") return ModelKind::kMlpContext;
  if (name == "mlp_int") return ModelKind::kMlpInteraction;
  throw ConfigError("unknown model kind '" + name + "'");
}

void ModelConfig::validate() const {
  if (slots < 1) throw ConfigError("slots must be >= 1");
  if (history_days < 1) throw ConfigError("history_days must be >= 1");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (attention_dim < 1) throw ConfigError("attention_dim must be >= 1");
  if (context_dim < 1) throw ConfigError("context_dim must be >= 1");
  for (std::size_t w : mlp_hidden) {
    if (w < 1) throw ConfigError("mlp_hidden widths must be >= 1");
  }
  if (kind == ModelKind::kTim && use_rope && attention_dim % 2 != 0) {
    throw ConfigError("attention_dim must be even when use_rope is set");
  }
  if (!(rope_base > 0.0)) throw ConfigError("rope_base must be positive");
}

std::size_t ModelConfig::head_input_dim() const {
  switch (kind) {
    case ModelKind::kTim: return attention_dim + context_dim;
    case ModelKind::kMlpContext: return context_dim + slots;
    case ModelKind::kMlpInteraction: return context_dim + slots + feature_dim;
  }
  return 0;
}

void UserDayExample::validate(const ModelConfig& config) const {
  const Shape expected{config.slots, config.history_days, config.feature_dim};
  if (!(x.shape() == expected)) {
    throw InvalidInput("x has shape " + x.shape().to_string() + ", expected " +
                       expected.to_string());
  }
  if (hist_date_types.size() != config.history_days) {
    throw InvalidInput("hist_date_types has length " +
                       std::to_string(hist_date_types.size()) + ", expected " +
                       std::to_string(config.history_days));
  }
  if (context.size() != config.context_dim) {
    throw InvalidInput("context has length " + std::to_string(context.size()) +
                       ", expected " + std::to_string(config.context_dim));
  }
  if (!labels.empty() && labels.size() != config.slots) {
    throw InvalidInput("labels has length " + std::to_string(labels.size()) +
                       ", expected " + std::to_string(config.slots));
  }
  for (int label : labels) {
    if (label != 0 && label != 1) throw InvalidInput("labels must be 0 or 1");
  }
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw InvalidInput("missing parameter " + name);
  return it->second;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

namespace {

std::map<std::string, Shape> expected_shapes(const ModelConfig& config) {
  std::map<std::string, Shape> shapes;
  const std::size_t d1 = config.feature_dim, d2 = config.attention_dim;
  if (config.kind == ModelKind::kTim) {
    shapes["tau.w1_q"] = Shape{d1, d2};
    shapes["tau.w1_k"] = Shape{d1, d2};
    shapes["tau.w1_v"] = Shape{d1, d2};
    shapes["tau.w2_q"] = Shape{d2, d2};
    shapes["tau.w2_k"] = Shape{d2, d2};
    shapes["tau.w2_v"] = Shape{d2, d2};
    shapes["tau.dte"] = Shape{2, d1};
  }
  std::size_t in = config.head_input_dim();
  std::vector<std::size_t> widths = config.mlp_hidden;
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    shapes["head.w" + std::to_string(i)] = Shape{in, widths[i]};
    shapes["head.b" + std::to_string(i)] = Shape{1, widths[i]};
    in = widths[i];
  }
  return shapes;
}

Tensor xavier_uniform(Shape shape, std::mt19937_64& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::Zeros(shape);
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

std::vector<std::size_t> date_indices(const std::vector<DateType>& types,
                                      std::size_t repeats) {
  std::vector<std::size_t> idx;
  idx.reserve(types.size() * repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    for (DateType t : types) idx.push_back(static_cast<std::size_t>(t));
  }
  return idx;
}

// K x n matrix with `row` repeated in every row.
Tensor tile_rows(const std::vector<double>& row, std::size_t k) {
  Tensor t = Tensor::Zeros(Shape{k, row.size()});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < row.size(); ++j) t.at(i, j) = row[j];
  }
  return t;
}

// Constant head input of the MLP baselines.
Tensor baseline_head_input(const UserDayExample& ex, const ModelConfig& config) {
  const std::size_t k = config.slots, l = config.history_days,
                    d1 = config.feature_dim, dc = config.context_dim;
  Tensor in = Tensor::Zeros(Shape{k, config.head_input_dim()});
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t j = 0; j < dc; ++j) in.at(s, j) = ex.context[j];
    in.at(s, dc + s) = 1.0;
    if (config.kind == ModelKind::kMlpInteraction) {
      for (std::size_t f = 0; f < d1; ++f) {
        double total = 0.0;
        for (std::size_t day = 0; day < l; ++day) total += ex.x[(s * l + day) * d1 + f];
        in.at(s, dc + k + f) = total / static_cast<double>(l);
      }
    }
  }
  return in;
}

Var self_attention_graph(Var o1, const std::map<std::string, Var>& vars,
                         const ModelConfig& config) {
  Var q2 = matmul(o1, vars.at("tau.w2_q"));
  Var k2 = matmul(o1, vars.at("tau.w2_k"));
  Var v2 = matmul(o1, vars.at("tau.w2_v"));
  if (config.use_rope) {
    q2 = rope_rotate(q2, config.rope_base);
    k2 = rope_rotate(k2, config.rope_base);
  }
  Var gq = l2_normalize_rows(q2);
  Var gk = l2_normalize_rows(k2);
  Var mixing = add_scalar(matmul(gq, transpose(gk)), 1.0);
  Var o2 = matmul(mixing, v2);
  if (config.scale_ones_by_slots) {
    o2 = scale(o2, 1.0 / static_cast<double>(config.slots));
  }
  return o2;
}

}  // namespace

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> dte_dist(0.0, 0.01);
  ModelParams params;
  for (const auto& [name, shape] : expected_shapes(config)) {
    if (name == "tau.dte") {
      Tensor t = Tensor::Zeros(shape);
      for (double& v : t.mutable_data()) v = dte_dist(rng);
      params.tensors.emplace(name, std::move(t));
    } else if (name.rfind("head.b", 0) == 0) {
      params.tensors.emplace(name, Tensor::Zeros(shape));
    } else {
      params.tensors.emplace(name, xavier_uniform(shape, rng));
    }
  }
  return params;
}

void check_param_shapes(const ModelParams& params, const ModelConfig& config) {
  const auto shapes = expected_shapes(config);
  for (const auto& [name, shape] : shapes) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end()) throw InvalidInput("missing parameter " + name);
    if (!(it->second.shape() == shape)) {
      throw InvalidInput("parameter " + name + " has shape " +
                         it->second.shape().to_string() + ", expected " +
                         shape.to_string());
    }
  }
  for (const auto& [name, t] : params.tensors) {
    if (!shapes.count(name)) throw InvalidInput("unexpected parameter " + name);
  }
}

Tensor target_attention(const Tensor& x_k, const Tensor& d_hist,
                        const Tensor& d_q, const ModelParams& params,
                        const ModelConfig& config, Tensor* weights) {
  const std::size_t l = config.history_days, d1 = config.feature_dim;
  if (!(x_k.shape() == Shape{l, d1}) || !(d_hist.shape() == Shape{l, d1}) ||
      !(d_q.shape() == Shape{1, d1})) {
    throw InvalidInput("target_attention shape mismatch");
  }
  Tensor z = x_k;
  Tensor query_source = Tensor::Zeros(Shape{1, d1});
  if (config.use_dte) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += d_hist[i];
    query_source = d_q;
  }
  const Tensor q1 = matmul(query_source, params.at("tau.w1_q"));
  const Tensor k1 = matmul(z, params.at("tau.w1_k"));
  const Tensor v1 = matmul(z, params.at("tau.w1_v"));
  const Tensor w = softmax_scaled(
      matmul(q1, transpose(k1)),
      1.0 / std::sqrt(static_cast<double>(config.attention_dim)));
  if (weights) *weights = w;
  return matmul(w, v1);
}

Tensor linear_self_attention(const Tensor& o1, const ModelParams& params,
                             const ModelConfig& config) {
  if (!(o1.shape() == Shape{config.slots, config.attention_dim})) {
    throw InvalidInput("linear_self_attention expects K x d2 input, got " +
                       o1.shape().to_string());
  }
  Tape tape;
  std::map<std::string, Var> vars;
  for (const char* name : {"tau.w2_q", "tau.w2_k", "tau.w2_v"}) {
    vars.emplace(name, tape.constant(params.at(name)));
  }
  return self_attention_graph(tape.constant(o1), vars, config).value();
}

std::map<std::string, Var> register_params(Tape& tape, const ModelParams& params) {
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : params.tensors) {
    vars.emplace(name, tape.parameter(name, t));
  }
  return vars;
}

ForwardGraph build_forward(Tape& tape, const std::map<std::string, Var>& vars,
                           const UserDayExample& example,
                           const ModelConfig& config) {
  example.validate(config);
  const std::size_t k = config.slots, l = config.history_days,
                    d1 = config.feature_dim;
  ForwardGraph graph;
  Var context = tape.constant(tile_rows(example.context, k));
  if (config.kind == ModelKind::kTim) {
    Var x = tape.constant(example.x.reshaped(Shape{k * l, d1}));
    Var z = x;
    Var query_source = tape.constant(Tensor::Zeros(Shape{1, d1}));
    if (config.use_dte) {
      const Var& dte = vars.at("tau.dte");
      z = add(x, gather_rows(dte, date_indices(example.hist_date_types, k)));
      query_source = gather_rows(
          dte, {static_cast<std::size_t>(example.target_date_type)});
    }
    Var q1 = matmul(query_source, vars.at("tau.w1_q"));
    Var k1 = matmul(z, vars.at("tau.w1_k"));
    Var v1 = matmul(z, vars.at("tau.w1_v"));
    Var scores = reshape(matmul(k1, transpose(q1)), Shape{k, l});
    graph.attention = softmax_rows(
        scores, 1.0 / std::sqrt(static_cast<double>(config.attention_dim)));
    Var pooled = batched_matmul(
        reshape(graph.attention, Shape{k, 1, l}),
        reshape(v1, Shape{k, l, config.attention_dim}));
    graph.o1 = reshape(pooled, Shape{k, config.attention_dim});
    graph.o2 = self_attention_graph(graph.o1, vars, config);
    graph.head_input = concat_cols(graph.o2, context);
  } else {
    graph.head_input = tape.constant(baseline_head_input(example, config));
  }
  Var h = graph.head_input;
  const std::size_t layers = config.mlp_hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    h = add_row(matmul(h, vars.at("head.w" + std::to_string(i))),
                vars.at("head.b" + std::to_string(i)));
    if (i + 1 < layers) h = relu(h);
  }
  graph.logits = h;
  return graph;
}

Var example_loss(Tape& tape, const std::map<std::string, Var>& vars,
                 const UserDayExample& example, const ModelConfig& config) {
  if (example.labels.size() != config.slots) {
    throw InvalidInput("training example without labels");
  }
  ForwardGraph graph = build_forward(tape, vars, example, config);
  return bce_with_logits_mean(
      graph.logits,
      std::vector<double>(example.labels.begin(), example.labels.end()));
}

TauOutputs tau_forward(const UserDayExample& example, const ModelParams& params,
                       const ModelConfig& config) {
  if (config.kind != ModelKind::kTim) {
    throw InvalidInput("tau_forward needs a TIM model");
  }
  Tape tape;
  auto vars = register_params(tape, params);
  ForwardGraph graph = build_forward(tape, vars, example, config);
  return {graph.attention.value(), graph.o1.value(), graph.o2.value()};
}

SlotCtr predict_slot_ctr(const UserDayExample& example, const ModelParams& params,
                         const ModelConfig& config) {
  Tape tape;
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : params.tensors) vars.emplace(name, tape.constant(t));
  ForwardGraph graph = build_forward(tape, vars, example, config);
  const Tensor& logits = graph.logits.value();
  SlotCtr out(config.slots);
  constexpr double kFloor = 1e-300;
  const double ceiling = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(sigmoid(logits[i]), kFloor, ceiling);
  }
  return out;
}

}  // namespace tim
