#include "tim/tape.h"

#include <algorithm>
#include <cmath>

#include "tim/errors.h"

namespace tim {

const Tensor& Var::value() const { return tape_->value(*this); }

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kBatchedMatmul: return "batched_matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kRope: return "rope_rotate";
    case OpKind::kL2NormalizeRows: return "l2_normalize_rows";
    case OpKind::kSum: return "sum";
    case OpKind::kBce: return "bce_mean";
    case OpKind::kBceWithLogits: return "bce_with_logits_mean";
  }
  return "unknown";
}

Var Tape::constant(Tensor value) {
  Node node{OpKind::kConstant, {-1, -1}, {}, std::move(value), false};
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(const std::string& name, Tensor value) {
  for (const auto& [existing, id] : params_) {
    if (existing == name) throw InvalidInput("duplicate parameter " + name);
  }
  Node node{OpKind::kParameter, {-1, -1}, {}, std::move(value), true};
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size() - 1);
  params_.emplace_back(name, id);
  return Var(this, id);
}

const Tensor& Tape::value(Var v) const {
  if (v.tape() != this || v.id() < 0 ||
      static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw InvalidInput("variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

Var Tape::record(OpKind op, std::initializer_list<Var> inputs, Attrs attrs) {
  Node node{op, {-1, -1}, std::move(attrs), Tensor(), false};
  std::size_t slot = 0;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw InvalidInput("operands live on different tapes");
    node.inputs[slot++] = in.id();
    node.needs_grad =
        node.needs_grad || nodes_[static_cast<std::size_t>(in.id())].needs_grad;
  }
  const Tensor* a = node.inputs[0] >= 0 ? &nodes_[node.inputs[0]].value : nullptr;
  const Tensor* b = node.inputs[1] >= 0 ? &nodes_[node.inputs[1]].value : nullptr;
  node.value = evaluate(node, a, b);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw InvalidInput(std::string(what) + " shape mismatch " +
                       a.shape().to_string() + " vs " + b.shape().to_string());
  }
}

double clamp_probability(double p) {
  return std::clamp(p, 1e-12, 1.0 - 1e-12);
}

double rope_angle(std::size_t row, std::size_t pair, std::size_t width,
                  double base) {
  return static_cast<double>(row) *
         std::pow(base, -2.0 * static_cast<double>(pair) /
                            static_cast<double>(width));
}

}  // namespace

Tensor Tape::evaluate(const Node& node, const Tensor* a, const Tensor* b) const {
  const Attrs& at = node.attrs;
  switch (node.op) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      return node.value;
    case OpKind::kMatmul:
      return tim::matmul(*a, *b);
    case OpKind::kBatchedMatmul:
      return tim::batched_matmul(*a, *b);
    case OpKind::kTranspose:
      return tim::transpose(*a);
    case OpKind::kAdd: {
      require_same_shape(*a, *b, "add");
      Tensor out = *a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*b)[i];
      return out;
    }
    case OpKind::kMul: {
      require_same_shape(*a, *b, "mul");
      Tensor out = *a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*b)[i];
      return out;
    }
    case OpKind::kAddRow: {
      if (a->rank() != 2 || b->rank() != 2 || b->rows() != 1 ||
          b->cols() != a->cols()) {
        throw InvalidInput("add_row shape mismatch " + a->shape().to_string() +
                           " + " + b->shape().to_string());
      }
      Tensor out = *a;
      const std::size_t n = a->cols();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*b)[i % n];
      return out;
    }
    case OpKind::kScale: {
      Tensor out = *a;
      for (double& v : out.mutable_data()) v *= at.scalar;
      return out;
    }
    case OpKind::kAddScalar: {
      Tensor out = *a;
      for (double& v : out.mutable_data()) v += at.scalar;
      return out;
    }
    case OpKind::kSigmoid: {
      Tensor out = *a;
      for (double& v : out.mutable_data()) v = tim::sigmoid(v);
      return out;
    }
    case OpKind::kRelu: {
      Tensor out = *a;
      for (double& v : out.mutable_data()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case OpKind::kReshape:
      return a->reshaped(at.shape);
    case OpKind::kConcatCols: {
      if (a->rank() != 2 || b->rank() != 2 || a->rows() != b->rows()) {
        throw InvalidInput("concat_cols shape mismatch " +
                           a->shape().to_string() + " | " +
                           b->shape().to_string());
      }
      const std::size_t r = a->rows(), ca = a->cols(), cb = b->cols();
      Tensor out = Tensor::Zeros(Shape{r, ca + cb});
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = a->at(i, j);
        for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = b->at(i, j);
      }
      return out;
    }
    case OpKind::kGatherRows: {
      if (a->rank() != 2) throw InvalidInput("gather_rows expects a matrix");
      const std::size_t n = a->cols();
      Tensor out = Tensor::Zeros(Shape{at.indices.size(), n});
      for (std::size_t i = 0; i < at.indices.size(); ++i) {
        if (at.indices[i] >= a->rows()) {
          throw InvalidInput("gather_rows index out of range");
        }
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = a->at(at.indices[i], j);
      }
      return out;
    }
    case OpKind::kSoftmaxRows:
      return tim::softmax_rows(*a, at.scalar);
    case OpKind::kRope:
      return tim::rope_rotate(*a, at.scalar);
    case OpKind::kL2NormalizeRows:
      return tim::l2_normalize_rows(*a, at.scalar);
    case OpKind::kSum: {
      double total = 0.0;
      for (double v : a->data()) total += v;
      return Tensor::Scalar(total);
    }
    case OpKind::kBce: {
      if (at.aux.size() != a->size()) throw InvalidInput("bce label count mismatch");
      double total = 0.0;
      for (std::size_t i = 0; i < a->size(); ++i) {
        const double p = clamp_probability((*a)[i]);
        total -= at.aux[i] * std::log(p) + (1.0 - at.aux[i]) * std::log(1.0 - p);
      }
      return Tensor::Scalar(total / static_cast<double>(a->size()));
    }
    case OpKind::kBceWithLogits: {
      if (at.aux.size() != a->size()) throw InvalidInput("bce label count mismatch");
      double total = 0.0;
      for (std::size_t i = 0; i < a->size(); ++i) {
        const double z = (*a)[i];
        total += std::max(z, 0.0) - z * at.aux[i] + std::log1p(std::exp(-std::abs(z)));
      }
      return Tensor::Scalar(total / static_cast<double>(a->size()));
    }
  }
  throw InvalidInput("unknown op");
}

void Tape::backprop(const Node& node, const Tensor& g,
                    std::vector<std::vector<double>>& grads) const {
  const int ia = node.inputs[0];
  const int ib = node.inputs[1];
  auto wants = [&](int id) {
    return id >= 0 && nodes_[static_cast<std::size_t>(id)].needs_grad;
  };
  auto buffer = [&](int id) -> std::vector<double>& {
    auto& buf = grads[static_cast<std::size_t>(id)];
    if (buf.empty()) buf.assign(nodes_[static_cast<std::size_t>(id)].value.size(), 0.0);
    return buf;
  };
  auto accumulate = [&](int id, const Tensor& delta) {
    auto& buf = buffer(id);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += delta[i];
  };
  const Tensor* a = ia >= 0 ? &nodes_[static_cast<std::size_t>(ia)].value : nullptr;
  const Tensor* b = ib >= 0 ? &nodes_[static_cast<std::size_t>(ib)].value : nullptr;
  const Attrs& at = node.attrs;

  switch (node.op) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      return;
    case OpKind::kMatmul:
      if (wants(ia)) accumulate(ia, tim::matmul(g, tim::transpose(*b)));
      if (wants(ib)) accumulate(ib, tim::matmul(tim::transpose(*a), g));
      return;
    case OpKind::kBatchedMatmul: {
      const std::size_t batch = a->shape()[0], m = a->shape()[1],
                        k = a->shape()[2], n = b->shape()[2];
      if (wants(ia)) {
        auto& da = buffer(ia);
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j)
                acc += g[s * m * n + i * n + j] * (*b)[s * k * n + p * n + j];
              da[s * m * k + i * k + p] += acc;
            }
      }
      if (wants(ib)) {
        auto& db = buffer(ib);
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) {
              double acc = 0.0;
              for (std::size_t i = 0; i < m; ++i)
                acc += (*a)[s * m * k + i * k + p] * g[s * m * n + i * n + j];
              db[s * k * n + p * n + j] += acc;
            }
      }
      return;
    }
    case OpKind::kTranspose:
      if (wants(ia)) accumulate(ia, tim::transpose(g));
      return;
    case OpKind::kAdd:
      if (wants(ia)) accumulate(ia, g);
      if (wants(ib)) accumulate(ib, g);
      return;
    case OpKind::kMul:
      if (wants(ia)) {
        auto& da = buffer(ia);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * (*b)[i];
      }
      if (wants(ib)) {
        auto& db = buffer(ib);
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * (*a)[i];
      }
      return;
    case OpKind::kAddRow:
      if (wants(ia)) accumulate(ia, g);
      if (wants(ib)) {
        auto& db = buffer(ib);
        const std::size_t n = db.size();
        for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
      }
      return;
    case OpKind::kScale:
      if (wants(ia)) {
        auto& da = buffer(ia);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += at.scalar * g[i];
      }
      return;
    case OpKind::kAddScalar:
    case OpKind::kReshape:
      if (wants(ia)) accumulate(ia, g);
      return;
    case OpKind::kSigmoid:
      if (wants(ia)) {
        auto& da = buffer(ia);
        for (std::size_t i = 0; i < da.size(); ++i) {
          const double y = node.value[i];
          da[i] += g[i] * y * (1.0 - y);
        }
      }
      return;
    case OpKind::kRelu:
      if (wants(ia)) {
        auto& da = buffer(ia);
        for (std::size_t i = 0; i < da.size(); ++i)
          if ((*a)[i] > 0.0) da[i] += g[i];
      }
      return;
    case OpKind::kConcatCols: {
      const std::size_t r = a->rows(), ca = a->cols(), cb = b->cols();
      if (wants(ia)) {
        auto& da = buffer(ia);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < ca; ++j) da[i * ca + j] += g.at(i, j);
      }
      if (wants(ib)) {
        auto& db = buffer(ib);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < cb; ++j) db[i * cb + j] += g.at(i, ca + j);
      }
      return;
    }
    case OpKind::kGatherRows:
      if (wants(ia)) {
        auto& da = buffer(ia);
        const std::size_t n = a->cols();
        for (std::size_t i = 0; i < at.indices.size(); ++i)
          for (std::size_t j = 0; j < n; ++j) da[at.indices[i] * n + j] += g.at(i, j);
      }
      return;
    case OpKind::kSoftmaxRows:
      if (wants(ia)) {
        auto& da = buffer(ia);
        const Tensor& y = node.value;
        const std::size_t n = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g.at(r, j) * y.at(r, j);
          for (std::size_t j = 0; j < n; ++j)
            da[r * n + j] += at.scalar * y.at(r, j) * (g.at(r, j) - dot);
        }
      }
      return;
    case OpKind::kRope:
      if (wants(ia)) {
        auto& da = buffer(ia);
        const std::size_t d = a->cols();
        for (std::size_t i = 0; i < a->rows(); ++i)
          for (std::size_t j = 0; j < d / 2; ++j) {
            const double angle = rope_angle(i, j, d, at.scalar);
            const double c = std::cos(angle), s = std::sin(angle);
            const double g0 = g.at(i, 2 * j), g1 = g.at(i, 2 * j + 1);
            da[i * d + 2 * j] += g0 * c + g1 * s;
            da[i * d + 2 * j + 1] += -g0 * s + g1 * c;
          }
      }
      return;
    case OpKind::kL2NormalizeRows:
      if (wants(ia)) {
        auto& da = buffer(ia);
        const Tensor& y = node.value;
        const std::size_t n = a->cols();
        for (std::size_t r = 0; r < a->rows(); ++r) {
          double sq = 0.0;
          for (std::size_t j = 0; j < n; ++j) sq += a->at(r, j) * a->at(r, j);
          const double norm = std::sqrt(sq);
          if (norm > at.scalar) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y.at(r, j) * g.at(r, j);
            for (std::size_t j = 0; j < n; ++j)
              da[r * n + j] += (g.at(r, j) - y.at(r, j) * dot) / norm;
          } else {
            for (std::size_t j = 0; j < n; ++j) da[r * n + j] += g.at(r, j) / at.scalar;
          }
        }
      }
      return;
    case OpKind::kSum:
      if (wants(ia)) {
        auto& da = buffer(ia);
        for (double& v : da) v += g[0];
      }
      return;
    case OpKind::kBce:
      if (wants(ia)) {
        auto& da = buffer(ia);
        const double inv_n = 1.0 / static_cast<double>(da.size());
        for (std::size_t i = 0; i < da.size(); ++i) {
          const double raw = (*a)[i];
          const double p = clamp_probability(raw);
          if (p != raw) continue;
          da[i] += g[0] * inv_n * (p - at.aux[i]) / (p * (1.0 - p));
        }
      }
      return;
    case OpKind::kBceWithLogits:
      if (wants(ia)) {
        auto& da = buffer(ia);
        const double inv_n = 1.0 / static_cast<double>(da.size());
        for (std::size_t i = 0; i < da.size(); ++i)
          da[i] += g[0] * inv_n * (tim::sigmoid((*a)[i]) - at.aux[i]);
      }
      return;
  }
}

std::map<std::string, Tensor> Tape::gradients(Var loss) const {
  const Tensor& lv = value(loss);
  if (lv.size() != 1) {
    throw InvalidInput("gradients need a scalar loss, got shape " +
                       lv.shape().to_string());
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.id())] = {1.0};
  for (int id = loss.id(); id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    auto& g = grads[static_cast<std::size_t>(id)];
    if (g.empty() || !node.needs_grad) continue;
    backprop(node, Tensor(node.value.shape(), g), grads);
    if (node.op != OpKind::kParameter) {
      g.clear();
      g.shrink_to_fit();
    }
  }
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : params_) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    auto& g = grads[static_cast<std::size_t>(id)];
    out.emplace(name, g.empty() ? Tensor::Zeros(node.value.shape())
                                : Tensor(node.value.shape(), std::move(g)));
  }
  return out;
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  for (const Node& node : nodes_) {
    const Tensor* a = node.inputs[0] >= 0 ? &values[node.inputs[0]] : nullptr;
    const Tensor* b = node.inputs[1] >= 0 ? &values[node.inputs[1]] : nullptr;
    values.push_back(evaluate(node, a, b));
  }
  return values;
}

Var matmul(Var a, Var b) {
  return a.tape()->record(OpKind::kMatmul, {a, b}, {});
}

Var batched_matmul(Var a, Var b) {
  return a.tape()->record(OpKind::kBatchedMatmul, {a, b}, {});
}

Var transpose(Var a) { return a.tape()->record(OpKind::kTranspose, {a}, {}); }

Var add(Var a, Var b) { return a.tape()->record(OpKind::kAdd, {a, b}, {}); }

Var mul(Var a, Var b) { return a.tape()->record(OpKind::kMul, {a, b}, {}); }

Var add_row(Var a, Var row) {
  return a.tape()->record(OpKind::kAddRow, {a, row}, {});
}

Var scale(Var a, double s) {
  Tape::Attrs attrs;
  attrs.scalar = s;
  return a.tape()->record(OpKind::kScale, {a}, std::move(attrs));
}

Var add_scalar(Var a, double s) {
  Tape::Attrs attrs;
  attrs.scalar = s;
  return a.tape()->record(OpKind::kAddScalar, {a}, std::move(attrs));
}

Var sigmoid(Var a) { return a.tape()->record(OpKind::kSigmoid, {a}, {}); }

Var relu(Var a) { return a.tape()->record(OpKind::kRelu, {a}, {}); }

Var reshape(Var a, Shape shape) {
  Tape::Attrs attrs;
  attrs.shape = shape;
  return a.tape()->record(OpKind::kReshape, {a}, std::move(attrs));
}

Var concat_cols(Var a, Var b) {
  return a.tape()->record(OpKind::kConcatCols, {a, b}, {});
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
  Tape::Attrs attrs;
  attrs.indices = std::move(indices);
  return table.tape()->record(OpKind::kGatherRows, {table}, std::move(attrs));
}

Var softmax_rows(Var a, double scale) {
  Tape::Attrs attrs;
  attrs.scalar = scale;
  return a.tape()->record(OpKind::kSoftmaxRows, {a}, std::move(attrs));
}

Var rope_rotate(Var a, double base) {
  Tape::Attrs attrs;
  attrs.scalar = base;
  return a.tape()->record(OpKind::kRope, {a}, std::move(attrs));
}

Var l2_normalize_rows(Var a, double eps) {
  Tape::Attrs attrs;
  attrs.scalar = eps;
  return a.tape()->record(OpKind::kL2NormalizeRows, {a}, std::move(attrs));
}

Var sum(Var a) { return a.tape()->record(OpKind::kSum, {a}, {}); }

Var bce_mean(Var probs, std::vector<double> labels) {
  Tape::Attrs attrs;
  attrs.aux = std::move(labels);
  return probs.tape()->record(OpKind::kBce, {probs}, std::move(attrs));
}

Var bce_with_logits_mean(Var logits, std::vector<double> labels) {
  Tape::Attrs attrs;
  attrs.aux = std::move(labels);
  return logits.tape()->record(OpKind::kBceWithLogits, {logits}, std::move(attrs));
}

}  // namespace tim
