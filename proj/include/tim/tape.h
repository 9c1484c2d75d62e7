#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tim/tensor.h"

namespace tim {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class OpKind : std::uint8_t {
  kConstant,
  kParameter,
  kMatmul,
  kBatchedMatmul,
  kTranspose,
  kAdd,
  kMul,
  kAddRow,
  kScale,
  kAddScalar,
  kSigmoid,
  kRelu,
  kReshape,
  kConcatCols,
  kGatherRows,
  kSoftmaxRows,
  kRope,
  kL2NormalizeRows,
  kSum,
  kBce,
  kBceWithLogits,
};

const char* op_name(OpKind op);

// Append-only record of a forward computation. Reverse mode walks the
// record backwards once. Confined to a single thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Parameter names must be unique on a tape.
  Var parameter(const std::string& name, Tensor value);

  const Tensor& value(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  // d(loss)/d(param) for every registered parameter; parameters the loss
  // does not depend on get a zero tensor. Throws InvalidInput unless loss
  // has exactly one element.
  std::map<std::string, Tensor> gradients(Var loss) const;

  // Re-evaluates every node from its recorded inputs. Leaves keep their
  // stored values, so the result matches the recorded values bit for bit.
  std::vector<Tensor> replay() const;

  struct Attrs {
    double scalar = 0.0;
    Shape shape;
    std::vector<std::size_t> indices;
    std::vector<double> aux;
  };

  Var record(OpKind op, std::initializer_list<Var> inputs, Attrs attrs);

 private:
  struct Node {
    OpKind op;
    std::array<int, 2> inputs{-1, -1};
    Attrs attrs;
    Tensor value;
    bool needs_grad = false;
  };

  Tensor evaluate(const Node& node, const Tensor* a, const Tensor* b) const;
  void backprop(const Node& node, const Tensor& grad_out,
                std::vector<std::vector<double>>& grads) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> params_;
};

Var matmul(Var a, Var b);
Var batched_matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var mul(Var a, Var b);
// Adds a 1xn row to every row of an mxn matrix.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var sigmoid(Var a);
Var relu(Var a);
Var reshape(Var a, Shape shape);
// [a | b] for matrices with equal row counts.
Var concat_cols(Var a, Var b);
Var gather_rows(Var table, std::vector<std::size_t> indices);
Var softmax_rows(Var a, double scale);
Var rope_rotate(Var a, double base);
Var l2_normalize_rows(Var a, double eps = 1e-12);
Var sum(Var a);
// Mean binary cross-entropy of probabilities against 0/1 labels.
Var bce_mean(Var probs, std::vector<double> labels);
// Same loss evaluated from logits, stable for large |logit|.
Var bce_with_logits_mean(Var logits, std::vector<double> labels);

}  // namespace tim
