#ifndef TINYRLHF_TAPE_HPP_
#define TINYRLHF_TAPE_HPP_

#include <span>
#include <string_view>
#include <vector>

#include "tinyrlhf/tensor.hpp"

namespace tinyrlhf {

// Primitive operations understood by the tape. The first block is the core
// set; the second block holds the structural helpers the transformer needs.
enum class Op {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kMatmul,
  kExp,
  kLog,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kGather,
  kSum,
  kMean,
  kMax,
  kRelu,
  kTanh,
  kScale,
  kConcat,
  kTranspose,
  kAddRow,
  kSliceRows,
  kSliceCols,
  kTakeRows,
  kCausalMask,
  kRmsNormRows,
  kClamp,
  kMinimum,
  kMaximum,
  kReshape,
};

std::string_view OpName(Op op);

// Value assigned to masked attention logits. Finite so every tensor stays
// finite; a softmax weight on it is below 1e-300.
inline constexpr double kMaskedLogit = -1e30;

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Non-differentiable arguments carried by some primitives.
struct OpArgs {
  double scalar = 0.0;            // kScale factor, kClamp low
  double scalar2 = 0.0;           // kClamp high
  int begin = 0;                  // kSliceRows / kSliceCols
  int count = 0;                  // kSliceRows / kSliceCols
  int axis = -1;                  // kConcat
  std::vector<int> indices;       // kGather / kTakeRows
  Shape shape;                    // kReshape
};

// Ordered record of primitive applications. Node ids are assigned in
// creation order, so every input id is smaller than its output id and a
// single reverse sweep visits each node once.
class Tape {
 public:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> inputs;
    Tensor value;
    bool requires_grad = false;
    Tensor* param = nullptr;  // leaves bound to a trainable tensor
    OpArgs args;
    Array saved;  // op-specific intermediate (softmax output, argmax, ...)
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Binds a tensor as a leaf. When the tensor requires grad, backward()
  // accumulates into its grad().
  Var leaf(Tensor& param);
  Var constant(Tensor value);

  Var record(Op op, std::vector<int> inputs, Tensor value, OpArgs args = {},
             Array saved = {});

  const Node& node(int id) const { return nodes_[id]; }
  const Tensor& value(int id) const { return nodes_[id].value; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse sweep from a scalar root. Gradients are added to the grad() of
  // every leaf tensor that requires grad.
  void backward(Var root);

 private:
  std::vector<Node> nodes_;
};

// Generic dispatch: applies `op` to `inputs` with `args`.
Var apply(Op op, std::span<const Var> inputs, const OpArgs& args = {});

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);
Var exp(Var x);
Var log(Var x);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
Var gather(Var x, std::vector<int> column_per_row);
Var sum(Var x);
Var mean(Var x);
Var max(Var x);
Var relu(Var x);
Var tanh(Var x);
Var scale(Var x, double factor);
Var concat(std::span<const Var> parts, int axis = -1);

Var transpose(Var x);
Var add_row(Var x, Var row);
Var slice_rows(Var x, int begin, int count);
Var slice_cols(Var x, int begin, int count);
Var take_rows(Var table, std::vector<int> ids);
Var causal_mask(Var scores);
Var rms_norm_rows(Var x);
Var clamp(Var x, double low, double high);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var reshape(Var x, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }

}  // namespace tinyrlhf

#endif  // TINYRLHF_TAPE_HPP_
