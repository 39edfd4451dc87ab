#include "tinyrlhf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tinyrlhf/error.hpp"

namespace tinyrlhf {
namespace {

[[noreturn]] void ShapeError(Op op, const Shape& a, const Shape& b) {
  Fail(ErrorKind::kShape, std::string(OpName(op)) + ": incompatible shapes " +
                              a.str() + " and " + b.str());
}

[[noreturn]] void ShapeError(Op op, const Shape& a, const std::string& why) {
  Fail(ErrorKind::kShape,
       std::string(OpName(op)) + ": shape " + a.str() + " " + why);
}

Tape* SameTape(std::span<const Var> inputs) {
  Tape* tape = nullptr;
  for (const Var& v : inputs) {
    if (v.tape() == nullptr) {
      Fail(ErrorKind::kInvalidArgument, "variable is not bound to a tape");
    }
    if (tape && v.tape() != tape) {
      Fail(ErrorKind::kInvalidArgument, "variables live on different tapes");
    }
    tape = v.tape();
  }
  return tape;
}

// Elementwise binary op with optional rank-0 broadcast on one side.
Var Elementwise(Op op, Var a, Var b) {
  const Var pair[] = {a, b};
  Tape* tape = SameTape(pair);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Shape out_shape;
  if (x.shape() == y.shape()) {
    out_shape = x.shape();
  } else if (x.shape().is_scalar()) {
    out_shape = y.shape();
  } else if (y.shape().is_scalar()) {
    out_shape = x.shape();
  } else {
    ShapeError(op, x.shape(), y.shape());
  }
  const int n = out_shape.numel();
  auto lhs = [&](Array& out) {
    if (x.numel() == n) {
      out = x.data();
    } else {
      out = Array::Constant(n, x[0]);
    }
  };
  Array rhs = y.numel() == n ? y.data() : Array::Constant(n, y[0]);
  Array result;
  lhs(result);
  switch (op) {
    case Op::kAdd: result += rhs; break;
    case Op::kSub: result -= rhs; break;
    case Op::kMul: result *= rhs; break;
    case Op::kMinimum: result = result.min(rhs); break;
    case Op::kMaximum: result = result.max(rhs); break;
    default: break;
  }
  return tape->record(op, {a.id(), b.id()},
                      Tensor(out_shape, std::move(result)));
}

Var Unary(Op op, Var x, Array result, OpArgs args = {}, Array saved = {}) {
  Tape* tape = x.tape();
  if (!tape) Fail(ErrorKind::kInvalidArgument, "variable is not bound to a tape");
  return tape->record(op, {x.id()}, Tensor(x.shape(), std::move(result)),
                      std::move(args), std::move(saved));
}

// Reduces a broadcast gradient back onto a rank-0 operand.
void AccumulateInto(Array& target, const Array& g) {
  if (target.size() == g.size()) {
    target += g;
  } else {
    target[0] += g.sum();
  }
}

}  // namespace

std::string_view OpName(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kMatmul: return "matmul";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSoftmaxRows: return "softmax-rows";
    case Op::kLogSoftmaxRows: return "log-softmax-rows";
    case Op::kGather: return "gather";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kMax: return "max";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kScale: return "scale";
    case Op::kConcat: return "concat";
    case Op::kTranspose: return "transpose";
    case Op::kAddRow: return "add-row";
    case Op::kSliceRows: return "slice-rows";
    case Op::kSliceCols: return "slice-cols";
    case Op::kTakeRows: return "take-rows";
    case Op::kCausalMask: return "causal-mask";
    case Op::kRmsNormRows: return "rms-norm-rows";
    case Op::kClamp: return "clamp";
    case Op::kMinimum: return "minimum";
    case Op::kMaximum: return "maximum";
    case Op::kReshape: return "reshape";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) Fail(ErrorKind::kInvalidArgument, "variable is not bound to a tape");
  return tape_->value(id_);
}

bool Var::requires_grad() const {
  return tape_ && tape_->node(id_).requires_grad;
}

Var Tape::leaf(Tensor& param) {
  Node node;
  node.op = Op::kLeaf;
  node.value = Tensor(param.shape(), param.data());
  node.requires_grad = param.requires_grad();
  node.param = param.requires_grad() ? &param : nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.op = Op::kLeaf;
  node.value = Tensor(value.shape(), std::move(value.data()));
  nodes_.push_back(std::move(node));
  return Var(this, size() - 1);
}

Var Tape::record(Op op, std::vector<int> inputs, Tensor value, OpArgs args,
                 Array saved) {
  Node node;
  node.op = op;
  for (int id : inputs) {
    node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  node.args = std::move(args);
  node.saved = std::move(saved);
  nodes_.push_back(std::move(node));
  return Var(this, size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape() != this) {
    Fail(ErrorKind::kInvalidArgument, "backward root is not on this tape");
  }
  const Node& root_node = nodes_[root.id()];
  if (!root_node.value.shape().is_scalar()) {
    Fail(ErrorKind::kShape, "backward requires a scalar root, got shape " +
                                root_node.value.shape().str());
  }
  if (!root_node.requires_grad) return;

  std::vector<Array> grads(root.id() + 1);
  grads[root.id()] = Array::Ones(1);

  auto grad_of = [&](int id) -> Array& {
    Array& g = grads[id];
    if (g.size() == 0) g = Array::Zero(nodes_[id].value.numel());
    return g;
  };
  auto wants = [&](int id) { return nodes_[id].requires_grad; };

  for (int id = root.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.requires_grad || grads[id].size() == 0) continue;
    const Array& g = grads[id];
    const std::vector<int>& in = node.inputs;
    const Shape& out_shape = node.value.shape();

    switch (node.op) {
      case Op::kLeaf:
        if (node.param) node.param->mutable_grad() += g;
        break;
      case Op::kAdd:
        if (wants(in[0])) AccumulateInto(grad_of(in[0]), g);
        if (wants(in[1])) AccumulateInto(grad_of(in[1]), g);
        break;
      case Op::kSub:
        if (wants(in[0])) AccumulateInto(grad_of(in[0]), g);
        if (wants(in[1])) AccumulateInto(grad_of(in[1]), -g);
        break;
      case Op::kMul: {
        const Tensor& a = nodes_[in[0]].value;
        const Tensor& b = nodes_[in[1]].value;
        const int n = out_shape.numel();
        if (wants(in[0])) {
          Array bg = b.numel() == n ? Array(g * b.data()) : Array(g * b[0]);
          AccumulateInto(grad_of(in[0]), bg);
        }
        if (wants(in[1])) {
          Array ag = a.numel() == n ? Array(g * a.data()) : Array(g * a[0]);
          AccumulateInto(grad_of(in[1]), ag);
        }
        break;
      }
      case Op::kMinimum:
      case Op::kMaximum: {
        const Tensor& a = nodes_[in[0]].value;
        const Tensor& b = nodes_[in[1]].value;
        const int n = out_shape.numel();
        Array ga = Array::Zero(n);
        Array gb = Array::Zero(n);
        for (int i = 0; i < n; ++i) {
          const double av = a.numel() == n ? a[i] : a[0];
          const double bv = b.numel() == n ? b[i] : b[0];
          const bool pick_a = node.op == Op::kMinimum ? av <= bv : av >= bv;
          (pick_a ? ga : gb)[i] = g[i];
        }
        if (wants(in[0])) AccumulateInto(grad_of(in[0]), ga);
        if (wants(in[1])) AccumulateInto(grad_of(in[1]), gb);
        break;
      }
      case Op::kMatmul: {
        const Tensor& a = nodes_[in[0]].value;
        const Tensor& b = nodes_[in[1]].value;
        ConstRowMatrixMap gm(g.data(), out_shape[0], out_shape[1]);
        if (wants(in[0])) {
          RowMatrixMap ga(grad_of(in[0]).data(), a.shape()[0], a.shape()[1]);
          ga.noalias() += gm * b.matrix().transpose();
        }
        if (wants(in[1])) {
          RowMatrixMap gb(grad_of(in[1]).data(), b.shape()[0], b.shape()[1]);
          gb.noalias() += a.matrix().transpose() * gm;
        }
        break;
      }
      case Op::kExp:
        grad_of(in[0]) += g * node.value.data();
        break;
      case Op::kLog:
        grad_of(in[0]) += g / nodes_[in[0]].value.data();
        break;
      case Op::kSoftmaxRows: {
        const int rows = out_shape.rows(), cols = out_shape.cols();
        ConstRowMatrixMap y(node.value.data().data(), rows, cols);
        ConstRowMatrixMap gm(g.data(), rows, cols);
        RowMatrixMap gx(grad_of(in[0]).data(), rows, cols);
        Eigen::VectorXd dot = (gm.array() * y.array()).rowwise().sum();
        gx.array() += y.array() * (gm.array().colwise() - dot.array());
        break;
      }
      case Op::kLogSoftmaxRows: {
        const int rows = out_shape.rows(), cols = out_shape.cols();
        ConstRowMatrixMap p(node.saved.data(), rows, cols);
        ConstRowMatrixMap gm(g.data(), rows, cols);
        RowMatrixMap gx(grad_of(in[0]).data(), rows, cols);
        Eigen::VectorXd total = gm.rowwise().sum();
        gx.array() += gm.array() - p.array().colwise() * total.array();
        break;
      }
      case Op::kGather: {
        Array& gx = grad_of(in[0]);
        const int cols = nodes_[in[0]].value.shape().cols();
        const auto& idx = node.args.indices;
        for (int r = 0; r < static_cast<int>(idx.size()); ++r) {
          gx[r * cols + idx[r]] += g[r];
        }
        break;
      }
      case Op::kSum:
        grad_of(in[0]) += g[0];
        break;
      case Op::kMean:
        grad_of(in[0]) += g[0] / nodes_[in[0]].value.numel();
        break;
      case Op::kMax:
        grad_of(in[0])[static_cast<int>(node.saved[0])] += g[0];
        break;
      case Op::kRelu:
        grad_of(in[0]) += (nodes_[in[0]].value.data() > 0.0).select(g, 0.0);
        break;
      case Op::kTanh:
        grad_of(in[0]) += g * (1.0 - node.value.data().square());
        break;
      case Op::kScale:
        grad_of(in[0]) += g * node.args.scalar;
        break;
      case Op::kClamp: {
        const Array& x = nodes_[in[0]].value.data();
        const double lo = node.args.scalar, hi = node.args.scalar2;
        grad_of(in[0]) += ((x >= lo) && (x <= hi)).select(g, 0.0);
        break;
      }
      case Op::kConcat: {
        const int rows = out_shape.rows(), cols = out_shape.cols();
        ConstRowMatrixMap gm(g.data(), rows, cols);
        int offset = 0;
        for (int src : in) {
          const Shape& s = nodes_[src].value.shape();
          const int r = s.rows(), c = s.cols();
          if (node.args.axis == 0) {
            if (wants(src)) {
              RowMatrixMap(grad_of(src).data(), r, c) += gm.middleRows(offset, r);
            }
            offset += r;
          } else {
            if (wants(src)) {
              RowMatrixMap(grad_of(src).data(), r, c) += gm.middleCols(offset, c);
            }
            offset += c;
          }
        }
        break;
      }
      case Op::kTranspose: {
        const Shape& s = nodes_[in[0]].value.shape();
        RowMatrixMap(grad_of(in[0]).data(), s[0], s[1]) +=
            ConstRowMatrixMap(g.data(), out_shape[0], out_shape[1]).transpose();
        break;
      }
      case Op::kAddRow: {
        const int rows = out_shape.rows(), cols = out_shape.cols();
        ConstRowMatrixMap gm(g.data(), rows, cols);
        if (wants(in[0])) grad_of(in[0]) += g;
        if (wants(in[1])) {
          Eigen::Map<Eigen::RowVectorXd>(grad_of(in[1]).data(), cols) +=
              gm.colwise().sum();
        }
        break;
      }
      case Op::kSliceRows: {
        const Shape& s = nodes_[in[0]].value.shape();
        RowMatrixMap(grad_of(in[0]).data(), s.rows(), s.cols())
            .middleRows(node.args.begin, node.args.count) +=
            ConstRowMatrixMap(g.data(), out_shape.rows(), out_shape.cols());
        break;
      }
      case Op::kSliceCols: {
        const Shape& s = nodes_[in[0]].value.shape();
        RowMatrixMap(grad_of(in[0]).data(), s.rows(), s.cols())
            .middleCols(node.args.begin, node.args.count) +=
            ConstRowMatrixMap(g.data(), out_shape.rows(), out_shape.cols());
        break;
      }
      case Op::kTakeRows: {
        const Shape& s = nodes_[in[0]].value.shape();
        RowMatrixMap table(grad_of(in[0]).data(), s[0], s[1]);
        ConstRowMatrixMap gm(g.data(), out_shape.rows(), out_shape.cols());
        const auto& ids = node.args.indices;
        for (int r = 0; r < static_cast<int>(ids.size()); ++r) {
          table.row(ids[r]) += gm.row(r);
        }
        break;
      }
      case Op::kCausalMask: {
        const int n = out_shape[0];
        ConstRowMatrixMap gm(g.data(), n, n);
        RowMatrixMap gx(grad_of(in[0]).data(), n, n);
        gx.triangularView<Eigen::Lower>() += gm;
        break;
      }
      case Op::kRmsNormRows: {
        const int rows = out_shape.rows(), cols = out_shape.cols();
        ConstRowMatrixMap y(node.value.data().data(), rows, cols);
        ConstRowMatrixMap gm(g.data(), rows, cols);
        RowMatrixMap gx(grad_of(in[0]).data(), rows, cols);
        Eigen::VectorXd proj =
            (gm.array() * y.array()).rowwise().sum() / double(cols);
        const Eigen::Map<const Eigen::VectorXd> inv(node.saved.data(), rows);
        gx.array() += (gm.array() - y.array().colwise() * proj.array())
                          .colwise() * inv.array();
        break;
      }
      case Op::kReshape:
        grad_of(in[0]) += g;
        break;
    }
  }
}

Var add(Var a, Var b) { return Elementwise(Op::kAdd, a, b); }
Var sub(Var a, Var b) { return Elementwise(Op::kSub, a, b); }
Var mul(Var a, Var b) { return Elementwise(Op::kMul, a, b); }
Var minimum(Var a, Var b) { return Elementwise(Op::kMinimum, a, b); }
Var maximum(Var a, Var b) { return Elementwise(Op::kMaximum, a, b); }

Var matmul(Var a, Var b) {
  const Var pair[] = {a, b};
  Tape* tape = SameTape(pair);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape().rank() != 2 || y.shape().rank() != 2 ||
      x.shape()[1] != y.shape()[0]) {
    ShapeError(Op::kMatmul, x.shape(), y.shape());
  }
  Tensor out(Shape{x.shape()[0], y.shape()[1]});
  out.matrix().noalias() = x.matrix() * y.matrix();
  return tape->record(Op::kMatmul, {a.id(), b.id()}, std::move(out));
}

Var exp(Var x) { return Unary(Op::kExp, x, x.value().data().exp()); }

Var log(Var x) {
  if ((x.value().data() <= 0.0).any()) {
    Fail(ErrorKind::kNumeric, "log: non-positive input");
  }
  return Unary(Op::kLog, x, x.value().data().log());
}

Var softmax_rows(Var x) {
  const Tensor& t = x.value();
  const int rows = t.shape().rows(), cols = t.shape().cols();
  Array out(t.numel());
  RowMatrixMap y(out.data(), rows, cols);
  y = t.matrix();
  for (int r = 0; r < rows; ++r) {
    y.row(r).array() = (y.row(r).array() - y.row(r).maxCoeff()).exp();
    y.row(r) /= y.row(r).sum();
  }
  return Unary(Op::kSoftmaxRows, x, std::move(out));
}

Var log_softmax_rows(Var x) {
  const Tensor& t = x.value();
  const int rows = t.shape().rows(), cols = t.shape().cols();
  Array out(t.numel());
  Array probs(t.numel());
  RowMatrixMap y(out.data(), rows, cols);
  RowMatrixMap p(probs.data(), rows, cols);
  y = t.matrix();
  for (int r = 0; r < rows; ++r) {
    const double m = y.row(r).maxCoeff();
    const double lse = m + std::log((y.row(r).array() - m).exp().sum());
    y.row(r).array() -= lse;
    p.row(r).array() = y.row(r).array().exp();
  }
  return Unary(Op::kLogSoftmaxRows, x, std::move(out), {}, std::move(probs));
}

Var gather(Var x, std::vector<int> column_per_row) {
  const Tensor& t = x.value();
  const int rows = t.shape().rows(), cols = t.shape().cols();
  if (t.shape().rank() < 1 || static_cast<int>(column_per_row.size()) != rows) {
    ShapeError(Op::kGather, t.shape(),
               "needs one index per row, got " +
                   std::to_string(column_per_row.size()));
  }
  Array out(rows);
  for (int r = 0; r < rows; ++r) {
    const int c = column_per_row[r];
    if (c < 0 || c >= cols) {
      ShapeError(Op::kGather, t.shape(),
                 "index " + std::to_string(c) + " out of range");
    }
    out[r] = t[r * cols + c];
  }
  OpArgs args;
  args.indices = std::move(column_per_row);
  Shape shape = rows == 1 && t.shape().rank() == 1 ? Shape{} : Shape{rows};
  return x.tape()->record(Op::kGather, {x.id()},
                          Tensor(shape, std::move(out)), std::move(args));
}

Var sum(Var x) {
  return x.tape()->record(Op::kSum, {x.id()},
                          Tensor::scalar(x.value().data().sum()));
}

Var mean(Var x) {
  return x.tape()->record(Op::kMean, {x.id()},
                          Tensor::scalar(x.value().data().mean()));
}

Var max(Var x) {
  Eigen::Index arg = 0;
  const double m = x.value().data().maxCoeff(&arg);
  Array saved(1);
  saved[0] = static_cast<double>(arg);
  return x.tape()->record(Op::kMax, {x.id()}, Tensor::scalar(m), {},
                          std::move(saved));
}

Var relu(Var x) { return Unary(Op::kRelu, x, x.value().data().max(0.0)); }

Var tanh(Var x) { return Unary(Op::kTanh, x, x.value().data().tanh()); }

Var scale(Var x, double factor) {
  OpArgs args;
  args.scalar = factor;
  return Unary(Op::kScale, x, x.value().data() * factor, std::move(args));
}

Var clamp(Var x, double low, double high) {
  if (!(low <= high)) {
    Fail(ErrorKind::kInvalidArgument, "clamp: low exceeds high");
  }
  OpArgs args;
  args.scalar = low;
  args.scalar2 = high;
  return Unary(Op::kClamp, x, x.value().data().max(low).min(high),
               std::move(args));
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) {
    Fail(ErrorKind::kShape, "concat: no inputs");
  }
  Tape* tape = SameTape(parts);
  const Shape& first = parts[0].shape();
  if (first.rank() > 2 || first.rank() == 0) {
    ShapeError(Op::kConcat, first, "must have rank 1 or 2");
  }
  const bool along_rows = axis == 0 && first.rank() == 2;
  int total = 0;
  std::vector<int> ids;
  for (const Var& v : parts) {
    const Shape& s = v.shape();
    if (s.rank() != first.rank()) ShapeError(Op::kConcat, first, s);
    if (along_rows ? s.cols() != first.cols() : s.rows() != first.rows()) {
      ShapeError(Op::kConcat, first, s);
    }
    total += along_rows ? s.rows() : s.cols();
    ids.push_back(v.id());
  }
  Shape out_shape = first.rank() == 1 ? Shape{total}
                    : along_rows      ? Shape{total, first.cols()}
                                      : Shape{first.rows(), total};
  Tensor out(out_shape);
  auto m = out.matrix();
  int offset = 0;
  for (const Var& v : parts) {
    const Tensor& t = v.value();
    if (along_rows) {
      m.middleRows(offset, t.shape().rows()) = t.matrix();
      offset += t.shape().rows();
    } else {
      m.middleCols(offset, t.shape().cols()) = t.matrix();
      offset += t.shape().cols();
    }
  }
  OpArgs args;
  args.axis = along_rows ? 0 : -1;
  return tape->record(Op::kConcat, std::move(ids), std::move(out),
                      std::move(args));
}

Var transpose(Var x) {
  const Tensor& t = x.value();
  if (t.shape().rank() != 2) ShapeError(Op::kTranspose, t.shape(), "must be rank 2");
  Tensor out(Shape{t.shape()[1], t.shape()[0]});
  out.matrix() = t.matrix().transpose();
  return x.tape()->record(Op::kTranspose, {x.id()}, std::move(out));
}

Var add_row(Var x, Var row) {
  const Var pair[] = {x, row};
  Tape* tape = SameTape(pair);
  const Tensor& t = x.value();
  const Tensor& b = row.value();
  if (b.shape().rank() != 1 || t.shape().rank() < 1 ||
      b.shape()[0] != t.shape().cols()) {
    ShapeError(Op::kAddRow, t.shape(), b.shape());
  }
  Tensor out(t.shape(), t.data());
  out.matrix().rowwise() +=
      Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), b.numel());
  return tape->record(Op::kAddRow, {x.id(), row.id()}, std::move(out));
}

Var slice_rows(Var x, int begin, int count) {
  const Tensor& t = x.value();
  if (t.shape().rank() != 2 || begin < 0 || count <= 0 ||
      begin + count > t.shape()[0]) {
    ShapeError(Op::kSliceRows, t.shape(),
               "cannot slice rows [" + std::to_string(begin) + ", " +
                   std::to_string(begin + count) + ")");
  }
  Tensor out(Shape{count, t.shape()[1]});
  out.matrix() = t.matrix().middleRows(begin, count);
  OpArgs args;
  args.begin = begin;
  args.count = count;
  return x.tape()->record(Op::kSliceRows, {x.id()}, std::move(out),
                          std::move(args));
}

Var slice_cols(Var x, int begin, int count) {
  const Tensor& t = x.value();
  if (t.shape().rank() != 2 || begin < 0 || count <= 0 ||
      begin + count > t.shape()[1]) {
    ShapeError(Op::kSliceCols, t.shape(),
               "cannot slice columns [" + std::to_string(begin) + ", " +
                   std::to_string(begin + count) + ")");
  }
  Tensor out(Shape{t.shape()[0], count});
  out.matrix() = t.matrix().middleCols(begin, count);
  OpArgs args;
  args.begin = begin;
  args.count = count;
  return x.tape()->record(Op::kSliceCols, {x.id()}, std::move(out),
                          std::move(args));
}

Var take_rows(Var table, std::vector<int> ids) {
  const Tensor& t = table.value();
  if (t.shape().rank() != 2 || ids.empty()) {
    ShapeError(Op::kTakeRows, t.shape(), "needs a rank-2 table and ids");
  }
  Tensor out(Shape{static_cast<int>(ids.size()), t.shape()[1]});
  auto m = out.matrix();
  for (int r = 0; r < static_cast<int>(ids.size()); ++r) {
    if (ids[r] < 0 || ids[r] >= t.shape()[0]) {
      ShapeError(Op::kTakeRows, t.shape(),
                 "row id " + std::to_string(ids[r]) + " out of range");
    }
    m.row(r) = t.matrix().row(ids[r]);
  }
  OpArgs args;
  args.indices = std::move(ids);
  return table.tape()->record(Op::kTakeRows, {table.id()}, std::move(out),
                              std::move(args));
}

Var causal_mask(Var scores) {
  const Tensor& t = scores.value();
  if (t.shape().rank() != 2 || t.shape()[0] != t.shape()[1]) {
    ShapeError(Op::kCausalMask, t.shape(), "must be square");
  }
  Tensor out(t.shape(), t.data());
  const int n = t.shape()[0];
  auto m = out.matrix();
  for (int r = 0; r < n; ++r) {
    for (int c = r + 1; c < n; ++c) m(r, c) = kMaskedLogit;
  }
  return scores.tape()->record(Op::kCausalMask, {scores.id()}, std::move(out));
}

Var rms_norm_rows(Var x) {
  constexpr double kEps = 1e-6;
  const Tensor& t = x.value();
  const int rows = t.shape().rows(), cols = t.shape().cols();
  Array inv(rows);
  Tensor out(t.shape(), t.data());
  auto m = out.matrix();
  for (int r = 0; r < rows; ++r) {
    inv[r] = 1.0 / std::sqrt(m.row(r).squaredNorm() / cols + kEps);
    m.row(r) *= inv[r];
  }
  return x.tape()->record(Op::kRmsNormRows, {x.id()}, std::move(out), {},
                          std::move(inv));
}

Var reshape(Var x, Shape shape) {
  const Tensor& t = x.value();
  if (shape.numel() != t.numel()) ShapeError(Op::kReshape, t.shape(), shape);
  OpArgs args;
  args.shape = shape;
  return x.tape()->record(Op::kReshape, {x.id()}, Tensor(shape, t.data()),
                          std::move(args));
}

Var apply(Op op, std::span<const Var> in, const OpArgs& args) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      Fail(ErrorKind::kInvalidArgument,
           std::string(OpName(op)) + ": expected " + std::to_string(n) +
               " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (op) {
    case Op::kLeaf:
      Fail(ErrorKind::kInvalidArgument, "leaf is not an applicable op");
    case Op::kAdd: need(2); return add(in[0], in[1]);
    case Op::kSub: need(2); return sub(in[0], in[1]);
    case Op::kMul: need(2); return mul(in[0], in[1]);
    case Op::kMatmul: need(2); return matmul(in[0], in[1]);
    case Op::kExp: need(1); return exp(in[0]);
    case Op::kLog: need(1); return log(in[0]);
    case Op::kSoftmaxRows: need(1); return softmax_rows(in[0]);
    case Op::kLogSoftmaxRows: need(1); return log_softmax_rows(in[0]);
    case Op::kGather: need(1); return gather(in[0], args.indices);
    case Op::kSum: need(1); return sum(in[0]);
    case Op::kMean: need(1); return mean(in[0]);
    case Op::kMax: need(1); return max(in[0]);
    case Op::kRelu: need(1); return relu(in[0]);
    case Op::kTanh: need(1); return tanh(in[0]);
    case Op::kScale: need(1); return scale(in[0], args.scalar);
    case Op::kConcat: return concat(in, args.axis);
    case Op::kTranspose: need(1); return transpose(in[0]);
    case Op::kAddRow: need(2); return add_row(in[0], in[1]);
    case Op::kSliceRows: need(1); return slice_rows(in[0], args.begin, args.count);
    case Op::kSliceCols: need(1); return slice_cols(in[0], args.begin, args.count);
    case Op::kTakeRows: need(1); return take_rows(in[0], args.indices);
    case Op::kCausalMask: need(1); return causal_mask(in[0]);
    case Op::kRmsNormRows: need(1); return rms_norm_rows(in[0]);
    case Op::kClamp: need(1); return clamp(in[0], args.scalar, args.scalar2);
    case Op::kMinimum: need(2); return minimum(in[0], in[1]);
    case Op::kMaximum: need(2); return maximum(in[0], in[1]);
    case Op::kReshape: need(1); return reshape(in[0], args.shape);
  }
  Fail(ErrorKind::kInvalidArgument, "unknown op");
}

}  // namespace tinyrlhf
