#include "tinyrlhf/tensor.hpp"

#include <sstream>

#include "tinyrlhf/error.hpp"

namespace tinyrlhf {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kMissingInput: return "missing_input";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kVersionMismatch: return "version_mismatch";
    case ErrorKind::kChecksum: return "checksum";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kLocked: return "locked";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

Shape::Shape(std::initializer_list<int> dims) {
  if (dims.size() > kMaxRank) {
    Fail(ErrorKind::kShape, "rank " + std::to_string(dims.size()) +
                                " exceeds the maximum of 3");
  }
  for (int d : dims) {
    if (d <= 0) {
      Fail(ErrorKind::kShape, "dimensions must be positive");
    }
    dims_[rank_++] = d;
  }
}

int Shape::rows() const {
  int r = 1;
  for (int i = 0; i + 1 < rank_; ++i) r *= dims_[i];
  return r;
}

int Shape::cols() const { return rank_ == 0 ? 1 : dims_[rank_ - 1]; }

int Shape::numel() const {
  int n = 1;
  for (int i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool operator==(const Shape& a, const Shape& b) {
  if (a.rank_ != b.rank_) return false;
  for (int i = 0; i < a.rank_; ++i) {
    if (a.dims_[i] != b.dims_[i]) return false;
  }
  return true;
}

std::string Shape::str() const {
  std::ostringstream out;
  out << '[';
  for (int i = 0; i < rank_; ++i) {
    if (i) out << ',';
    out << dims_[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : shape_(shape),
      data_(Array::Zero(shape.numel())),
      requires_grad_(requires_grad) {}

Tensor::Tensor(Shape shape, Array data, bool requires_grad)
    : shape_(shape), data_(std::move(data)), requires_grad_(requires_grad) {
  if (data_.size() != shape_.numel()) {
    Fail(ErrorKind::kShape, "tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_.str());
  }
}

Tensor Tensor::scalar(double value) {
  Tensor t{Shape{}};
  t.data_[0] = value;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) {
    Fail(ErrorKind::kShape, "item() on tensor of shape " + shape_.str());
  }
  return data_[0];
}

const Array& Tensor::grad() const {
  if (!grad_) {
    Fail(ErrorKind::kInvalidArgument, "tensor has no gradient");
  }
  return *grad_;
}

Array& Tensor::mutable_grad() {
  if (!grad_) grad_ = Array::Zero(data_.size());
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) grad_->setZero();
}

}  // namespace tinyrlhf
