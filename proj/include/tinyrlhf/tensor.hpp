#ifndef TINYRLHF_TENSOR_HPP_
#define TINYRLHF_TENSOR_HPP_

#include <Eigen/Dense>

#include <array>
#include <initializer_list>
#include <optional>
#include <string>

namespace tinyrlhf {

using Array = Eigen::ArrayXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;

// Rank 0..3 shape. Rank 0 is a scalar holding one element.
class Shape {
 public:
  static constexpr int kMaxRank = 3;

  Shape() = default;
  Shape(std::initializer_list<int> dims);

  int rank() const { return rank_; }
  int operator[](int axis) const { return dims_[axis]; }
  int rows() const;  // product of all but the last axis (1 for rank 0)
  int cols() const;  // last axis (1 for rank 0)
  int numel() const;
  bool is_scalar() const { return rank_ == 0; }

  friend bool operator==(const Shape& a, const Shape& b);
  std::string str() const;

 private:
  std::array<int, kMaxRank> dims_{1, 1, 1};
  int rank_ = 0;
};

// Dense row-major tensor of doubles. Gradients accumulate additively into
// grad() during Tape::backward and must be cleared by the caller.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Array data, bool requires_grad = false);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape) { return Tensor(shape); }

  const Shape& shape() const { return shape_; }
  int numel() const { return shape_.numel(); }

  const Array& data() const { return data_; }
  Array& data() { return data_; }
  double operator[](int i) const { return data_[i]; }
  double& operator[](int i) { return data_[i]; }
  double item() const;

  // Row-major matrix view over the trailing axis.
  ConstRowMatrixMap matrix() const {
    return ConstRowMatrixMap(data_.data(), shape_.rows(), shape_.cols());
  }
  RowMatrixMap matrix() {
    return RowMatrixMap(data_.data(), shape_.rows(), shape_.cols());
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool value) { requires_grad_ = value; }

  bool has_grad() const { return grad_.has_value(); }
  const Array& grad() const;
  Array& mutable_grad();  // allocates a zero gradient on first use
  void zero_grad();

 private:
  Shape shape_;
  Array data_ = Array::Zero(1);
  bool requires_grad_ = false;
  std::optional<Array> grad_;
};

}  // namespace tinyrlhf

#endif  // TINYRLHF_TENSOR_HPP_
