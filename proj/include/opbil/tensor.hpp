#ifndef OPBIL_TENSOR_HPP
#define OPBIL_TENSOR_HPP

#include <Eigen/Dense>

#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace opbil {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Raised when operand shapes do not line up. The message names the axis.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index a, Index b) { return a * b; });
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense N-dimensional array with row-major storage in an Eigen vector.
/// The last axis is the fastest varying one; channels always live there.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Vector::Zero(shape_size(shape_));
  }

  BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Vector::Map(values.begin(), Index(values.size()))) {}

  static BasicTensor constant(Shape shape, Scalar value) {
    BasicTensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return Index(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(std::size_t(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  template <typename... I>
  Scalar& operator()(I... idx) { return data_[offset(idx...)]; }
  template <typename... I>
  Scalar operator()(I... idx) const { return data_[offset(idx...)]; }

  /// View as a rows x cols row-major matrix; rows * cols must equal size().
  Eigen::Map<RowMajorMatrix> matrix(Index rows, Index cols) {
    check_matrix(rows, cols);
    return Eigen::Map<RowMajorMatrix>(data_.data(), rows, cols);
  }
  Eigen::Map<const RowMajorMatrix> matrix(Index rows, Index cols) const {
    check_matrix(rows, cols);
    return Eigen::Map<const RowMajorMatrix>(data_.data(), rows, cols);
  }

  BasicTensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return BasicTensor(std::move(shape), data_);
  }

  template <typename To>
  BasicTensor<To> cast() const {
    return BasicTensor<To>(shape_, data_.template cast<To>());
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void check_shape(const Shape& shape) {
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (shape[i] <= 0)
        throw ShapeError("axis " + std::to_string(i) + " has non-positive extent " +
                         std::to_string(shape[i]));
  }

  void check_matrix(Index rows, Index cols) const {
    if (rows * cols != size())
      throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not cover tensor " + shape_string(shape_));
  }

  template <typename... I>
  Index offset(I... idx) const {
    const Index ids[] = {Index(idx)...};
    Index flat = 0;
    for (std::size_t a = 0; a < sizeof...(I); ++a) flat = flat * shape_[a] + ids[a];
    return flat;
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

/// Largest absolute elementwise difference; shapes must agree.
template <typename Scalar>
Scalar max_abs_diff(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  if (a.size() == 0) return Scalar(0);
  return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

}  // namespace opbil

#endif  // OPBIL_TENSOR_HPP
