#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emberflow/error.hpp"
#include "emberflow/rng.hpp"

namespace emberflow {

using Shape = std::vector<std::size_t>;

// Product of the extents. Throws ShapeError for an empty shape or a zero extent.
std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. A default-constructed tensor is "null": no shape and
// no storage. Every other tensor satisfies numel(shape) == size().
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T{0}) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t flat) noexcept { return data_[flat]; }
  const T& operator[](std::size_t flat) const noexcept { return data_[flat]; }

  // ((i0*d1 + i1)*d2 + ...); bounds-checked.
  std::size_t flat_index(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw ShapeError("index rank " + std::to_string(index.size()) + " does not match tensor rank " +
                       std::to_string(shape_.size()));
    }
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < index.size(); ++axis) {
      if (index[axis] >= shape_[axis]) throw ShapeError("index out of range on axis " + std::to_string(axis));
      flat = flat * shape_[axis] + index[axis];
    }
    return flat;
  }
  T& at(std::initializer_list<std::size_t> index) {
    return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
  }
  const T& at(std::initializer_list<std::size_t> index) const {
    return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
  }

  void fill(T value) noexcept {
    for (auto& v : data_) v = value;
  }

  // Same storage, new extents; the element count must not change.
  BasicTensor reshaped(Shape shape) const& {
    BasicTensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
  }
  BasicTensor reshaped(Shape shape) && {
    if (shape_numel(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// ---------------------------------------------------------------------------
// Creation

template <typename T>
BasicTensor<T> zeros(Shape shape) {
  return BasicTensor<T>(std::move(shape));
}

template <typename T>
BasicTensor<T> full(Shape shape, T value) {
  BasicTensor<T> t(std::move(shape));
  t.fill(value);
  return t;
}

// Draws one sample per element in row-major order.
template <typename T>
BasicTensor<T> uniform(Shape shape, double lo, double hi, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
BasicTensor<T> normal(Shape shape, double mean, double stddev, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal(mean, stddev));
  return t;
}

// ---------------------------------------------------------------------------
// Elementwise

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

template <typename T, typename F>
BasicTensor<T> map1(const BasicTensor<T>& a, F&& f) {
  BasicTensor<T> out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename T, typename F>
BasicTensor<T> map2(const BasicTensor<T>& a, const BasicTensor<T>& b, F&& f, const char* op = "map2") {
  require_same_shape(a.shape(), b.shape(), op);
  BasicTensor<T> out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a);
// max(a, floor) elementwise; floor = 0 is ReLU.
template <typename T>
BasicTensor<T> maximum(const BasicTensor<T>& a, T floor);
// 1 where a > threshold, else 0.
template <typename T>
BasicTensor<T> greater_mask(const BasicTensor<T>& a, T threshold);
// The one broadcast the library supports: x[rows, n] + bias[n] per row.
template <typename T>
BasicTensor<T> add_row_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);

template <typename T>
bool all_finite(const BasicTensor<T>& a) noexcept;

// Σ a_i b_i accumulated in double, in index order.
template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b);

// ---------------------------------------------------------------------------
// Reductions. The reduced axis is removed from the shape; a rank-1 input
// reduces to shape [1]. Accumulation runs in ascending index order.

enum class ReduceOp { sum, mean, max, argmax };

template <typename T>
BasicTensor<T> reduce(const BasicTensor<T>& t, ReduceOp op, std::size_t axis);

// Argmax over the last axis of a [rows, cols] tensor. Ties go to the lowest index.
template <typename T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& t);

// ---------------------------------------------------------------------------
// Matrix products (rank-2). Each output element accumulates its products in
// ascending inner-index order, so results are reproducible run to run.

enum class Transpose { no, yes };

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, Transpose ta = Transpose::no,
                      Transpose tb = Transpose::no);

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

// ---------------------------------------------------------------------------
// im2col / col2im for a single [C, H, W] image.

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct PlaneExtent {
  std::size_t channels;
  std::size_t height;
  std::size_t width;
};

// Output extent along one axis; throws GeometryError unless
// (extent + 2*padding - kernel) is a non-negative multiple of stride.
std::size_t conv_output_extent(std::size_t extent, const ConvGeometry& g);

// Column j holds the receptive field of output position j, ordered channel
// first, then kernel row, then kernel column. Padded positions read as 0.
// `cols` must hold C*k*k * Hout*Wout values.
template <typename T>
void im2col(std::span<const T> image, PlaneExtent in, const ConvGeometry& g, std::span<T> cols);

// Adjoint of im2col: overlapping contributions are summed into `image`
// (which is overwritten), padding contributions are dropped.
template <typename T>
void col2im(std::span<const T> cols, PlaneExtent in, const ConvGeometry& g, std::span<T> image);

template <typename T>
BasicTensor<T> im2col(const BasicTensor<T>& image, const ConvGeometry& g);
template <typename T>
BasicTensor<T> col2im(const BasicTensor<T>& cols, PlaneExtent in, const ConvGeometry& g);

}  // namespace emberflow
