#include "emberflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "emberflow/gemm.hpp"

namespace emberflow {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("shape must have at least one extent");
  std::size_t n = 1;
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("shape " + shape_string(shape) + " has a zero extent");
    n *= extent;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return map2(a, b, [](T x, T y) { return x + y; }, "add");
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return map2(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return map2(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  return map1(a, [factor](T x) { return x * factor; });
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& a) {
  return map1(a, [](T x) { return std::exp(x); });
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a) {
  return map1(a, [](T x) { return std::log(x); });
}

template <typename T>
BasicTensor<T> maximum(const BasicTensor<T>& a, T floor) {
  return map1(a, [floor](T x) { return x > floor ? x : floor; });
}

template <typename T>
BasicTensor<T> greater_mask(const BasicTensor<T>& a, T threshold) {
  return map1(a, [threshold](T x) { return x > threshold ? T{1} : T{0}; });
}

template <typename T>
BasicTensor<T> add_row_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw ShapeError("add_row_bias: x " + shape_string(x.shape()) + " bias " + shape_string(bias.shape()));
  }
  BasicTensor<T> out = x;
  const std::size_t cols = x.dim(1);
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias[c];
  }
  return out;
}

template <typename T>
bool all_finite(const BasicTensor<T>& a) noexcept {
  return std::all_of(a.data().begin(), a.data().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <typename T>
BasicTensor<T> reduce(const BasicTensor<T>& t, ReduceOp op, std::size_t axis) {
  if (axis >= t.rank()) {
    throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for " + shape_string(t.shape()));
  }
  const Shape& shape = t.shape();
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t extent = shape[axis];

  Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out_shape.push_back(shape[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  BasicTensor<T> out(out_shape);

  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const T* base = t.raw() + o * extent * inner + in;
      T result{};
      switch (op) {
        case ReduceOp::sum:
        case ReduceOp::mean: {
          T acc{0};
          for (std::size_t e = 0; e < extent; ++e) acc += base[e * inner];
          result = op == ReduceOp::mean ? acc / static_cast<T>(extent) : acc;
          break;
        }
        case ReduceOp::max:
        case ReduceOp::argmax: {
          std::size_t best = 0;
          for (std::size_t e = 1; e < extent; ++e) {
            if (base[e * inner] > base[best * inner]) best = e;
          }
          result = op == ReduceOp::max ? base[best * inner] : static_cast<T>(best);
          break;
        }
      }
      out[o * inner + in] = result;
    }
  }
  return out;
}

template <typename T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& t) {
  if (t.rank() != 2) throw ShapeError("argmax_rows expects a rank-2 tensor, got " + shape_string(t.shape()));
  const std::size_t cols = t.dim(1);
  std::vector<std::size_t> out(t.dim(0));
  for (std::size_t r = 0; r < out.size(); ++r) {
    const T* row = t.raw() + r * cols;
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = best;
  }
  return out;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, Transpose ta, Transpose tb) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t m = ta == Transpose::no ? a.dim(0) : a.dim(1);
  const std::size_t k = ta == Transpose::no ? a.dim(1) : a.dim(0);
  const std::size_t kb = tb == Transpose::no ? b.dim(0) : b.dim(1);
  const std::size_t n = tb == Transpose::no ? b.dim(1) : b.dim(0);
  if (k != kb) {
    throw ShapeError("matmul: inner extents differ (" + shape_string(a.shape()) + " x " + shape_string(b.shape()) +
                     ")");
  }
  BasicTensor<T> c({m, n});
  gemm<T>(ta, tb, m, n, k, a.data(), a.dim(1), b.data(), b.dim(1), c.data(), n, false);
  return c;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects rank 2");
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  BasicTensor<T> out({cols, rows});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  }
  return out;
}

std::size_t conv_output_extent(std::size_t extent, const ConvGeometry& g) {
  if (g.kernel == 0 || g.stride == 0) throw GeometryError("kernel and stride must be positive");
  const std::size_t padded = extent + 2 * g.padding;
  if (padded < g.kernel) {
    throw GeometryError("kernel " + std::to_string(g.kernel) + " larger than padded extent " +
                        std::to_string(padded));
  }
  if ((padded - g.kernel) % g.stride != 0) {
    throw GeometryError("extent " + std::to_string(extent) + " with kernel " + std::to_string(g.kernel) +
                        ", padding " + std::to_string(g.padding) + " is not divisible by stride " +
                        std::to_string(g.stride));
  }
  return (padded - g.kernel) / g.stride + 1;
}

template <typename T>
void im2col(std::span<const T> image, PlaneExtent in, const ConvGeometry& g, std::span<T> cols) {
  const std::size_t out_h = conv_output_extent(in.height, g);
  const std::size_t out_w = conv_output_extent(in.width, g);
  const std::size_t positions = out_h * out_w;
  const std::size_t k = g.kernel;
  if (image.size() != in.channels * in.height * in.width) throw ShapeError("im2col: image size mismatch");
  if (cols.size() != in.channels * k * k * positions) throw ShapeError("im2col: column buffer size mismatch");

  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto height = static_cast<std::ptrdiff_t>(in.height);
  const auto width = static_cast<std::ptrdiff_t>(in.width);
  for (std::size_t c = 0; c < in.channels; ++c) {
    const T* plane = image.data() + c * in.height * in.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols.data() + ((c * k + ky) * k + kx) * positions;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          T* dst = row + oy * out_w;
          if (y < 0 || y >= height) {
            std::fill_n(dst, out_w, T{0});
            continue;
          }
          const T* src = plane + y * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            dst[ox] = (x < 0 || x >= width) ? T{0} : src[x];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(std::span<const T> cols, PlaneExtent in, const ConvGeometry& g, std::span<T> image) {
  const std::size_t out_h = conv_output_extent(in.height, g);
  const std::size_t out_w = conv_output_extent(in.width, g);
  const std::size_t positions = out_h * out_w;
  const std::size_t k = g.kernel;
  if (image.size() != in.channels * in.height * in.width) throw ShapeError("col2im: image size mismatch");
  if (cols.size() != in.channels * k * k * positions) throw ShapeError("col2im: column buffer size mismatch");

  std::fill(image.begin(), image.end(), T{0});
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto height = static_cast<std::ptrdiff_t>(in.height);
  const auto width = static_cast<std::ptrdiff_t>(in.width);
  for (std::size_t c = 0; c < in.channels; ++c) {
    T* plane = image.data() + c * in.height * in.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols.data() + ((c * k + ky) * k + kx) * positions;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (y < 0 || y >= height) continue;
          const T* src = row + oy * out_w;
          T* dst = plane + y * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (x >= 0 && x < width) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> im2col(const BasicTensor<T>& image, const ConvGeometry& g) {
  if (image.rank() != 3) throw ShapeError("im2col expects [C,H,W], got " + shape_string(image.shape()));
  const PlaneExtent in{image.dim(0), image.dim(1), image.dim(2)};
  const std::size_t positions = conv_output_extent(in.height, g) * conv_output_extent(in.width, g);
  BasicTensor<T> cols({in.channels * g.kernel * g.kernel, positions});
  im2col<T>(image.data(), in, g, cols.data());
  return cols;
}

template <typename T>
BasicTensor<T> col2im(const BasicTensor<T>& cols, PlaneExtent in, const ConvGeometry& g) {
  const std::size_t positions = conv_output_extent(in.height, g) * conv_output_extent(in.width, g);
  const Shape expected{in.channels * g.kernel * g.kernel, positions};
  if (cols.shape() != expected) {
    throw ShapeError("col2im: columns " + shape_string(cols.shape()) + ", expected " + shape_string(expected));
  }
  BasicTensor<T> image({in.channels, in.height, in.width});
  col2im<T>(cols.data(), in, g, image.data());
  return image;
}

#define EMBERFLOW_INSTANTIATE(T)                                                                           \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> log(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> maximum(const BasicTensor<T>&, T);                                              \
  template BasicTensor<T> greater_mask(const BasicTensor<T>&, T);                                         \
  template BasicTensor<T> add_row_bias(const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template bool all_finite(const BasicTensor<T>&) noexcept;                                               \
  template double dot(const BasicTensor<T>&, const BasicTensor<T>&);                                      \
  template BasicTensor<T> reduce(const BasicTensor<T>&, ReduceOp, std::size_t);                           \
  template std::vector<std::size_t> argmax_rows(const BasicTensor<T>&);                                   \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&, Transpose, Transpose);     \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                               \
  template void im2col(std::span<const T>, PlaneExtent, const ConvGeometry&, std::span<T>);               \
  template void col2im(std::span<const T>, PlaneExtent, const ConvGeometry&, std::span<T>);               \
  template BasicTensor<T> im2col(const BasicTensor<T>&, const ConvGeometry&);                             \
  template BasicTensor<T> col2im(const BasicTensor<T>&, PlaneExtent, const ConvGeometry&);

EMBERFLOW_INSTANTIATE(float)
EMBERFLOW_INSTANTIATE(double)

#undef EMBERFLOW_INSTANTIATE

const char* to_string(CheckpointError::Kind kind) noexcept {
  switch (kind) {
    case CheckpointError::Kind::io: return "io";
    case CheckpointError::Kind::bad_magic: return "bad_magic";
    case CheckpointError::Kind::unsupported_version: return "unsupported_version";
    case CheckpointError::Kind::truncated: return "truncated";
    case CheckpointError::Kind::malformed: return "malformed";
    case CheckpointError::Kind::shape_mismatch: return "shape_mismatch";
  }
  return "unknown";
}

}  // namespace emberflow
