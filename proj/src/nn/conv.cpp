#include <vector>

#include "emberflow/gemm.hpp"
#include "emberflow/layers.hpp"

namespace emberflow {
namespace {

struct ConvDims {
  std::size_t batch, in_channels, height, width, out_channels, kernel, out_h, out_w;
  ConvGeometry geometry;
  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

template <typename T>
ConvDims conv_dims(const BasicTensor<T>& x, const BasicTensor<T>& weight, std::size_t stride, std::size_t padding) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [B,C,H,W], got " + shape_string(x.shape()));
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv2d: weight must be [Cout,Cin,k,k], got " + shape_string(weight.shape()));
  }
  if (weight.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, input has " +
                     std::to_string(x.dim(1)));
  }
  ConvDims d{};
  d.batch = x.dim(0);
  d.in_channels = x.dim(1);
  d.height = x.dim(2);
  d.width = x.dim(3);
  d.out_channels = weight.dim(0);
  d.kernel = weight.dim(2);
  d.geometry = ConvGeometry{d.kernel, stride, padding};
  d.out_h = conv_output_extent(d.height, d.geometry);
  d.out_w = conv_output_extent(d.width, d.geometry);
  return d;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                              std::size_t stride, std::size_t padding) {
  const ConvDims d = conv_dims(x, weight, stride, padding);
  if (bias.shape() != Shape{d.out_channels}) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(d.out_channels) + "], got " +
                     shape_string(bias.shape()));
  }
  const PlaneExtent plane{d.in_channels, d.height, d.width};
  const std::size_t image_size = d.in_channels * d.height * d.width;
  const std::size_t out_size = d.out_channels * d.positions();

  BasicTensor<T> y({d.batch, d.out_channels, d.out_h, d.out_w});
  std::vector<T> cols(d.patch() * d.positions());
  for (std::size_t b = 0; b < d.batch; ++b) {
    im2col<T>(x.data().subspan(b * image_size, image_size), plane, d.geometry, cols);
    std::span<T> out = y.data().subspan(b * out_size, out_size);
    gemm<T>(Transpose::no, Transpose::no, d.out_channels, d.positions(), d.patch(), weight.data(), d.patch(),
            cols, d.positions(), out, d.positions(), false);
    for (std::size_t c = 0; c < d.out_channels; ++c) {
      const T shift = bias[c];
      for (T& v : out.subspan(c * d.positions(), d.positions())) v += shift;
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& dy, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                             std::size_t stride, std::size_t padding) {
  const ConvDims d = conv_dims(x, weight, stride, padding);
  const Shape expected{d.batch, d.out_channels, d.out_h, d.out_w};
  if (dy.shape() != expected) {
    throw ShapeError("conv2d_backward: dy " + shape_string(dy.shape()) + ", expected " + shape_string(expected));
  }
  const PlaneExtent plane{d.in_channels, d.height, d.width};
  const std::size_t image_size = d.in_channels * d.height * d.width;
  const std::size_t out_size = d.out_channels * d.positions();

  ConvGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(weight.shape()), BasicTensor<T>({d.out_channels})};
  std::vector<T> cols(d.patch() * d.positions());
  std::vector<T> dcols(cols.size());
  for (std::size_t b = 0; b < d.batch; ++b) {
    const std::span<const T> dy_b = dy.data().subspan(b * out_size, out_size);
    im2col<T>(x.data().subspan(b * image_size, image_size), plane, d.geometry, cols);
    // dW[Cout, patch] += dy_b[Cout, P] * cols[patch, P]^T
    gemm<T>(Transpose::no, Transpose::yes, d.out_channels, d.patch(), d.positions(), dy_b, d.positions(), cols,
            d.positions(), g.dweight.data(), d.patch(), b > 0);
    // dcols[patch, P] = W[Cout, patch]^T * dy_b[Cout, P]
    gemm<T>(Transpose::yes, Transpose::no, d.patch(), d.positions(), d.out_channels, weight.data(), d.patch(),
            dy_b, d.positions(), dcols, d.positions(), false);
    col2im<T>(dcols, plane, d.geometry, g.dx.data().subspan(b * image_size, image_size));
    for (std::size_t c = 0; c < d.out_channels; ++c) {
      T acc{0};
      for (T v : dy_b.subspan(c * d.positions(), d.positions())) acc += v;
      g.dbias[c] += acc;
    }
  }
  return g;
}

template BasicTensor<float> conv2d_forward(const BasicTensor<float>&, const BasicTensor<float>&,
                                           const BasicTensor<float>&, std::size_t, std::size_t);
template BasicTensor<double> conv2d_forward(const BasicTensor<double>&, const BasicTensor<double>&,
                                            const BasicTensor<double>&, std::size_t, std::size_t);
template ConvGrads<float> conv2d_backward(const BasicTensor<float>&, const BasicTensor<float>&,
                                          const BasicTensor<float>&, std::size_t, std::size_t);
template ConvGrads<double> conv2d_backward(const BasicTensor<double>&, const BasicTensor<double>&,
                                           const BasicTensor<double>&, std::size_t, std::size_t);

}  // namespace emberflow
