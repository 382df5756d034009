#include "emberflow/layers.hpp"

namespace emberflow {

template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& x, std::size_t size, std::size_t stride) {
  if (x.rank() != 4) throw ShapeError("maxpool expects [B,C,H,W], got " + shape_string(x.shape()));
  const ConvGeometry g{size, stride, 0};
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  const std::size_t out_h = conv_output_extent(h, g);
  const std::size_t out_w = conv_output_extent(w, g);

  PoolResult<T> r{BasicTensor<T>({x.dim(0), x.dim(1), out_h, out_w}), {}};
  r.argmax.resize(r.y.size());
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < size; ++ky) {
          for (std::size_t kx = 0; kx < size; ++kx) {
            const std::size_t idx = base + (oy * stride + ky) * w + ox * stride + kx;
            if (x[idx] > x[best]) best = idx;  // strict: ties keep the first position
          }
        }
        r.y[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& dy, std::span<const std::size_t> argmax,
                                const Shape& input_shape) {
  if (argmax.size() != dy.size()) {
    throw ShapeError("maxpool_backward: " + std::to_string(argmax.size()) + " indices for " +
                     std::to_string(dy.size()) + " gradients");
  }
  BasicTensor<T> dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    if (argmax[o] >= dx.size()) throw ShapeError("maxpool_backward: index outside input");
    dx[argmax[o]] += dy[o];
  }
  return dx;
}

template PoolResult<float> maxpool_forward(const BasicTensor<float>&, std::size_t, std::size_t);
template PoolResult<double> maxpool_forward(const BasicTensor<double>&, std::size_t, std::size_t);
template BasicTensor<float> maxpool_backward(const BasicTensor<float>&, std::span<const std::size_t>, const Shape&);
template BasicTensor<double> maxpool_backward(const BasicTensor<double>&, std::span<const std::size_t>,
                                              const Shape&);

}  // namespace emberflow
