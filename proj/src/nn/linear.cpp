#include <algorithm>

#include "emberflow/gemm.hpp"
#include "emberflow/layers.hpp"

namespace emberflow {

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    throw ShapeError("linear: x " + shape_string(x.shape()) + " incompatible with W " +
                     shape_string(weight.shape()));
  }
  if (bias.shape() != Shape{weight.dim(1)}) {
    throw ShapeError("linear: bias " + shape_string(bias.shape()) + " does not match W " +
                     shape_string(weight.shape()));
  }
  const std::size_t rows = x.dim(0);
  const std::size_t in = weight.dim(0);
  const std::size_t out = weight.dim(1);
  BasicTensor<T> y({rows, out});
  for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), y.raw() + r * out);
  gemm<T>(Transpose::no, Transpose::no, rows, out, in, x.data(), in, weight.data(), out, y.data(), out, true);
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& dy, const BasicTensor<T>& x, const BasicTensor<T>& weight) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    throw ShapeError("linear_backward: x " + shape_string(x.shape()) + " incompatible with W " +
                     shape_string(weight.shape()));
  }
  const std::size_t rows = x.dim(0);
  const std::size_t in = weight.dim(0);
  const std::size_t out = weight.dim(1);
  if (dy.shape() != Shape{rows, out}) {
    throw ShapeError("linear_backward: dy " + shape_string(dy.shape()) + ", expected [" + std::to_string(rows) +
                     "," + std::to_string(out) + "]");
  }
  LinearGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(weight.shape()), BasicTensor<T>({out})};
  gemm<T>(Transpose::no, Transpose::yes, rows, in, out, dy.data(), out, weight.data(), out, g.dx.data(), in, false);
  gemm<T>(Transpose::yes, Transpose::no, in, out, rows, x.data(), in, dy.data(), out, g.dweight.data(), out, false);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < out; ++c) g.dbias[c] += dy[r * out + c];
  }
  return g;
}

template BasicTensor<float> linear_forward(const BasicTensor<float>&, const BasicTensor<float>&,
                                           const BasicTensor<float>&);
template BasicTensor<double> linear_forward(const BasicTensor<double>&, const BasicTensor<double>&,
                                            const BasicTensor<double>&);
template LinearGrads<float> linear_backward(const BasicTensor<float>&, const BasicTensor<float>&,
                                            const BasicTensor<float>&);
template LinearGrads<double> linear_backward(const BasicTensor<double>&, const BasicTensor<double>&,
                                             const BasicTensor<double>&);

}  // namespace emberflow
