#include "emberflow/layers.hpp"

namespace emberflow {

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  return maximum(x, T{0});
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& dy, const BasicTensor<T>& x) {
  return map2(dy, x, [](T g, T v) { return v > T{0} ? g : T{0}; }, "relu_backward");
}

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double rate, Rng& rng, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return {x, full<T>(x.shape(), T{1})};

  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  DropoutResult<T> r{BasicTensor<T>(x.shape()), BasicTensor<T>(x.shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.uniform() < rate ? T{0} : keep_scale;
    r.mask[i] = m;
    r.y[i] = x[i] * m;
  }
  return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& dy, const BasicTensor<T>& mask) {
  return map2(dy, mask, [](T g, T m) { return g * m; }, "dropout_backward");
}

template BasicTensor<float> relu_forward(const BasicTensor<float>&);
template BasicTensor<double> relu_forward(const BasicTensor<double>&);
template BasicTensor<float> relu_backward(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> relu_backward(const BasicTensor<double>&, const BasicTensor<double>&);
template DropoutResult<float> dropout_forward(const BasicTensor<float>&, double, Rng&, Mode);
template DropoutResult<double> dropout_forward(const BasicTensor<double>&, double, Rng&, Mode);
template BasicTensor<float> dropout_backward(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> dropout_backward(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace emberflow
