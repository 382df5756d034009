#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "emberflow/rng.hpp"
#include "emberflow/tensor.hpp"

namespace emberflow {

enum class Mode { train, eval };

// A trainable tensor and its gradient; shapes always agree.
template <typename T>
struct ParamSlot {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
};

// ---------------------------------------------------------------------------
// Convolution: cross-correlation (no kernel flip) plus per-channel bias.
// x [B,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] -> [B,Cout,Hout,Wout].

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                              std::size_t stride, std::size_t padding);

template <typename T>
struct ConvGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dweight;
  BasicTensor<T> dbias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& dy, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                             std::size_t stride, std::size_t padding);

// ---------------------------------------------------------------------------
// Batch normalization over [B,C,H,W], per channel.

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

template <typename T>
struct BatchNormStats {
  BasicTensor<T> running_mean;  // starts at 0
  BasicTensor<T> running_var;   // starts at 1
  explicit BatchNormStats(std::size_t channels = 1)
      : running_mean(full<T>({channels}, T{0})), running_var(full<T>({channels}, T{1})) {}
};

template <typename T>
struct BatchNormCache {
  BasicTensor<T> x_hat;
  std::vector<T> inv_std;
  bool batch_statistics = true;  // false when running stats were used
};

// Train mode normalizes with the batch mean and biased variance and folds
// them into `stats` (running variance uses the unbiased estimate). Eval mode
// reads `stats` only. Throws UsageError in train mode when B*H*W < 2.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                 BatchNormStats<T>& stats, Mode mode, const BatchNormOptions& options = {},
                                 BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dgamma;
  BasicTensor<T> dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& dy, const BasicTensor<T>& gamma,
                                     const BatchNormCache<T>& cache);

// ---------------------------------------------------------------------------
// ReLU. The subgradient at exactly 0 is 0.

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& dy, const BasicTensor<T>& x);

// ---------------------------------------------------------------------------
// Max pooling over [B,C,H,W]. `argmax` holds, per output element, the flat
// input index of the first (row-major) maximum in its window.

template <typename T>
struct PoolResult {
  BasicTensor<T> y;
  std::vector<std::size_t> argmax;
};

template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& x, std::size_t size, std::size_t stride);
template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& dy, std::span<const std::size_t> argmax,
                                const Shape& input_shape);

// ---------------------------------------------------------------------------
// Inverted dropout. `mask` holds 0 for dropped elements and 1/(1-rate) for
// survivors, so backward is dy * mask. Eval mode (or rate 0) is the identity
// and draws nothing from the generator.

template <typename T>
struct DropoutResult {
  BasicTensor<T> y;
  BasicTensor<T> mask;
};

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double rate, Rng& rng, Mode mode);
template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& dy, const BasicTensor<T>& mask);

// ---------------------------------------------------------------------------
// Fully connected: y = x W + b with x [B,n], W [n,m], b [m].

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
struct LinearGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dweight;
  BasicTensor<T> dbias;
};

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& dy, const BasicTensor<T>& x, const BasicTensor<T>& weight);

// ---------------------------------------------------------------------------
// Softmax and mean softmax cross-entropy over [B,classes] logits.

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <typename T>
struct LossResult {
  T loss;                 // mean over the batch
  BasicTensor<T> dlogits; // (softmax - onehot) / B
};

template <typename T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

}  // namespace emberflow
