#include <cmath>

#include "emberflow/layers.hpp"

namespace emberflow {
namespace {

struct ChannelLayout {
  std::size_t batch, channels, spatial;
  std::size_t count() const { return batch * spatial; }
  std::size_t offset(std::size_t b, std::size_t c) const { return (b * channels + c) * spatial; }
};

template <typename T>
ChannelLayout layout_of(const BasicTensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("batchnorm expects [B,C,H,W], got " + shape_string(x.shape()));
  return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
}

}  // namespace

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                 BatchNormStats<T>& stats, Mode mode, const BatchNormOptions& options,
                                 BatchNormCache<T>* cache) {
  const ChannelLayout l = layout_of(x);
  const Shape channel_shape{l.channels};
  if (gamma.shape() != channel_shape || beta.shape() != channel_shape ||
      stats.running_mean.shape() != channel_shape || stats.running_var.shape() != channel_shape) {
    throw ShapeError("batchnorm: per-channel tensors must be " + shape_string(channel_shape));
  }
  const bool use_batch = mode == Mode::train;
  if (use_batch && l.count() < 2) {
    throw UsageError("batchnorm: training needs at least 2 values per channel (B*H*W = " +
                     std::to_string(l.count()) + ")");
  }

  BasicTensor<T> y(x.shape());
  BasicTensor<T> x_hat(x.shape());
  std::vector<T> inv_std(l.channels);
  const double n = static_cast<double>(l.count());

  for (std::size_t c = 0; c < l.channels; ++c) {
    double mean;
    double var;
    if (use_batch) {
      double sum = 0.0;
      for (std::size_t b = 0; b < l.batch; ++b) {
        const T* p = x.raw() + l.offset(b, c);
        for (std::size_t s = 0; s < l.spatial; ++s) sum += p[s];
      }
      mean = sum / n;
      // Corrected two-pass: the residual sum fixes the rounding in `mean`, so
      // a constant channel normalizes to exactly zero.
      double sq = 0.0, residual = 0.0;
      for (std::size_t b = 0; b < l.batch; ++b) {
        const T* p = x.raw() + l.offset(b, c);
        for (std::size_t s = 0; s < l.spatial; ++s) {
          const double d = p[s] - mean;
          residual += d;
          sq += d * d;
        }
      }
      mean += residual / n;
      var = std::max(0.0, (sq - residual * residual / n) / n);
      const double m = options.momentum;
      stats.running_mean[c] = static_cast<T>((1.0 - m) * stats.running_mean[c] + m * mean);
      stats.running_var[c] = static_cast<T>((1.0 - m) * stats.running_var[c] + m * var * n / (n - 1.0));
    } else {
      mean = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const double istd = 1.0 / std::sqrt(var + options.epsilon);
    inv_std[c] = static_cast<T>(istd);
    const T g = gamma[c];
    const T shift = beta[c];
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = l.offset(b, c);
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const T xh = static_cast<T>((x[off + s] - mean) * istd);
        x_hat[off + s] = xh;
        y[off + s] = g * xh + shift;
      }
    }
  }

  if (cache != nullptr) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->batch_statistics = use_batch;
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& dy, const BasicTensor<T>& gamma,
                                     const BatchNormCache<T>& cache) {
  if (dy.shape() != cache.x_hat.shape()) {
    throw ShapeError("batchnorm_backward: dy " + shape_string(dy.shape()) + " vs saved " +
                     shape_string(cache.x_hat.shape()));
  }
  const ChannelLayout l = layout_of(dy);
  if (gamma.shape() != Shape{l.channels} || cache.inv_std.size() != l.channels) {
    throw ShapeError("batchnorm_backward: channel count mismatch");
  }
  BatchNormGrads<T> g{BasicTensor<T>(dy.shape()), BasicTensor<T>({l.channels}), BasicTensor<T>({l.channels})};
  const double n = static_cast<double>(l.count());

  for (std::size_t c = 0; c < l.channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = l.offset(b, c);
      for (std::size_t s = 0; s < l.spatial; ++s) {
        sum_dy += dy[off + s];
        sum_dy_xhat += static_cast<double>(dy[off + s]) * cache.x_hat[off + s];
      }
    }
    g.dbeta[c] = static_cast<T>(sum_dy);
    g.dgamma[c] = static_cast<T>(sum_dy_xhat);

    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = l.offset(b, c);
      for (std::size_t s = 0; s < l.spatial; ++s) {
        double v;
        if (cache.batch_statistics) {
          // Mean and variance both depend on x.
          v = scale / n * (n * dy[off + s] - sum_dy - cache.x_hat[off + s] * sum_dy_xhat);
        } else {
          v = scale * dy[off + s];
        }
        g.dx[off + s] = static_cast<T>(v);
      }
    }
  }
  return g;
}

template BasicTensor<float> batchnorm_forward(const BasicTensor<float>&, const BasicTensor<float>&,
                                              const BasicTensor<float>&, BatchNormStats<float>&, Mode,
                                              const BatchNormOptions&, BatchNormCache<float>*);
template BasicTensor<double> batchnorm_forward(const BasicTensor<double>&, const BasicTensor<double>&,
                                               const BasicTensor<double>&, BatchNormStats<double>&, Mode,
                                               const BatchNormOptions&, BatchNormCache<double>*);
template BatchNormGrads<float> batchnorm_backward(const BasicTensor<float>&, const BasicTensor<float>&,
                                                  const BatchNormCache<float>&);
template BatchNormGrads<double> batchnorm_backward(const BasicTensor<double>&, const BasicTensor<double>&,
                                                   const BatchNormCache<double>&);

}  // namespace emberflow
