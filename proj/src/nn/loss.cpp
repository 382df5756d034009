#include <cmath>

#include "emberflow/layers.hpp"

namespace emberflow {
namespace {

template <typename T>
void require_logits(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("logits must be [B,classes], got " + shape_string(logits.shape()));
}

// log(sum(exp(row))) with the row maximum factored out.
template <typename T>
double log_sum_exp(const T* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max<double>(mx, row[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(static_cast<double>(row[i]) - mx);
  return mx + std::log(s);
}

}  // namespace

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_logits(logits);
  const std::size_t cols = logits.dim(1);
  BasicTensor<T> p(logits.shape());
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    const T* row = logits.raw() + r * cols;
    const double lse = log_sum_exp(row, cols);
    for (std::size_t c = 0; c < cols; ++c) p[r * cols + c] = static_cast<T>(std::exp(row[c] - lse));
  }
  return p;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_logits(logits);
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  if (labels.size() != rows) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  LossResult<T> r{T{0}, BasicTensor<T>(logits.shape())};
  const double inv_rows = 1.0 / static_cast<double>(rows);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= cols) {
      throw UsageError("label " + std::to_string(label) + " out of range [0," + std::to_string(cols) + ")");
    }
    const T* row = logits.raw() + i * cols;
    const double lse = log_sum_exp(row, cols);
    total += lse - row[label];
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = std::exp(row[c] - lse);
      const double target = c == static_cast<std::size_t>(label) ? 1.0 : 0.0;
      r.dlogits[i * cols + c] = static_cast<T>((p - target) * inv_rows);
    }
  }
  r.loss = static_cast<T>(total * inv_rows);
  return r;
}

template BasicTensor<float> softmax(const BasicTensor<float>&);
template BasicTensor<double> softmax(const BasicTensor<double>&);
template LossResult<float> softmax_cross_entropy(const BasicTensor<float>&, std::span<const int>);
template LossResult<double> softmax_cross_entropy(const BasicTensor<double>&, std::span<const int>);

}  // namespace emberflow
