#include <numeric>

#include "emberflow/data.hpp"

namespace emberflow {

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("make_batch: no indices");
  Batch batch{Tensor({indices.size(), 1, kImageSide, kImageSide}), {}};
  batch.labels.reserve(indices.size());
  float* dst = batch.images.raw();
  for (std::size_t i : indices) {
    const Example& ex = dataset.examples.at(i);
    if (ex.pixels.size() != kImagePixels) throw ShapeError("example " + std::to_string(i) + " is not 48x48");
    std::copy(ex.pixels.begin(), ex.pixels.end(), dst);
    dst += kImagePixels;
    batch.labels.push_back(ex.label);
  }
  return batch;
}

BatchIterator::BatchIterator(const Dataset& dataset, std::size_t batch_size, bool shuffle, Rng* rng)
    : dataset_(&dataset), batch_size_(batch_size), order_(dataset.size()) {
  if (batch_size == 0) throw UsageError("batch size must be at least 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle) {
    if (rng == nullptr) throw UsageError("shuffling requires a random generator");
    for (std::size_t i = order_.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng->below(i));
      std::swap(order_[i - 1], order_[j]);
    }
  }
}

std::size_t BatchIterator::batch_count() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  Batch batch = make_batch(*dataset_, std::span<const std::size_t>(order_).subspan(cursor_, n));
  cursor_ += n;
  return batch;
}

}  // namespace emberflow
