#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emberflow/checkpoint.hpp"
#include "emberflow/data.hpp"
#include "emberflow/model.hpp"
#include "emberflow/optim.hpp"

namespace emberflow {

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.05;
  double decay = 1e-5;
  std::uint64_t seed = 1;
  std::optional<std::size_t> limit_train;
  std::optional<std::size_t> limit_val;
  ModelConfig model;

  // Throws UsageError on epochs < 1, batch_size < 1, lr <= 0 (lr = 0 is
  // allowed only through allow_zero_lr, for invariance experiments).
  void validate() const;
  bool allow_zero_lr = false;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;        // effective learning rate at the start of the epoch
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
  bool diverged = false;  // a non-finite loss or gradient was seen this epoch
};

using Confusion = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct EvalResult {
  double loss = 0.0;  // mean cross-entropy
  double accuracy = 0.0;
  std::size_t count = 0;
  Confusion confusion{};  // [true][predicted]
};

// Eval-mode pass over the whole dataset, in order. Leaves the model untouched.
EvalResult evaluate(const Model<float>& model, const Dataset& dataset, std::size_t batch_size);

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  Checkpoint checkpoint;
  bool diverged = false;
  std::optional<std::size_t> diverged_epoch;
  std::string divergence_reason;
};

// Called after each epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochMetrics&)>;

// Each epoch: shuffle, then forward / loss / backward / step per batch, then
// eval-mode metrics over the full train and validation sets. The seed fixes
// every random choice. A non-finite loss or gradient marks the run diverged,
// skips that update and training continues.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const EpochCallback& on_epoch = {});

// The model train() starts from for this config.
Model<float> initial_model(const TrainConfig& config);

}  // namespace emberflow
