#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "emberflow/layers.hpp"
#include "emberflow/rng.hpp"
#include "emberflow/tensor.hpp"

namespace emberflow {

// Declarative description of the facial-expression CNN. Each entry in
// conv_channels adds a Conv -> BatchNorm -> ReLU -> MaxPool -> Dropout block;
// the head is Flatten -> Linear(hidden_units) -> ReLU -> Linear(num_classes).
struct ModelConfig {
  std::vector<std::size_t> conv_channels{64, 128, 256};
  std::size_t kernel = 3;
  std::size_t conv_padding = 1;
  std::size_t pool_size = 2;
  std::size_t pool_stride = 2;
  double dropout_rate = 0.2;
  std::size_t hidden_units = 256;
  std::size_t num_classes = 7;
  Shape input_shape{1, 48, 48};

  // Throws UsageError for invalid values, GeometryError when the spatial
  // sizes do not divide evenly through the blocks.
  void validate() const;

  // Per-sample shapes: input, the output of every conv block, then the
  // flattened size, the hidden layer and the logits.
  std::vector<Shape> shape_trace() const;
  std::size_t flatten_size() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Non-trainable per-layer state (batch-norm running statistics).
template <typename T>
struct NamedBuffer {
  std::string name;
  BasicTensor<T>* value;
};

template <typename T>
struct ConstNamedBuffer {
  std::string name;
  const BasicTensor<T>* value;
};

template <typename T>
class Layer;

template <typename T>
class Model {
 public:
  // He-normal conv/linear weights, zero biases, gamma = 1, beta = 0, all drawn
  // from `init_rng`; the dropout stream is split off it afterwards.
  Model(const ModelConfig& config, Rng& init_rng);
  ~Model();
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;

  const ModelConfig& config() const noexcept { return config_; }

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  // When frozen, batch norm uses and keeps its running statistics even in
  // train mode.
  void set_batchnorm_frozen(bool frozen) noexcept { bn_frozen_ = frozen; }
  bool batchnorm_frozen() const noexcept { return bn_frozen_; }

  // x [B, C, H, W] -> logits [B, num_classes]. Saves what backward() needs.
  BasicTensor<T> forward(const BasicTensor<T>& x);

  // Eval-mode forward with no side effects and nothing saved.
  BasicTensor<T> infer(const BasicTensor<T>& x) const;

  // Accumulates into every slot's grad and returns d(loss)/d(input). Consumes
  // the state saved by the last forward(); throws UsageError without one.
  BasicTensor<T> backward(const BasicTensor<T>& dlogits);

  void zero_grad();

  std::vector<ParamSlot<T>*> params();
  std::vector<const ParamSlot<T>*> params() const;
  std::vector<NamedBuffer<T>> buffers();
  std::vector<ConstNamedBuffer<T>> buffers() const;

  // e.g. conv1, bn1, relu1, pool1, drop1, ..., flatten, fc1, relu_fc, fc2
  std::vector<std::string> layer_names() const;

  Rng& dropout_rng() noexcept { return *dropout_rng_; }
  const Rng& dropout_rng() const noexcept { return *dropout_rng_; }

 private:
  ModelConfig config_;
  Mode mode_ = Mode::train;
  bool bn_frozen_ = false;
  bool has_saved_state_ = false;
  std::unique_ptr<Rng> dropout_rng_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
Model<T> build_model(const ModelConfig& config, Rng& init_rng) {
  return Model<T>(config, init_rng);
}

}  // namespace emberflow
