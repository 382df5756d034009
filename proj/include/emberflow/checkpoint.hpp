#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "emberflow/model.hpp"
#include "emberflow/optim.hpp"
#include "emberflow/rng.hpp"

namespace emberflow {

inline constexpr char kCheckpointMagic[8] = {'F', 'E', 'R', 'C', 'N', 'N', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything besides tensors: stored as the JSON block of the file.
struct RunMetadata {
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.05;
  double decay = 1e-5;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t optimizer_steps = 0;
  Rng::State run_rng{};
  Rng::State dropout_rng{};
  bool diverged = false;

  friend bool operator==(const RunMetadata&, const RunMetadata&) = default;
};

struct Checkpoint {
  ModelConfig model;
  RunMetadata run;
  // Parameters, batch-norm buffers and optimizer tensors, by name.
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

Checkpoint make_checkpoint(const Model<float>& model, const Optimizer<float>& optimizer, RunMetadata run);

// Rebuilds the model described by the checkpoint and loads its parameters,
// buffers and dropout generator state. Missing tensors or shape differences
// throw CheckpointError(shape_mismatch).
Model<float> restore_model(const Checkpoint& checkpoint);
void restore_optimizer(const Checkpoint& checkpoint, Optimizer<float>& optimizer);

// Binary layout, all integers little-endian:
//   "FERCNN01" | u32 version | u32 json length | json | u32 tensor count |
//   per tensor: u16 name length | name | u8 rank | rank x u32 extents |
//   f32 payload, row-major.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

// Validates magic, version, completeness and tensor shapes against the
// embedded model config. Each failure is a CheckpointError with its own kind;
// nothing partial is returned.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json);

}  // namespace emberflow
