#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "emberflow/layers.hpp"

namespace emberflow {

enum class OptimizerKind { sgd, adam };

const char* to_string(OptimizerKind kind) noexcept;
// "sgd" / "adam"; throws UsageError otherwise.
OptimizerKind parse_optimizer_kind(const std::string& name);

// Optimizer state that a checkpoint must carry.
template <typename T>
struct OptimizerState {
  std::uint64_t step_count = 0;
  std::vector<std::pair<std::string, BasicTensor<T>>> tensors;
};

// Both optimizers verify every gradient before touching any value: a NaN or
// infinity throws NumericError naming the slot, leaving values and state as
// they were. Gradients are never modified.
template <typename T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual OptimizerKind kind() const noexcept = 0;
  virtual void step(std::span<ParamSlot<T>* const> slots) = 0;
  // Learning rate the next step() will use.
  virtual double effective_lr() const noexcept = 0;
  virtual std::uint64_t step_count() const noexcept = 0;
  virtual OptimizerState<T> export_state() const = 0;
  virtual void import_state(const OptimizerState<T>& state) = 0;
};

struct SgdConfig {
  double base_lr = 0.05;
  double decay = 1e-5;
};

// Plain SGD with time-based decay: lr_t = base_lr / (1 + decay * t), where t
// counts completed steps.
template <typename T>
class Sgd final : public Optimizer<T> {
 public:
  explicit Sgd(SgdConfig config = {});
  OptimizerKind kind() const noexcept override { return OptimizerKind::sgd; }
  void step(std::span<ParamSlot<T>* const> slots) override;
  double effective_lr() const noexcept override;
  std::uint64_t step_count() const noexcept override { return step_count_; }
  OptimizerState<T> export_state() const override { return {step_count_, {}}; }
  void import_state(const OptimizerState<T>& state) override { step_count_ = state.step_count; }
  const SgdConfig& config() const noexcept { return config_; }

 private:
  SgdConfig config_;
  std::uint64_t step_count_ = 0;
};

struct AdamConfig {
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are keyed by slot name and created
// lazily on the first step.
template <typename T>
class Adam final : public Optimizer<T> {
 public:
  explicit Adam(AdamConfig config = {});
  OptimizerKind kind() const noexcept override { return OptimizerKind::adam; }
  void step(std::span<ParamSlot<T>* const> slots) override;
  double effective_lr() const noexcept override { return config_.lr; }
  std::uint64_t step_count() const noexcept override { return step_count_; }
  OptimizerState<T> export_state() const override;
  void import_state(const OptimizerState<T>& state) override;
  const AdamConfig& config() const noexcept { return config_; }

  const BasicTensor<T>* first_moment(const std::string& slot) const;
  const BasicTensor<T>* second_moment(const std::string& slot) const;

 private:
  struct Moments {
    std::string name;
    BasicTensor<T> m;
    BasicTensor<T> v;
  };
  Moments& moments_for(const ParamSlot<T>& slot);

  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::vector<Moments> moments_;
};

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind, double lr, double decay);

}  // namespace emberflow
