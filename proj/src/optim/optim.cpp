#include "emberflow/optim.hpp"

#include <cmath>

namespace emberflow {
namespace {

template <typename T>
void check_gradients(std::span<ParamSlot<T>* const> slots) {
  for (const ParamSlot<T>* slot : slots) {
    if (slot->grad.shape() != slot->value.shape()) {
      throw ShapeError("slot " + slot->name + ": grad " + shape_string(slot->grad.shape()) + " vs value " +
                       shape_string(slot->value.shape()));
    }
    for (std::size_t i = 0; i < slot->grad.size(); ++i) {
      if (!std::isfinite(slot->grad[i])) {
        throw NumericError("non-finite gradient in slot '" + slot->name + "' at element " + std::to_string(i),
                           slot->name);
      }
    }
  }
}

}  // namespace

const char* to_string(OptimizerKind kind) noexcept { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw UsageError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

template <typename T>
Sgd<T>::Sgd(SgdConfig config) : config_(config) {
  if (!(config_.base_lr >= 0.0)) throw UsageError("sgd: learning rate must be non-negative");
  if (!(config_.decay >= 0.0)) throw UsageError("sgd: decay must be non-negative");
}

template <typename T>
double Sgd<T>::effective_lr() const noexcept {
  return config_.base_lr / (1.0 + config_.decay * static_cast<double>(step_count_));
}

template <typename T>
void Sgd<T>::step(std::span<ParamSlot<T>* const> slots) {
  check_gradients(slots);
  const T lr = static_cast<T>(effective_lr());
  for (ParamSlot<T>* slot : slots) {
    auto value = slot->value.data();
    auto grad = slot->grad.data();
    for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
  }
  ++step_count_;
}

template <typename T>
Adam<T>::Adam(AdamConfig config) : config_(config) {
  if (!(config_.lr >= 0.0)) throw UsageError("adam: learning rate must be non-negative");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw UsageError("adam: betas must be in [0,1)");
  }
}

template <typename T>
typename Adam<T>::Moments& Adam<T>::moments_for(const ParamSlot<T>& slot) {
  for (Moments& m : moments_) {
    if (m.name == slot.name) {
      if (m.m.shape() != slot.value.shape()) throw ShapeError("adam: moment shape mismatch for " + slot.name);
      return m;
    }
  }
  moments_.push_back({slot.name, BasicTensor<T>(slot.value.shape()), BasicTensor<T>(slot.value.shape())});
  return moments_.back();
}

template <typename T>
void Adam<T>::step(std::span<ParamSlot<T>* const> slots) {
  check_gradients(slots);
  const std::uint64_t t = step_count_ + 1;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (ParamSlot<T>* slot : slots) {
    Moments& mom = moments_for(*slot);
    auto value = slot->value.data();
    auto grad = slot->grad.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double m = b1 * mom.m[i] + (1.0 - b1) * g;
      const double v = b2 * mom.v[i] + (1.0 - b2) * g * g;
      mom.m[i] = static_cast<T>(m);
      mom.v[i] = static_cast<T>(v);
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      value[i] -= static_cast<T>(config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon));
    }
  }
  step_count_ = t;
}

template <typename T>
OptimizerState<T> Adam<T>::export_state() const {
  OptimizerState<T> s{step_count_, {}};
  for (const Moments& m : moments_) {
    s.tensors.emplace_back("adam.m." + m.name, m.m);
    s.tensors.emplace_back("adam.v." + m.name, m.v);
  }
  return s;
}

template <typename T>
void Adam<T>::import_state(const OptimizerState<T>& state) {
  step_count_ = state.step_count;
  moments_.clear();
  const std::string m_prefix = "adam.m.";
  const std::string v_prefix = "adam.v.";
  for (const auto& [name, tensor] : state.tensors) {
    if (name.rfind(m_prefix, 0) != 0) continue;
    const std::string slot = name.substr(m_prefix.size());
    const BasicTensor<T>* v = nullptr;
    for (const auto& [other, other_tensor] : state.tensors) {
      if (other == v_prefix + slot) v = &other_tensor;
    }
    if (v == nullptr || v->shape() != tensor.shape()) {
      throw ShapeError("adam state: missing or mismatched second moment for " + slot);
    }
    moments_.push_back({slot, tensor, *v});
  }
}

template <typename T>
const BasicTensor<T>* Adam<T>::first_moment(const std::string& slot) const {
  for (const Moments& m : moments_) {
    if (m.name == slot) return &m.m;
  }
  return nullptr;
}

template <typename T>
const BasicTensor<T>* Adam<T>::second_moment(const std::string& slot) const {
  for (const Moments& m : moments_) {
    if (m.name == slot) return &m.v;
  }
  return nullptr;
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind, double lr, double decay) {
  if (kind == OptimizerKind::sgd) return std::make_unique<Sgd<T>>(SgdConfig{lr, decay});
  return std::make_unique<Adam<T>>(AdamConfig{lr});
}

template class Sgd<float>;
template class Sgd<double>;
template class Adam<float>;
template class Adam<double>;
template std::unique_ptr<Optimizer<float>> make_optimizer<float>(OptimizerKind, double, double);
template std::unique_ptr<Optimizer<double>> make_optimizer<double>(OptimizerKind, double, double);

}  // namespace emberflow
