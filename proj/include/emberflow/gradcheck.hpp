#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "emberflow/model.hpp"

namespace emberflow {

// 8x8 input, channels [2,3,4], hidden 5, 7 classes, dropout off.
ModelConfig tiny_model_config();

struct GradCheckOptions {
  std::size_t seeds = 10;
  double step = 1e-5;
  double model_tolerance = 1e-3;
  double layer_tolerance = 1e-4;
  std::size_t batch = 2;
  ModelConfig model = tiny_model_config();
  bool zero_input = false;  // whole-model check on an all-zero image batch
};

struct GradCheckEntry {
  std::string group;       // conv, bn, linear, pool, relu, dropout, dropout-off, loss, model/...
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;  // number of partial derivatives compared
  // Elements skipped because a ReLU or max-pool switched within the step
  // (left and right difference quotients disagree).
  std::size_t kinks = 0;
  bool finite = true;
  bool passed() const noexcept { return finite && max_rel_error < tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double seconds = 0.0;
  bool passed() const noexcept;
  const GradCheckEntry* find(const std::string& group) const;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps structurally-zero
// derivatives (e.g. a conv bias feeding batch norm) from dividing noise by
// noise.
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Double-precision central differences against the analytic backward passes:
// every layer in isolation, then the whole tiny model, for each seed.
GradCheckReport gradient_check(const GradCheckOptions& options = {});

}  // namespace emberflow
