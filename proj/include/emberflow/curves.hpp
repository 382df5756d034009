#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emberflow/train.hpp"

namespace emberflow {

inline constexpr const char* kMetricsHeader = "epoch,lr,train_loss,train_acc,val_loss,val_acc";

struct CurveLabel {
  std::string optimizer;
  std::size_t epochs = 0;
};

// CSV with kMetricsHeader and six decimals per value. The SVG (train and
// validation accuracy against epoch) is written only for a non-empty series.
void emit_curves(const std::vector<EpochMetrics>& metrics, const std::filesystem::path& csv_path,
                 const std::optional<std::filesystem::path>& svg_path, const CurveLabel& label);

std::string metrics_csv(const std::vector<EpochMetrics>& metrics);
std::string accuracy_svg(const std::vector<EpochMetrics>& metrics, const CurveLabel& label);

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

}  // namespace emberflow
