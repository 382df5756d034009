#include "emberflow/curves.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace emberflow {
namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

double parse_double(const std::string& field, const std::filesystem::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used == field.size()) return v;
  } catch (const std::exception&) {
  }
  // stod rejects "nan"/"inf" spelled by printf on some platforms; accept them.
  if (field == "nan" || field == "-nan") return std::numeric_limits<double>::quiet_NaN();
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  throw DataError(path.string() + ": line " + std::to_string(line) + ": bad number '" + field + "'", line);
}

}  // namespace

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const EpochMetrics& m : metrics) {
    out += std::to_string(m.epoch);
    for (double v : {m.lr, m.train_loss, m.train_acc, m.val_loss, m.val_acc}) {
      out += ',';
      out += fixed6(v);
    }
    out += '\n';
  }
  return out;
}

std::string accuracy_svg(const std::vector<EpochMetrics>& metrics, const CurveLabel& label) {
  constexpr double kWidth = 640, kHeight = 420;
  constexpr double kLeft = 64, kRight = 24, kTop = 40, kBottom = 56;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double max_epoch = metrics.empty() ? 1.0 : static_cast<double>(std::max<std::size_t>(metrics.back().epoch, 2));
  auto px = [&](double epoch) { return kLeft + (epoch - 1.0) / (max_epoch - 1.0) * plot_w; };
  auto py = [&](double acc) { return kTop + (1.0 - std::clamp(acc, 0.0, 1.0)) * plot_h; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">Train acc vs val acc (epochs="
    << label.epochs << ", " << label.optimizer << ")</text>\n";

  // Axes, ticks and grid.
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
    << kTop + plot_h << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double acc = i / 5.0;
    s << "<line x1=\"" << kLeft << "\" y1=\"" << py(acc) << "\" x2=\"" << kLeft + plot_w << "\" y2=\"" << py(acc)
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(acc) + 4 << "\" text-anchor=\"end\">" << fixed6(acc).substr(0, 3)
      << "</text>\n";
  }
  const std::size_t last = metrics.empty() ? 1 : metrics.back().epoch;
  const std::size_t step = std::max<std::size_t>(1, last / 5);
  for (std::size_t e = 1; e <= last; e += step) {
    s << "<text x=\"" << px(static_cast<double>(e)) << "\" y=\"" << kTop + plot_h + 18 << "\" text-anchor=\"middle\">"
      << e << "</text>\n";
  }
  s << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 14 << "\" text-anchor=\"middle\">epoch</text>\n";
  s << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << kTop + plot_h / 2 << ")\">accuracy</text>\n";

  auto polyline = [&](auto value, const char* colour) {
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const EpochMetrics& m : metrics) s << px(static_cast<double>(m.epoch)) << ',' << py(value(m)) << ' ';
    s << "\"/>\n";
  };
  polyline([](const EpochMetrics& m) { return m.train_acc; }, "#1f77b4");
  polyline([](const EpochMetrics& m) { return m.val_acc; }, "#d62728");

  // Legend.
  const double lx = kLeft + plot_w - 190;
  const double ly = kTop + plot_h - 48;
  s << "<rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"182\" height=\"42\" fill=\"white\" stroke=\"#999\"/>\n";
  s << "<line x1=\"" << lx + 8 << "\" y1=\"" << ly + 14 << "\" x2=\"" << lx + 28 << "\" y2=\"" << ly + 14
    << "\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  s << "<text x=\"" << lx + 34 << "\" y=\"" << ly + 18 << "\">train acc (" << label.optimizer << ", " << label.epochs
    << " epochs)</text>\n";
  s << "<line x1=\"" << lx + 8 << "\" y1=\"" << ly + 32 << "\" x2=\"" << lx + 28 << "\" y2=\"" << ly + 32
    << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
  s << "<text x=\"" << lx + 34 << "\" y=\"" << ly + 36 << "\">val acc (" << label.optimizer << ", " << label.epochs
    << " epochs)</text>\n";
  s << "</svg>\n";
  return s.str();
}

void emit_curves(const std::vector<EpochMetrics>& metrics, const std::filesystem::path& csv_path,
                 const std::optional<std::filesystem::path>& svg_path, const CurveLabel& label) {
  write_text(csv_path, metrics_csv(metrics));
  if (svg_path && !metrics.empty()) write_text(*svg_path, accuracy_svg(metrics, label));
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw DataError(path.string() + ": header must be '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<EpochMetrics> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 6) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected 6 fields", line_no);
    }
    EpochMetrics m;
    m.epoch = static_cast<std::size_t>(parse_double(fields[0], path, line_no));
    m.lr = parse_double(fields[1], path, line_no);
    m.train_loss = parse_double(fields[2], path, line_no);
    m.train_acc = parse_double(fields[3], path, line_no);
    m.val_loss = parse_double(fields[4], path, line_no);
    m.val_acc = parse_double(fields[5], path, line_no);
    out.push_back(m);
  }
  return out;
}

}  // namespace emberflow
