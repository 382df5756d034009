#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "emberflow/data.hpp"

namespace emberflow {
namespace {

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::string row_prefix(std::size_t row) { return "row " + std::to_string(row) + ": "; }

int parse_label(std::string_view text, std::size_t row) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  int label = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), label);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw DataError(row_prefix(row) + "malformed label '" + std::string(text) + "'", row);
  }
  if (label < 0 || label >= static_cast<int>(kNumClasses)) {
    throw DataError(row_prefix(row) + "label " + std::to_string(label) + " outside 0..6", row);
  }
  return label;
}

std::vector<float> parse_pixels(std::string_view text, std::size_t row) {
  std::vector<float> pixels;
  pixels.reserve(kImagePixels);
  const char* p = text.data();
  const char* end = p + text.size();
  while (true) {
    while (p != end && (*p == ' ' || *p == '\t')) ++p;
    if (p == end) break;
    int value = 0;
    const auto [next, ec] = std::from_chars(p, end, value);
    if (ec != std::errc{} || (next != end && *next != ' ' && *next != '\t')) {
      const char* stop = p;
      while (stop != end && *stop != ' ') ++stop;
      throw DataError(row_prefix(row) + "malformed pixel value '" + std::string(p, stop) + "'", row);
    }
    if (value < 0 || value > 255) {
      throw DataError(row_prefix(row) + "pixel value " + std::to_string(value) + " outside 0..255", row);
    }
    pixels.push_back(static_cast<float>(value) / 255.0f);
    p = next;
  }
  if (pixels.size() != kImagePixels) {
    throw DataError(row_prefix(row) + "expected " + std::to_string(kImagePixels) + " pixel values, found " +
                        std::to_string(pixels.size()),
                    row);
  }
  return pixels;
}

// Splits "label,pixels[,usage]" where pixels may be quoted.
std::pair<std::string_view, std::string_view> split_row(std::string_view line, std::size_t row) {
  const std::size_t comma = line.find(',');
  if (comma == std::string_view::npos) throw DataError(row_prefix(row) + "expected 'emotion,pixels'", row);
  std::string_view label = line.substr(0, comma);
  std::string_view rest = line.substr(comma + 1);
  if (!rest.empty() && rest.front() == '"') {
    const std::size_t close = rest.find('"', 1);
    if (close == std::string_view::npos) throw DataError(row_prefix(row) + "unterminated quoted pixels", row);
    return {label, rest.substr(1, close - 1)};
  }
  return {label, rest.substr(0, rest.find(','))};
}

std::uint8_t to_byte(float v) {
  const float scaled = std::round(v * 255.0f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

void write_pixel_line(std::ostream& out, const Example& ex) {
  std::string line;
  line.reserve(kImagePixels * 4);
  char buf[4];
  for (std::size_t i = 0; i < ex.pixels.size(); ++i) {
    if (i) line.push_back(' ');
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<int>(to_byte(ex.pixels[i])));
    line.append(buf, end);
  }
  out << line;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

std::string_view strip_bom(std::string_view line) {
  if (line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
  return line;
}

}  // namespace

const char* class_name(int label) noexcept {
  static constexpr const char* names[kNumClasses] = {"angry", "disgusted", "fearful", "happy",
                                                     "sad",   "surprised", "neutral"};
  return label >= 0 && label < static_cast<int>(kNumClasses) ? names[label] : "unknown";
}

Dataset parse_fer_csv(std::istream& in, const std::string& source) {
  Dataset ds;
  ds.source = source;
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file, expected header 'emotion,pixels'");
  const std::string_view header = strip_bom(trim_cr(line));
  if (!header.starts_with("emotion,pixels")) {
    throw DataError(source + ": header must be 'emotion,pixels', got '" + std::string(header) + "'");
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view text = trim_cr(line);
    if (text.empty()) continue;
    const auto [label, pixels] = split_row(text, row);
    ds.examples.push_back({parse_label(label, row), parse_pixels(pixels, row)});
  }
  return ds;
}

Dataset parse_fer_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return parse_fer_csv(in, path.string());
}

void write_fer_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "emotion,pixels\n";
  for (const Example& ex : dataset.examples) {
    out << ex.label << ',';
    write_pixel_line(out, ex);
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void split_label_pixel_files(const Dataset& dataset, const std::filesystem::path& labels_path,
                             const std::filesystem::path& pixels_path) {
  std::ofstream labels = open_output(labels_path);
  std::ofstream pixels = open_output(pixels_path);
  labels << "emotion\n";
  pixels << "pixels\n";
  for (const Example& ex : dataset.examples) {
    labels << ex.label << '\n';
    write_pixel_line(pixels, ex);
    pixels << '\n';
  }
  if (!labels || !pixels) throw DataError("write failed for label/pixel files");
}

Dataset recombine_label_pixel_files(const std::filesystem::path& labels_path,
                                    const std::filesystem::path& pixels_path) {
  std::ifstream labels = open_input(labels_path);
  std::ifstream pixels = open_input(pixels_path);
  std::string label_line;
  std::string pixel_line;
  if (!std::getline(labels, label_line) || strip_bom(trim_cr(label_line)) != "emotion") {
    throw DataError(labels_path.string() + ": header must be 'emotion'");
  }
  if (!std::getline(pixels, pixel_line) || strip_bom(trim_cr(pixel_line)) != "pixels") {
    throw DataError(pixels_path.string() + ": header must be 'pixels'");
  }
  Dataset ds;
  ds.source = labels_path.string() + "+" + pixels_path.string();
  std::size_t row = 0;
  while (true) {
    const bool has_label = static_cast<bool>(std::getline(labels, label_line));
    const bool has_pixels = static_cast<bool>(std::getline(pixels, pixel_line));
    if (!has_label && !has_pixels) break;
    ++row;
    if (has_label != has_pixels) throw DataError("label and pixel files have different row counts", row);
    ds.examples.push_back({parse_label(trim_cr(label_line), row), parse_pixels(trim_cr(pixel_line), row)});
  }
  return ds;
}

std::string pgm_file_name(std::size_t index, int label) {
  char name[64];
  std::snprintf(name, sizeof name, "%05zu_%d.pgm", index, label);
  return name;
}

std::size_t export_images(const Dataset& dataset, const std::filesystem::path& out_dir,
                          std::optional<std::size_t> limit) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create '" + out_dir.string() + "': " + ec.message());
  const std::size_t count = std::min(dataset.size(), limit.value_or(dataset.size()));
  // The "#" comment line pads the header to a fixed 15 bytes.
  static constexpr std::string_view header = "P5\n#\n48 48\n255\n";
  std::string payload(kImagePixels, '\0');
  for (std::size_t i = 0; i < count; ++i) {
    const Example& ex = dataset.examples[i];
    for (std::size_t p = 0; p < kImagePixels; ++p) payload[p] = static_cast<char>(to_byte(ex.pixels[p]));
    std::ofstream out = open_output(out_dir / pgm_file_name(i, ex.label));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw DataError("write failed for image " + std::to_string(i));
  }
  return count;
}

std::pair<Dataset, Dataset> train_val_split(const Dataset& dataset, const SplitSpec& spec) {
  if (spec.train_count == 0 || spec.train_count >= dataset.size()) {
    throw DataError("train_count " + std::to_string(spec.train_count) + " must be in [1, " +
                    std::to_string(dataset.size()) + ") for a dataset of " + std::to_string(dataset.size()) +
                    " rows");
  }
  const auto mid = dataset.examples.begin() + static_cast<std::ptrdiff_t>(spec.train_count);
  Dataset train{{dataset.examples.begin(), mid}, dataset.source, dataset.first_row};
  Dataset val{{mid, dataset.examples.end()}, dataset.source, dataset.first_row + spec.train_count};
  return {std::move(train), std::move(val)};
}

Dataset take_front(const Dataset& dataset, std::size_t count) {
  count = std::min(count, dataset.size());
  return {{dataset.examples.begin(), dataset.examples.begin() + static_cast<std::ptrdiff_t>(count)},
          dataset.source,
          dataset.first_row};
}

ClassHistogram class_histogram(const Dataset& dataset) {
  ClassHistogram counts{};
  for (const Example& ex : dataset.examples) ++counts.at(static_cast<std::size_t>(ex.label));
  return counts;
}

}  // namespace emberflow
