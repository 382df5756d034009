#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "emberflow/rng.hpp"
#include "emberflow/tensor.hpp"

namespace emberflow {

inline constexpr std::size_t kImageSide = 48;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::size_t kNumClasses = 7;

// 0 angry, 1 disgusted, 2 fearful, 3 happy, 4 sad, 5 surprised, 6 neutral
const char* class_name(int label) noexcept;

struct Example {
  int label = 0;
  std::vector<float> pixels;  // kImagePixels values in [0, 1], row-major
};

struct Dataset {
  std::vector<Example> examples;
  std::string source;         // where the rows came from
  std::size_t first_row = 1;  // 1-based data row of examples[0] in `source`

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
};

struct SplitSpec {
  std::size_t train_count = 24000;
};

using ClassHistogram = std::array<std::size_t, kNumClasses>;

// ---------------------------------------------------------------------------
// FER2013-style CSV: header "emotion,pixels" (an optional third "Usage"
// column is ignored), then one row per image: an integer label 0..6 and 2304
// space-separated integers 0..255, optionally quoted. LF or CRLF.
// Pixels are divided by 255. Errors are DataError carrying the data row.

Dataset parse_fer_csv(const std::filesystem::path& path);
Dataset parse_fer_csv(std::istream& in, const std::string& source);

// Writes the same format (unquoted pixels field); pixels are rescaled to
// 0..255 and rounded.
void write_fer_csv(const Dataset& dataset, const std::filesystem::path& path);

// labels file: header "emotion" then one label per line.
// pixels file: header "pixels" then 2304 space-separated 0..255 integers per
// line. Line i of both files describes example i.
void split_label_pixel_files(const Dataset& dataset, const std::filesystem::path& labels_path,
                             const std::filesystem::path& pixels_path);

// Inverse of split_label_pixel_files.
Dataset recombine_label_pixel_files(const std::filesystem::path& labels_path,
                                    const std::filesystem::path& pixels_path);

// Binary PGM per example, named {index:05}_{label}.pgm, at most `limit`
// files. Each file is a 15-byte header ("P5", a comment line, "48 48", "255")
// followed by the 2304 row-major grey bytes.
std::size_t export_images(const Dataset& dataset, const std::filesystem::path& out_dir,
                          std::optional<std::size_t> limit = std::nullopt);
std::string pgm_file_name(std::size_t index, int label);

// Positional split: the first train_count examples, then the rest.
std::pair<Dataset, Dataset> train_val_split(const Dataset& dataset, const SplitSpec& spec);

// First `count` examples (all of them when count >= size).
Dataset take_front(const Dataset& dataset, std::size_t count);

ClassHistogram class_histogram(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Mini-batches.

struct Batch {
  Tensor images;  // [B, 1, 48, 48]
  std::vector<int> labels;
};

// Stacks the given examples into one batch.
Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);

// One epoch of batches. With shuffle, the visiting order is a Fisher-Yates
// permutation drawn from `rng` at construction; otherwise dataset order. The
// last batch keeps the remainder.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::size_t batch_size, bool shuffle, Rng* rng = nullptr);

  std::optional<Batch> next();
  std::size_t batch_count() const noexcept;
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  const Dataset* dataset_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

inline BatchIterator batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, Rng* rng = nullptr) {
  return BatchIterator(dataset, batch_size, shuffle, rng);
}

// ---------------------------------------------------------------------------
// Synthetic FER-format faces: a procedurally drawn face whose brows, eyes and
// mouth take a class-specific shape with random strength, pose, lighting and
// noise. Pixels are quantized to k/255 so a CSV round trip is lossless.

struct SynthOptions {
  // Class frequencies; defaults follow the public FER2013 label distribution.
  std::array<double, kNumClasses> class_weights{4953, 547, 5121, 8989, 6077, 4002, 6198};
  double noise_stddev = 0.06;
  // Expression strength is drawn uniformly from [min_intensity, 1].
  double min_intensity = 0.25;
};

Dataset synthesize_faces(std::size_t count, std::uint64_t seed, const SynthOptions& options = {});

}  // namespace emberflow
