#include <algorithm>
#include <cmath>

#include "emberflow/data.hpp"

namespace emberflow {
namespace {

// Facial feature controls, in pixels unless noted.
struct Expression {
  double brow_raise;   // + moves brows up
  double brow_tilt;    // + pulls the inner ends down
  double eye_open;     // eye height
  double mouth_curve;  // + lifts the mouth corners
  double mouth_width;  // half width
  double mouth_open;   // height of the open-mouth cavity
  double mouth_skew;   // one corner higher than the other
  double wrinkle;      // nose wrinkle strength, 0..1
};

constexpr Expression kNeutral{0.0, 0.0, 1.6, 0.0, 6.0, 0.0, 0.0, 0.0};

constexpr std::array<Expression, kNumClasses> kExpressions{{
    {-1.5, 2.5, 1.0, -0.5, 5.0, 0.0, 0.0, 0.3},  // angry
    {-1.0, 1.5, 1.1, -1.5, 5.5, 0.5, 2.0, 1.0},  // disgusted
    {2.0, -2.0, 2.6, -0.5, 7.0, 2.0, 0.0, 0.0},  // fearful
    {0.5, 0.0, 1.2, 3.5, 8.0, 1.0, 0.0, 0.0},    // happy
    {0.5, -2.5, 1.2, -3.0, 6.0, 0.0, 0.0, 0.0},  // sad
    {3.5, 0.0, 2.8, 0.0, 3.5, 4.5, 0.0, 0.0},    // surprised
    kNeutral,                                     // neutral
}};

class Canvas {
 public:
  explicit Canvas(double fill) : px_(kImagePixels, fill) {}

  double& at(std::size_t x, std::size_t y) { return px_[y * kImageSide + x]; }
  std::vector<double>& pixels() { return px_; }

  void blend(std::size_t x, std::size_t y, double value, double alpha) {
    alpha = std::clamp(alpha, 0.0, 1.0);
    double& p = at(x, y);
    p += (value - p) * alpha;
  }

  void ellipse(double cx, double cy, double rx, double ry, double value) {
    if (rx <= 0.05 || ry <= 0.05) return;
    for (std::size_t y = 0; y < kImageSide; ++y) {
      for (std::size_t x = 0; x < kImageSide; ++x) {
        const double dx = (x + 0.5 - cx) / rx;
        const double dy = (y + 0.5 - cy) / ry;
        const double q = std::sqrt(dx * dx + dy * dy);
        blend(x, y, value, (1.0 - q) * std::min(rx, ry) + 0.5);
      }
    }
  }

  void segment(double x0, double y0, double x1, double y1, double thickness, double value) {
    const double vx = x1 - x0;
    const double vy = y1 - y0;
    const double len2 = std::max(vx * vx + vy * vy, 1e-9);
    for (std::size_t y = 0; y < kImageSide; ++y) {
      for (std::size_t x = 0; x < kImageSide; ++x) {
        const double px = x + 0.5 - x0;
        const double py = y + 0.5 - y0;
        const double t = std::clamp((px * vx + py * vy) / len2, 0.0, 1.0);
        const double d = std::hypot(px - t * vx, py - t * vy);
        blend(x, y, value, thickness * 0.5 - d + 0.5);
      }
    }
  }

  // Parabola through the two corners, with its middle offset by -curve.
  void curve(double cx, double cy, double half_width, double curve, double skew, double thickness, double value) {
    constexpr int kSteps = 8;
    double prev_x = 0.0;
    double prev_y = 0.0;
    for (int i = 0; i <= kSteps; ++i) {
      const double u = -1.0 + 2.0 * i / kSteps;
      const double x = cx + u * half_width;
      const double y = cy - curve * u * u - 0.5 * skew * u;
      if (i > 0) segment(prev_x, prev_y, x, y, thickness, value);
      prev_x = x;
      prev_y = y;
    }
  }

 private:
  std::vector<double> px_;
};

std::size_t draw_label(Rng& rng, const std::array<double, kNumClasses>& weights, double total) {
  double u = rng.uniform() * total;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (u < weights[c]) return c;
    u -= weights[c];
  }
  return kNumClasses - 1;
}

Example render(int label, Rng& rng, const SynthOptions& options) {
  const Expression& target = kExpressions[static_cast<std::size_t>(label)];
  const double intensity = rng.uniform(options.min_intensity, 1.0);
  auto mix = [&](double neutral, double expressive, double jitter) {
    return neutral + intensity * (expressive - neutral) + rng.normal(0.0, jitter);
  };
  const Expression e{
      mix(kNeutral.brow_raise, target.brow_raise, 0.5),   mix(kNeutral.brow_tilt, target.brow_tilt, 0.5),
      mix(kNeutral.eye_open, target.eye_open, 0.25),      mix(kNeutral.mouth_curve, target.mouth_curve, 0.6),
      mix(kNeutral.mouth_width, target.mouth_width, 0.7), mix(kNeutral.mouth_open, target.mouth_open, 0.4),
      mix(kNeutral.mouth_skew, target.mouth_skew, 0.4),   mix(kNeutral.wrinkle, target.wrinkle, 0.15),
  };

  // Pose, scale and lighting.
  const double scale = rng.uniform(0.88, 1.1);
  const double cx = 24.0 + std::clamp(rng.normal(0.0, 1.5), -4.0, 4.0);
  const double cy = 25.0 + std::clamp(rng.normal(0.0, 1.5), -4.0, 4.0);
  const double background = rng.uniform(0.05, 0.6);
  const double skin = rng.uniform(0.45, 0.85);
  const double dark = rng.uniform(0.02, 0.2);
  const double gradient = rng.uniform(-0.15, 0.15);

  Canvas img(background);
  img.ellipse(cx, cy, 15.5 * scale, 20.0 * scale, skin);
  img.ellipse(cx, cy - 17.0 * scale, 16.0 * scale, 7.0 * scale, rng.uniform(0.0, 0.35));  // hair

  const double eye_y = cy - 4.5 * scale;
  const double eye_dx = (6.5 + rng.normal(0.0, 0.3)) * scale;
  for (int side : {-1, 1}) {
    const double ex = cx + side * eye_dx;
    img.ellipse(ex, eye_y, 2.6 * scale, std::max(0.3, e.eye_open) * scale, dark);
    // Brow: the inner end sits nearer the centre line.
    const double brow_y = eye_y - (4.0 + e.brow_raise) * scale;
    const double inner_x = ex - side * 3.0 * scale;
    const double outer_x = ex + side * 3.5 * scale;
    img.segment(inner_x, brow_y + e.brow_tilt * 0.5 * scale, outer_x, brow_y - e.brow_tilt * 0.5 * scale,
                1.4 * scale, dark);
  }

  img.segment(cx, cy - 1.0 * scale, cx - 1.0 * scale, cy + 3.5 * scale, 1.0, skin * 0.7);  // nose
  if (e.wrinkle > 0.2) {
    const double w = std::min(e.wrinkle, 1.0);
    for (int side : {-1, 1}) {
      img.segment(cx + side * 1.5 * scale, cy + 0.5 * scale, cx + side * 3.5 * scale, cy - 1.5 * scale, 0.9,
                  skin - 0.3 * w);
    }
  }

  const double mouth_y = cy + 9.0 * scale;
  const double half_width = std::max(1.5, e.mouth_width) * scale;
  if (e.mouth_open > 0.6) {
    img.ellipse(cx, mouth_y + 0.3 * e.mouth_open * scale, half_width * 0.8, 0.5 * e.mouth_open * scale, dark);
  }
  img.curve(cx, mouth_y, half_width, e.mouth_curve * scale, e.mouth_skew * scale, 1.3 * scale, dark);

  Example ex;
  ex.label = label;
  ex.pixels.resize(kImagePixels);
  for (std::size_t y = 0; y < kImageSide; ++y) {
    for (std::size_t x = 0; x < kImageSide; ++x) {
      const double light = gradient * (static_cast<double>(x) / (kImageSide - 1) - 0.5) * 2.0;
      const double v = img.at(x, y) + light + rng.normal(0.0, options.noise_stddev);
      const double level = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
      ex.pixels[y * kImageSide + x] = static_cast<float>(level) / 255.0f;
    }
  }
  return ex;
}

}  // namespace

Dataset synthesize_faces(std::size_t count, std::uint64_t seed, const SynthOptions& options) {
  double total = 0.0;
  for (double w : options.class_weights) {
    if (!(w >= 0.0)) throw UsageError("class weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw UsageError("class weights must not all be zero");
  if (!(options.min_intensity >= 0.0 && options.min_intensity <= 1.0)) {
    throw UsageError("min_intensity must be in [0,1]");
  }

  Rng rng(seed);
  Dataset ds;
  ds.source = "synthetic(seed=" + std::to_string(seed) + ")";
  ds.examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(draw_label(rng, options.class_weights, total));
    ds.examples.push_back(render(label, rng, options));
  }
  return ds;
}

}  // namespace emberflow
