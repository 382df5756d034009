#include "emberflow/gradcheck.hpp"
#include "emberflow/layers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

namespace emberflow {

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.conv_channels = {2, 3, 4};
  c.hidden_units = 5;
  c.num_classes = 7;
  c.input_shape = {1, 8, 8};
  c.dropout_rate = 0.0;
  return c;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

bool GradCheckReport::passed() const noexcept {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed(); });
}

const GradCheckEntry* GradCheckReport::find(const std::string& group) const {
  for (const auto& e : entries) {
    if (e.group == group) return &e;
  }
  return nullptr;
}

namespace {

using Scalar = std::function<double()>;

constexpr double kKinkThreshold = 1e-2;

class Checker {
 public:
  Checker(double step, double model_tolerance, double layer_tolerance)
      : step_(step), model_tol_(model_tolerance), layer_tol_(layer_tolerance) {}

  // Compares `analytic` with central differences of `loss` in every element of
  // `param`, which `loss` must read through.
  void compare(const std::string& group, TensorD& param, const TensorD& analytic, const Scalar& loss) {
    GradCheckEntry& e = entry(group);
    const double centre = loss();
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + step_;
      const double up = loss();
      param[i] = saved - step_;
      const double down = loss();
      param[i] = saved;
      const double numeric = (up - down) / (2.0 * step_);
      const double a = analytic[i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) e.finite = false;
      const double err = relative_error(a, numeric);
      // A ReLU or max-pool switch inside [x-h, x+h] makes the one-sided
      // slopes disagree; the central difference is meaningless there.
      const double right = (up - centre) / step_;
      const double left = (centre - down) / step_;
      if (err >= e.tolerance && relative_error(right, left) > kKinkThreshold) {
        ++e.kinks;
        continue;
      }
      e.max_rel_error = std::max(e.max_rel_error, err);
      ++e.checked;
    }
  }

  // Finiteness only, for derivatives that are undefined at the probed point.
  void require_finite(const std::string& group, const TensorD& analytic) {
    GradCheckEntry& e = entry(group);
    for (double v : analytic.values()) {
      if (!std::isfinite(v)) e.finite = false;
      ++e.checked;
    }
  }

  std::vector<GradCheckEntry> take() { return std::move(entries_); }

 private:
  GradCheckEntry& entry(const std::string& group) {
    for (auto& e : entries_) {
      if (e.group == group) return e;
    }
    GradCheckEntry e;
    e.group = group;
    e.tolerance = group.starts_with("model/") ? model_tol_ : layer_tol_;
    entries_.push_back(e);
    return entries_.back();
  }

  double step_;
  double model_tol_;
  double layer_tol_;
  std::vector<GradCheckEntry> entries_;
};

TensorD random_tensor(const Shape& shape, Rng& rng) { return normal<double>(shape, 0.0, 1.0, rng); }

// Values kept at least `margin` away from zero, so ReLU kinks stay out of
// reach of the finite-difference step.
TensorD away_from_zero(const Shape& shape, Rng& rng, double margin) {
  TensorD t(shape);
  for (double& v : t.data()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * (margin + rng.uniform());
  return t;
}

// Distinct values spaced well apart, shuffled: no near-ties inside a pooling
// window.
TensorD spread_values(const Shape& shape, Rng& rng) {
  TensorD t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * static_cast<double>(i) - 0.05 * static_cast<double>(t.size());
  for (std::size_t i = t.size() - 1; i > 0; --i) std::swap(t[i], t[rng.below(i + 1)]);
  return t;
}

// Projects y onto a fixed random direction so every output element matters.
double project(const TensorD& y, const TensorD& r) { return dot(y, r); }

void check_conv(Checker& c, Rng& rng, std::size_t seed) {
  const std::size_t stride = 1 + seed % 2;
  const std::size_t padding = (seed / 2) % 2;
  TensorD x = random_tensor({2, 2, 5, 5}, rng);
  TensorD w = random_tensor({3, 2, 3, 3}, rng);
  TensorD b = random_tensor({3}, rng);
  const TensorD y0 = conv2d_forward(x, w, b, stride, padding);
  const TensorD r = random_tensor(y0.shape(), rng);
  const ConvGrads<double> g = conv2d_backward(r, x, w, stride, padding);
  const Scalar loss = [&] { return project(conv2d_forward(x, w, b, stride, padding), r); };
  c.compare("conv", x, g.dx, loss);
  c.compare("conv", w, g.dweight, loss);
  c.compare("conv", b, g.dbias, loss);
}

void check_bn(Checker& c, Rng& rng) {
  TensorD x = random_tensor({3, 2, 3, 3}, rng);
  TensorD gamma = random_tensor({2}, rng);
  TensorD beta = random_tensor({2}, rng);
  BatchNormStats<double> stats(2);
  BatchNormCache<double> cache;
  const TensorD y0 = batchnorm_forward(x, gamma, beta, stats, Mode::train, {}, &cache);
  const TensorD r = random_tensor(y0.shape(), rng);
  const BatchNormGrads<double> g = batchnorm_backward(r, gamma, cache);
  const Scalar loss = [&] {
    BatchNormStats<double> scratch(2);
    return project(batchnorm_forward(x, gamma, beta, scratch, Mode::train), r);
  };
  c.compare("bn", x, g.dx, loss);
  c.compare("bn", gamma, g.dgamma, loss);
  c.compare("bn", beta, g.dbeta, loss);
}

void check_linear(Checker& c, Rng& rng) {
  TensorD x = random_tensor({3, 4}, rng);
  TensorD w = random_tensor({4, 5}, rng);
  TensorD b = random_tensor({5}, rng);
  const TensorD r = random_tensor({3, 5}, rng);
  const LinearGrads<double> g = linear_backward(r, x, w);
  const Scalar loss = [&] { return project(linear_forward(x, w, b), r); };
  c.compare("linear", x, g.dx, loss);
  c.compare("linear", w, g.dweight, loss);
  c.compare("linear", b, g.dbias, loss);
}

void check_pool(Checker& c, Rng& rng) {
  TensorD x = spread_values({2, 2, 4, 4}, rng);
  const PoolResult<double> p = maxpool_forward(x, 2, 2);
  const TensorD r = random_tensor(p.y.shape(), rng);
  const TensorD dx = maxpool_backward(r, p.argmax, x.shape());
  c.compare("pool", x, dx, [&] { return project(maxpool_forward(x, 2, 2).y, r); });
}

void check_relu(Checker& c, Rng& rng) {
  TensorD x = away_from_zero({3, 6}, rng, 0.01);
  const TensorD r = random_tensor(x.shape(), rng);
  const TensorD dx = relu_backward(r, x);
  c.compare("relu", x, dx, [&] { return project(relu_forward(x), r); });
}

void check_dropout(Checker& c, Rng& rng) {
  TensorD x = random_tensor({4, 5}, rng);
  const TensorD r = random_tensor(x.shape(), rng);
  // Every evaluation replays the same mask from a copied generator.
  const Rng mask_rng = rng.split();
  Rng draw = mask_rng;
  const DropoutResult<double> on = dropout_forward(x, 0.5, draw, Mode::train);
  c.compare("dropout", x, dropout_backward(r, on.mask), [&] {
    Rng replay = mask_rng;
    return project(dropout_forward(x, 0.5, replay, Mode::train).y, r);
  });

  Rng unused(0);
  const DropoutResult<double> off = dropout_forward(x, 0.5, unused, Mode::eval);
  c.compare("dropout-off", x, dropout_backward(r, off.mask), [&] {
    Rng idle(0);
    return project(dropout_forward(x, 0.5, idle, Mode::eval).y, r);
  });
}

void check_loss(Checker& c, Rng& rng) {
  TensorD logits = random_tensor({3, 7}, rng);
  std::vector<int> labels(3);
  for (int& l : labels) l = static_cast<int>(rng.below(7));
  const LossResult<double> res = softmax_cross_entropy(logits, labels);
  c.compare("loss", logits, res.dlogits, [&] { return softmax_cross_entropy(logits, labels).loss; });
}

std::string model_group(const std::string& slot) {
  if (slot.starts_with("conv")) return "model/conv";
  if (slot.starts_with("bn")) return "model/bn";
  return "model/linear";
}

void check_model(Checker& c, Rng& rng, const GradCheckOptions& options) {
  Rng init = rng.split();
  Model<double> model(options.model, init);
  model.set_mode(Mode::train);
  // Perturb the neutral batch-norm affine parameters so their gradients are
  // exercised away from gamma = 1, beta = 0.
  for (ParamSlot<double>* slot : model.params()) {
    if (slot->name.find(".gamma") != std::string::npos) {
      for (double& v : slot->value.data()) v = rng.uniform(0.5, 1.5);
    } else if (slot->name.find(".beta") != std::string::npos || slot->name.find(".bias") != std::string::npos) {
      for (double& v : slot->value.data()) v = rng.uniform(-0.5, 0.5);
    }
  }

  Shape in_shape{options.batch};
  in_shape.insert(in_shape.end(), options.model.input_shape.begin(), options.model.input_shape.end());
  TensorD x = options.zero_input ? zeros<double>(in_shape) : random_tensor(in_shape, rng);
  std::vector<int> labels(options.batch);
  for (int& l : labels) l = static_cast<int>(rng.below(options.model.num_classes));

  const Scalar loss = [&] { return softmax_cross_entropy(model.forward(x), labels).loss; };

  model.zero_grad();
  const LossResult<double> res = softmax_cross_entropy(model.forward(x), labels);
  const TensorD dx = model.backward(res.dlogits);
  for (ParamSlot<double>* slot : model.params()) {
    const TensorD analytic = slot->grad;
    c.compare(model_group(slot->name), slot->value, analytic, loss);
  }
  // On a constant image every max-pool window is a tie, so the input
  // derivative is one-sided everywhere and only finiteness is meaningful.
  if (options.zero_input) {
    c.require_finite("model/input-finite", dx);
  } else {
    c.compare("model/input", x, dx, loss);
  }
}

}  // namespace

GradCheckReport gradient_check(const GradCheckOptions& options) {
  if (options.seeds == 0) throw UsageError("gradient check needs at least one seed");
  if (!(options.step > 0.0)) throw UsageError("finite-difference step must be positive");
  if (options.batch == 0) throw UsageError("gradient check batch must be at least 1");
  const auto started = std::chrono::steady_clock::now();

  Checker checker(options.step, options.model_tolerance, options.layer_tolerance);
  for (std::size_t seed = 0; seed < options.seeds; ++seed) {
    Rng rng(0x9e37 + seed);
    check_conv(checker, rng, seed);
    check_bn(checker, rng);
    check_linear(checker, rng);
    check_pool(checker, rng);
    check_relu(checker, rng);
    check_dropout(checker, rng);
    check_loss(checker, rng);
    check_model(checker, rng, options);
  }

  GradCheckReport report;
  report.entries = checker.take();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace emberflow
