#include <doctest.h>

#include "emberflow/gradcheck.hpp"
#include "emberflow/model.hpp"
#include "support/oracles.hpp"

using namespace emberflow;

TEST_CASE("default shape trace") {
  const ModelConfig c;
  const std::vector<Shape> expect{{1, 48, 48}, {64, 24, 24}, {128, 12, 12}, {256, 6, 6}, {9216}, {256}, {7}};
  CHECK(c.shape_trace() == expect);
  CHECK(c.flatten_size() == 9216);
}

TEST_CASE("pool stride 1 keeps the literal geometry available") {
  ModelConfig c;
  c.pool_stride = 1;
  CHECK(c.flatten_size() == 518400);
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.conv_channels.clear();
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.input_shape = {1, 47, 47};
  CHECK_THROWS_AS(c.validate(), GeometryError);
}

TEST_CASE("parameters, buffers and initialization") {
  Rng rng(3);
  const Model<float> m(ModelConfig{}, rng);
  std::vector<std::string> names;
  std::size_t total = 0;
  for (const auto* slot : m.params()) {
    names.push_back(slot->name);
    total += slot->value.size();
    CHECK(slot->grad.shape() == slot->value.shape());
  }
  const std::vector<std::string> expect{"conv1.weight", "conv1.bias", "bn1.gamma", "bn1.beta",  "conv2.weight",
                                        "conv2.bias",   "bn2.gamma",  "bn2.beta",  "conv3.weight", "conv3.bias",
                                        "bn3.gamma",    "bn3.beta",   "fc1.weight", "fc1.bias",    "fc2.weight",
                                        "fc2.bias"};
  CHECK(names == expect);
  const std::size_t conv = (64 * 9 + 64) + (128 * 64 * 9 + 128) + (256 * 128 * 9 + 256);
  const std::size_t bn = 2 * (64 + 128 + 256);
  const std::size_t fc = (9216 * 256 + 256) + (256 * 7 + 7);
  CHECK(total == conv + bn + fc);
  CHECK(m.buffers().size() == 6);
  CHECK(m.buffers()[0].name == "bn1.running_mean");

  for (const auto* slot : m.params()) {
    const auto& v = slot->value.values();
    if (slot->name.ends_with(".bias") || slot->name.ends_with(".beta")) {
      CHECK(std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; }));
    } else if (slot->name.ends_with(".gamma")) {
      CHECK(std::all_of(v.begin(), v.end(), [](float x) { return x == 1.0f; }));
    } else if (v.size() > 10000) {
      // He-normal: variance 2 / fan_in.
      const auto& s = slot->value.shape();
      const double fan_in = s.size() == 4 ? static_cast<double>(s[1] * s[2] * s[3]) : static_cast<double>(s[0]);
      double sq = 0.0;
      for (float x : v) sq += static_cast<double>(x) * x;
      CHECK(sq / v.size() == doctest::Approx(2.0 / fan_in).epsilon(0.05));
    }
  }
}

TEST_CASE("forward shapes, eval determinism and side-effect-free inference") {
  Rng rng(4);
  Model<float> m(tiny_model_config(), rng);
  std::mt19937_64 gen(4);
  const Tensor x = oracle::random_tensor<float>({3, 1, 8, 8}, gen);
  const Tensor logits = m.forward(x);
  CHECK(logits.shape() == Shape{3, 7});

  std::vector<Tensor> before;
  for (const auto& b : m.buffers()) before.push_back(*b.value);
  const Tensor a = m.infer(x);
  const Tensor b = m.infer(x);
  CHECK(a == b);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(*m.buffers()[i].value == before[i]);

  m.set_mode(Mode::eval);
  CHECK(m.forward(x) == a);
}

TEST_CASE("frozen batch norm keeps running statistics in train mode") {
  Rng rng(5);
  Model<float> m(tiny_model_config(), rng);
  std::mt19937_64 gen(5);
  const Tensor x = oracle::random_tensor<float>({2, 1, 8, 8}, gen);
  m.set_batchnorm_frozen(true);
  m.forward(x);
  for (const auto& b : m.buffers()) {
    const float start = b.name.ends_with("running_mean") ? 0.0f : 1.0f;
    CHECK(std::all_of(b.value->values().begin(), b.value->values().end(), [&](float v) { return v == start; }));
  }
  m.set_batchnorm_frozen(false);
  m.forward(x);
  CHECK(m.buffers()[0].value->values() != std::vector<float>(2, 0.0f));
}

TEST_CASE("backward requires a forward") {
  Rng rng(6);
  Model<float> m(tiny_model_config(), rng);
  CHECK_THROWS_AS(m.backward(Tensor({2, 7})), UsageError);
  std::mt19937_64 gen(6);
  m.forward(oracle::random_tensor<float>({2, 1, 8, 8}, gen));
  CHECK_NOTHROW(m.backward(Tensor({2, 7})));
  CHECK_THROWS_AS(m.backward(Tensor({2, 7})), UsageError);
}

TEST_CASE("same init seed gives the same model") {
  Rng r1(9), r2(9), r3(10);
  const Model<float> a(tiny_model_config(), r1), b(tiny_model_config(), r2), c(tiny_model_config(), r3);
  CHECK(a.params()[0]->value == b.params()[0]->value);
  CHECK(a.params()[0]->value != c.params()[0]->value);
  CHECK(a.dropout_rng().state() == b.dropout_rng().state());
}

TEST_CASE("whole-model gradients match finite differences") {
  Rng rng(7);
  Model<double> m(tiny_model_config(), rng);
  std::mt19937_64 gen(7);
  TensorD x = oracle::random_tensor<double>({2, 1, 8, 8}, gen);
  const std::vector<int> labels{3, 5};
  const auto loss = [&] { return softmax_cross_entropy(m.forward(x), labels).loss; };
  m.zero_grad();
  const TensorD dx = m.backward(softmax_cross_entropy(m.forward(x), labels).dlogits);
  std::size_t compared = 0;
  for (ParamSlot<double>* slot : m.params()) {
    const TensorD analytic = slot->grad;
    for (std::size_t i = 0; i < slot->value.size(); i += 3) {
      const double numeric = oracle::central_difference(loss, slot->value[i], 1e-5);
      CHECK(std::abs(analytic[i] - numeric) <= 1e-3 * std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6}));
      ++compared;
    }
  }
  for (std::size_t i = 0; i < x.size(); i += 5) {
    const double numeric = oracle::central_difference(loss, x[i], 1e-5);
    CHECK(std::abs(dx[i] - numeric) <= 1e-3 * std::max({std::abs(numeric), std::abs(dx[i]), 1e-6}));
  }
  CHECK(compared > 50);
}
