#include <doctest.h>

#include <cmath>
#include <limits>

#include "emberflow/optim.hpp"

using namespace emberflow;

namespace {

ParamSlot<double> slot(const std::string& name, std::vector<double> value, std::vector<double> grad) {
  const Shape shape{value.size()};
  return {name, TensorD(shape, std::move(value)), TensorD(shape, std::move(grad))};
}

}  // namespace

TEST_CASE("sgd single step and schedule") {
  Sgd<double> sgd({0.05, 1e-5});
  CHECK(sgd.effective_lr() == 0.05);
  auto p = slot("w", {1.0}, {2.0});
  ParamSlot<double>* slots[] = {&p};
  sgd.step(slots);
  CHECK(p.value[0] == doctest::Approx(0.9));
  CHECK(p.grad[0] == 2.0);
  CHECK(sgd.step_count() == 1);
  CHECK(sgd.effective_lr() == doctest::Approx(0.05 / (1.0 + 1e-5)));

  OptimizerState<double> state{100000, {}};
  sgd.import_state(state);
  CHECK(sgd.effective_lr() == doctest::Approx(0.025));
}

TEST_CASE("sgd with zero decay keeps a constant rate") {
  Sgd<double> sgd({0.05, 0.0});
  auto p = slot("w", {0.0}, {1.0});
  ParamSlot<double>* slots[] = {&p};
  for (int i = 0; i < 50; ++i) sgd.step(slots);
  CHECK(sgd.effective_lr() == 0.05);
  CHECK(p.value[0] == doctest::Approx(-2.5));
}

TEST_CASE("adam first step moves each entry by about lr against the gradient sign") {
  Adam<double> adam({0.05});
  auto p = slot("w", {1.0, 1.0, 1.0}, {3.0, -0.001, 250.0});
  ParamSlot<double>* slots[] = {&p};
  adam.step(slots);
  CHECK(p.value[0] == doctest::Approx(0.95));
  CHECK(p.value[1] == doctest::Approx(1.05));
  CHECK(p.value[2] == doctest::Approx(0.95));
  for (double v : p.value.values()) CHECK(std::abs(v - 1.0) <= 0.05 * (1 + 1e-6));
}

TEST_CASE("adam zero gradient is a zero update") {
  Adam<double> adam({0.05});
  auto p = slot("w", {0.5, -0.5}, {0.0, 0.0});
  ParamSlot<double>* slots[] = {&p};
  adam.step(slots);
  CHECK(p.value.values() == std::vector<double>{0.5, -0.5});
  CHECK(adam.first_moment("w")->values() == std::vector<double>{0.0, 0.0});
  CHECK(adam.second_moment("w")->values() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("adam matches a scalar reference on f(w) = w^2") {
  // Hand-rolled reference: the textbook update written out for one scalar.
  double w_ref = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> trace;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2.0 * w_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w_ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    trace.push_back(w_ref);
  }

  Adam<double> adam({lr, b1, b2, eps});
  auto p = slot("w", {1.0}, {0.0});
  ParamSlot<double>* slots[] = {&p};
  for (int t = 0; t < 10; ++t) {
    p.grad[0] = 2.0 * p.value[0];
    adam.step(slots);
    CHECK(std::abs(p.value[0] - trace[static_cast<std::size_t>(t)]) < 1e-6);
  }
  CHECK(adam.step_count() == 10);
}

TEST_CASE("non-finite gradients abort before any update") {
  for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    auto opt = make_optimizer<double>(kind, 0.05, 1e-5);
    auto good = slot("fc1.weight", {1.0, 2.0}, {0.1, 0.1});
    auto bad = slot("fc2.bias", {3.0}, {std::numeric_limits<double>::quiet_NaN()});
    ParamSlot<double>* slots[] = {&good, &bad};
    try {
      opt->step(slots);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(e.slot() == "fc2.bias");
      CHECK(std::string(e.what()).find("fc2.bias") != std::string::npos);
    }
    CHECK(good.value.values() == std::vector<double>{1.0, 2.0});
    CHECK(opt->step_count() == 0);

    bad.grad[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(opt->step(slots), NumericError);
  }
}

TEST_CASE("optimizer state export and import") {
  Adam<double> a({0.05});
  auto p = slot("w", {1.0, 2.0}, {0.5, -0.5});
  ParamSlot<double>* slots[] = {&p};
  a.step(slots);
  a.step(slots);
  const OptimizerState<double> s = a.export_state();
  CHECK(s.step_count == 2);
  REQUIRE(s.tensors.size() == 2);
  CHECK(s.tensors[0].first == "adam.m.w");
  CHECK(s.tensors[1].first == "adam.v.w");

  Adam<double> b({0.05});
  b.import_state(s);
  auto q = p;
  ParamSlot<double>* qs[] = {&q};
  a.step(slots);
  b.step(qs);
  CHECK(p.value == q.value);
}

TEST_CASE("optimizer names") {
  CHECK(parse_optimizer_kind("sgd") == OptimizerKind::sgd);
  CHECK(parse_optimizer_kind("adam") == OptimizerKind::adam);
  CHECK_THROWS_AS(parse_optimizer_kind("rmsprop"), UsageError);
  CHECK(std::string(to_string(OptimizerKind::adam)) == "adam");
}
