#include <doctest.h>

#include <cstring>
#include <fstream>

#include "emberflow/curves.hpp"
#include "emberflow/gradcheck.hpp"
#include "emberflow/train.hpp"
#include "support/oracles.hpp"

using namespace emberflow;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.model.conv_channels = {4, 4, 4};
  c.model.hidden_units = 8;
  c.batch_size = 8;
  c.epochs = 2;
  return c;
}

const Dataset& faces() {
  static const Dataset ds = synthesize_faces(48, 21);
  return ds;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

CheckpointError::Kind load_error(const fs::path& p) {
  try {
    load_checkpoint(p);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("checkpoint loaded");
  return CheckpointError::Kind::io;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small_config();
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.allow_zero_lr = true;
  CHECK_NOTHROW(c.validate());
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("evaluation identities") {
  const Model<float> m = initial_model(small_config());
  const EvalResult r = evaluate(m, faces(), 7);
  CHECK(r.count == faces().size());
  std::size_t total = 0, trace = 0;
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < kNumClasses; ++p) row += r.confusion[t][p];
    CHECK(row == class_histogram(faces())[t]);
    total += row;
    trace += r.confusion[t][t];
  }
  CHECK(total == faces().size());
  CHECK(r.accuracy == doctest::Approx(static_cast<double>(trace) / faces().size()));
  // Batch size does not change the result beyond float summation order.
  CHECK(evaluate(m, faces(), 48).loss == doctest::Approx(r.loss).epsilon(1e-5));
  CHECK_THROWS_AS(evaluate(m, Dataset{}, 8), UsageError);
}

TEST_CASE("zero learning rate leaves every parameter unchanged") {
  TrainConfig c = small_config();
  c.lr = 0.0;
  c.allow_zero_lr = true;
  const Model<float> before = initial_model(c);
  const TrainResult r = train(c, faces(), faces());
  const Model<float> after = restore_model(r.checkpoint);
  for (std::size_t i = 0; i < before.params().size(); ++i) {
    CHECK(before.params()[i]->value == after.params()[i]->value);
  }
  CHECK(r.checkpoint.run.optimizer_steps == 2 * 6);
}

TEST_CASE("training is deterministic for a seed") {
  TrainConfig c = small_config();
  const TrainResult a = train(c, faces(), faces());
  const TrainResult b = train(c, faces(), faces());
  REQUIRE(a.metrics.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(a.metrics[e].train_loss == b.metrics[e].train_loss);
    CHECK(a.metrics[e].val_acc == b.metrics[e].val_acc);
  }
  CHECK(a.checkpoint.tensors == b.checkpoint.tensors);
  CHECK(a.metrics[0].epoch == 1);
  CHECK(a.metrics[1].lr < a.metrics[0].lr);

  c.seed = 2;
  CHECK(train(c, faces(), faces()).checkpoint.tensors != a.checkpoint.tensors);
}

TEST_CASE("training limits and the epoch callback") {
  TrainConfig c = small_config();
  c.epochs = 5;
  c.limit_train = 16;
  std::size_t calls = 0;
  const TrainResult r = train(c, faces(), faces(), [&](const EpochMetrics&) { return ++calls < 2; });
  CHECK(calls == 2);
  CHECK(r.metrics.size() == 2);
  CHECK(r.checkpoint.run.epoch == 2);
  CHECK(r.checkpoint.run.optimizer_steps == 4);
}

TEST_CASE("a huge learning rate is recorded as divergence, not a crash") {
  TrainConfig c = small_config();
  c.lr = 1e30;
  const TrainResult r = train(c, faces(), faces());
  CHECK(r.diverged);
  CHECK(r.diverged_epoch.has_value());
  CHECK_FALSE(r.divergence_reason.empty());
  CHECK(r.checkpoint.run.diverged);
}

TEST_CASE("checkpoint round trip") {
  const fs::path dir = oracle::temp_dir("ckpt");
  for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    TrainConfig c = small_config();
    c.optimizer = kind;
    c.epochs = 1;
    const TrainResult r = train(c, faces(), faces());
    save_checkpoint(r.checkpoint, dir / "m.ckpt");
    CHECK_FALSE(fs::exists(dir / "m.ckpt.tmp"));
    const Checkpoint back = load_checkpoint(dir / "m.ckpt");
    CHECK(back.model == r.checkpoint.model);
    CHECK(back.run == r.checkpoint.run);
    CHECK(back.tensors == r.checkpoint.tensors);
    CHECK((back.find("adam.m.fc1.weight") != nullptr) == (kind == OptimizerKind::adam));

    const Model<float> m = restore_model(back);
    CHECK(evaluate(m, faces(), 16).loss == evaluate(restore_model(r.checkpoint), faces(), 16).loss);
    auto opt = make_optimizer<float>(kind, c.lr, c.decay);
    restore_optimizer(back, *opt);
    CHECK(opt->step_count() == back.run.optimizer_steps);
    auto wrong = make_optimizer<float>(kind == OptimizerKind::sgd ? OptimizerKind::adam : OptimizerKind::sgd, 0.1, 0.0);
    CHECK_THROWS_AS(restore_optimizer(back, *wrong), CheckpointError);
  }
}

TEST_CASE("checkpoint corruption is classified") {
  const fs::path dir = oracle::temp_dir("ckpt_bad");
  TrainConfig c = small_config();
  c.epochs = 1;
  save_checkpoint(train(c, faces(), faces()).checkpoint, dir / "good.ckpt");
  const std::vector<char> good = read_bytes(dir / "good.ckpt");

  std::vector<char> bytes = good;
  bytes[0] = 'X';
  write_bytes(dir / "magic.ckpt", bytes);
  CHECK(load_error(dir / "magic.ckpt") == CheckpointError::Kind::bad_magic);

  bytes = good;
  bytes[8] = 2;
  write_bytes(dir / "version.ckpt", bytes);
  CHECK(load_error(dir / "version.ckpt") == CheckpointError::Kind::unsupported_version);

  bytes.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(good.size() / 2));
  write_bytes(dir / "short.ckpt", bytes);
  CHECK(load_error(dir / "short.ckpt") == CheckpointError::Kind::truncated);

  bytes = good;
  bytes.push_back(0);
  write_bytes(dir / "trailing.ckpt", bytes);
  CHECK(load_error(dir / "trailing.ckpt") == CheckpointError::Kind::malformed);

  bytes = good;
  bytes[16] = '!';  // inside the JSON block
  write_bytes(dir / "json.ckpt", bytes);
  CHECK(load_error(dir / "json.ckpt") == CheckpointError::Kind::malformed);

  write_bytes(dir / "tiny.ckpt", {'F', 'E'});
  CHECK(load_error(dir / "tiny.ckpt") == CheckpointError::Kind::bad_magic);
  CHECK(load_error(dir / "absent.ckpt") == CheckpointError::Kind::io);

  // A tensor whose shape disagrees with the embedded config.
  Checkpoint ck = load_checkpoint(dir / "good.ckpt");
  for (auto& [name, t] : ck.tensors) {
    if (name == "fc2.bias") t = Tensor({8});
  }
  save_checkpoint(ck, dir / "shape.ckpt");
  CHECK(load_error(dir / "shape.ckpt") == CheckpointError::Kind::shape_mismatch);
  ck.tensors.pop_back();
  CHECK_THROWS_AS(restore_model(ck), CheckpointError);
}

TEST_CASE("model config json round trip") {
  ModelConfig c;
  c.pool_stride = 1;
  c.dropout_rate = 0.35;
  CHECK(model_config_from_json(model_config_to_json(c)) == c);
}

TEST_CASE("metrics csv and accuracy svg") {
  const fs::path dir = oracle::temp_dir("curves");
  std::vector<EpochMetrics> m(2);
  m[0] = {1, 0.05, 1.9, 0.25, 1.95, 0.2, 1.0, false};
  m[1] = {2, 0.049, 1.5, 0.45, 1.6, 0.4, 1.0, false};
  emit_curves(m, dir / "metrics.csv", dir / "acc.svg", {"SGD", 2});

  std::ifstream in(dir / "metrics.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == kMetricsHeader);
  CHECK(lines[2] == "2,0.049000,1.500000,0.450000,1.600000,0.400000");

  const auto back = read_metrics_csv(dir / "metrics.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].val_acc == doctest::Approx(0.4));

  std::ifstream svg_in(dir / "acc.svg");
  const std::string svg{std::istreambuf_iterator<char>(svg_in), {}};
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("Train acc vs val acc (epochs=2, SGD)") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);

  emit_curves({}, dir / "empty.csv", dir / "empty.svg", {"SGD", 0});
  CHECK(fs::exists(dir / "empty.csv"));
  CHECK_FALSE(fs::exists(dir / "empty.svg"));
  CHECK(read_metrics_csv(dir / "empty.csv").empty());

  std::ofstream(dir / "bad.csv") << "epoch,lr\n1,2\n";
  CHECK_THROWS_AS(read_metrics_csv(dir / "bad.csv"), DataError);
}

TEST_CASE("gradient check covers every layer and passes") {
  GradCheckOptions o;
  o.seeds = 3;
  const GradCheckReport r = gradient_check(o);
  for (const char* group : {"conv", "bn", "linear", "pool", "relu", "dropout", "dropout-off", "loss", "model/conv",
                            "model/bn", "model/linear", "model/input"}) {
    const GradCheckEntry* e = r.find(group);
    REQUIRE_MESSAGE(e != nullptr, group);
    CHECK_MESSAGE(e->passed(), group << " " << e->max_rel_error);
    CHECK(e->checked > 0);
  }
  CHECK(r.passed());

  o.zero_input = true;
  const GradCheckReport zero = gradient_check(o);
  CHECK(zero.passed());
  REQUIRE(zero.find("model/input-finite") != nullptr);
  CHECK(zero.find("model/input-finite")->finite);
  CHECK(zero.find("model/conv")->checked > 0);

  o.zero_input = false;
  o.model_tolerance = 0.0;
  CHECK_FALSE(gradient_check(o).passed());
}

TEST_CASE("relative error") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(1.0, 0.5) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 1e-9) == doctest::Approx(1e-3));
}
