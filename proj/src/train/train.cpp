#include "emberflow/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace emberflow {

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (!(lr > 0.0) && !(allow_zero_lr && lr == 0.0)) throw UsageError("learning rate must be positive");
  if (!(decay >= 0.0)) throw UsageError("decay must be non-negative");
  if (limit_train && *limit_train == 0) throw UsageError("limit_train must be positive");
  if (limit_val && *limit_val == 0) throw UsageError("limit_val must be positive");
  model.validate();
}

EvalResult evaluate(const Model<float>& model, const Dataset& dataset, std::size_t batch_size) {
  if (dataset.empty()) throw UsageError("evaluate: empty dataset");
  if (batch_size == 0) throw UsageError("evaluate: batch size must be at least 1");
  if (model.config().num_classes != kNumClasses) throw UsageError("evaluate: model must have 7 classes");

  EvalResult r;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, dataset.size() - start);
    indices.resize(n);
    std::iota(indices.begin(), indices.end(), start);
    const Batch batch = make_batch(dataset, indices);
    const Tensor logits = model.infer(batch.images);
    const LossResult<float> loss = softmax_cross_entropy(logits, batch.labels);
    loss_sum += static_cast<double>(loss.loss) * static_cast<double>(n);
    const std::vector<std::size_t> predicted = argmax_rows(logits);
    for (std::size_t i = 0; i < n; ++i) {
      const auto truth = static_cast<std::size_t>(batch.labels[i]);
      ++r.confusion[truth][predicted[i]];
      if (predicted[i] == truth) ++correct;
    }
  }
  r.count = dataset.size();
  r.loss = loss_sum / static_cast<double>(r.count);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
  return r;
}

namespace {

// Seeds are derived in a fixed order: model init first, then the shuffle
// stream that stays with the run.
struct RunStreams {
  Rng run;
  Rng init;
};

RunStreams make_streams(std::uint64_t seed) {
  Rng root(seed);
  Rng init = root.split();
  Rng run = root.split();
  return {run, init};
}

}  // namespace

Model<float> initial_model(const TrainConfig& config) {
  RunStreams streams = make_streams(config.seed);
  return Model<float>(config.model, streams.init);
}

TrainResult train(const TrainConfig& config, const Dataset& train_full, const Dataset& val_full,
                  const EpochCallback& on_epoch) {
  config.validate();
  const Dataset train_set = config.limit_train ? take_front(train_full, *config.limit_train) : train_full;
  const Dataset val_set = config.limit_val ? take_front(val_full, *config.limit_val) : val_full;
  if (train_set.empty() || val_set.empty()) throw UsageError("train: datasets must be non-empty");

  RunStreams streams = make_streams(config.seed);
  Model<float> model(config.model, streams.init);
  std::unique_ptr<Optimizer<float>> optimizer = make_optimizer<float>(config.optimizer, config.lr, config.decay);
  Rng& rng = streams.run;

  TrainResult result;
  const auto slots = model.params();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = optimizer->effective_lr();

    auto mark_diverged = [&](const std::string& reason) {
      m.diverged = true;
      if (!result.diverged) {
        result.diverged = true;
        result.diverged_epoch = epoch;
        result.divergence_reason = reason;
      }
    };

    model.set_mode(Mode::train);
    BatchIterator it(train_set, config.batch_size, true, &rng);
    while (auto batch = it.next()) {
      model.zero_grad();
      const Tensor logits = model.forward(batch->images);
      const LossResult<float> loss = softmax_cross_entropy(logits, batch->labels);
      if (!std::isfinite(loss.loss)) {
        mark_diverged("non-finite training loss");
        continue;
      }
      model.backward(loss.dlogits);
      try {
        optimizer->step(slots);
      } catch (const NumericError& e) {
        mark_diverged(e.what());
      }
    }

    model.set_mode(Mode::eval);
    const EvalResult train_eval = evaluate(model, train_set, config.batch_size);
    const EvalResult val_eval = evaluate(model, val_set, config.batch_size);
    m.train_loss = train_eval.loss;
    m.train_acc = train_eval.accuracy;
    m.val_loss = val_eval.loss;
    m.val_acc = val_eval.accuracy;
    if (!std::isfinite(m.train_loss) || !std::isfinite(m.val_loss)) mark_diverged("non-finite evaluation loss");
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.metrics.push_back(m);

    if (on_epoch && !on_epoch(m)) break;
  }

  RunMetadata run;
  run.optimizer = config.optimizer;
  run.lr = config.lr;
  run.decay = config.decay;
  run.batch_size = config.batch_size;
  run.seed = config.seed;
  run.epoch = result.metrics.size();
  run.optimizer_steps = optimizer->step_count();
  run.run_rng = rng.state();
  run.dropout_rng = model.dropout_rng().state();
  run.diverged = result.diverged;
  result.checkpoint = make_checkpoint(model, *optimizer, run);
  return result;
}

}  // namespace emberflow
