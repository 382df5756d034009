#include "emberflow/cli.hpp"

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "emberflow/checkpoint.hpp"
#include "emberflow/curves.hpp"
#include "emberflow/data.hpp"
#include "emberflow/error.hpp"
#include "emberflow/gradcheck.hpp"
#include "emberflow/parallel.hpp"
#include "emberflow/train.hpp"

namespace emberflow {
namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string percent(double fraction) { return fmt("%.2f", fraction * 100.0) + "%"; }

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

void print_histogram(std::ostream& out, const Dataset& ds) {
  const ClassHistogram h = class_histogram(ds);
  out << "histogram=";
  for (std::size_t c = 0; c < kNumClasses; ++c) out << (c ? "," : "") << h[c];
  out << '\n';
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out << "  " << c << ' ' << class_name(static_cast<int>(c)) << ' ' << h[c] << '\n';
  }
}

struct PrepareArgs {
  std::string input;
  std::string outdir;
  std::string labels = "labels.csv";
  std::string pixels = "pixels.csv";
};

int cmd_prepare(const PrepareArgs& a, std::ostream& out) {
  const Dataset ds = parse_fer_csv(a.input);
  std::filesystem::create_directories(a.outdir);
  const std::filesystem::path dir(a.outdir);
  split_label_pixel_files(ds, dir / a.labels, dir / a.pixels);
  out << "rows=" << ds.size() << '\n';
  print_histogram(out, ds);
  return kExitOk;
}

struct VisualizeArgs {
  std::string input;
  std::string outdir;
  std::optional<std::size_t> limit;
};

int cmd_visualize(const VisualizeArgs& a, std::ostream& out) {
  const Dataset ds = parse_fer_csv(a.input);
  const std::size_t written = export_images(ds, a.outdir, a.limit);
  out << "images=" << written << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string input;
  std::string optimizer = "sgd";
  TrainConfig config;
  std::size_t train_count = SplitSpec{}.train_count;
  std::size_t limit_train = 0;
  std::size_t limit_val = 0;
  std::string out = "model.ckpt";
  std::string metrics = "metrics.csv";
  std::string curves;
  bool quiet = false;
};

int cmd_train(TrainArgs a, std::ostream& out) {
  TrainConfig& config = a.config;
  config.optimizer = parse_optimizer_kind(a.optimizer);
  if (a.limit_train) config.limit_train = a.limit_train;
  if (a.limit_val) config.limit_val = a.limit_val;
  config.validate();

  const Dataset ds = parse_fer_csv(a.input);
  const auto [train_set, val_set] = train_val_split(ds, {a.train_count});

  const TrainResult result = train(config, train_set, val_set, [&](const EpochMetrics& m) {
    if (!a.quiet) {
      out << "epoch=" << m.epoch << " lr=" << fmt("%.6g", m.lr) << " train_loss=" << fmt("%.6f", m.train_loss)
          << " train_acc=" << fmt("%.4f", m.train_acc) << " val_loss=" << fmt("%.6f", m.val_loss)
          << " val_acc=" << fmt("%.4f", m.val_acc) << " seconds=" << fmt("%.1f", m.seconds)
          << (m.diverged ? " diverged" : "") << std::endl;
    }
    return true;
  });

  const CurveLabel label{upper(a.optimizer), config.epochs};
  std::optional<std::filesystem::path> svg;
  if (!a.curves.empty()) svg = a.curves;
  emit_curves(result.metrics, a.metrics, svg, label);
  save_checkpoint(result.checkpoint, a.out);

  const EpochMetrics& last = result.metrics.back();
  out << "epochs=" << result.metrics.size() << " optimizer=" << label.optimizer
      << " train_acc=" << percent(last.train_acc) << " val_acc=" << percent(last.val_acc)
      << " loss=" << fmt("%.3g", last.train_loss) << '\n';
  if (result.diverged) {
    out << "diverged: epoch " << *result.diverged_epoch << ": " << result.divergence_reason << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string model;
  std::string input;
  std::optional<std::size_t> train_count;
  std::size_t batch_size = 128;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.model);
  const Model<float> model = restore_model(ckpt);
  Dataset ds = parse_fer_csv(a.input);
  if (a.train_count) ds = train_val_split(ds, {*a.train_count}).second;
  if (ds.empty()) throw DataError("no examples to evaluate");
  const EvalResult r = evaluate(model, ds, a.batch_size);
  out << "examples=" << r.count << " loss=" << fmt("%.6f", r.loss) << " accuracy=" << fmt("%.6f", r.accuracy)
      << '\n';
  out << "confusion (rows: true class, columns: predicted)\n";
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%-10s", class_name(static_cast<int>(i)));
    out << name;
    for (std::size_t j = 0; j < kNumClasses; ++j) out << ' ' << r.confusion[i][j];
    out << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(const GradCheckOptions& options, std::ostream& out) {
  const GradCheckReport report = gradient_check(options);
  for (const GradCheckEntry& e : report.entries) {
    char line[160];
    std::snprintf(line, sizeof line, "%-13s max_rel_error=%.3e tolerance=%.0e checked=%zu kinks=%zu %s",
                  e.group.c_str(), e.max_rel_error, e.tolerance, e.checked, e.kinks, e.passed() ? "ok" : "FAIL");
    out << line << '\n';
  }
  out << "seeds=" << options.seeds << " seconds=" << fmt("%.2f", report.seconds) << ' '
      << (report.passed() ? "PASS" : "FAIL") << '\n';
  return report.passed() ? kExitOk : kExitRuntime;
}

struct SynthArgs {
  std::string out;
  std::size_t count = 2500;
  std::uint64_t seed = 1;
  SynthOptions options;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Dataset ds = synthesize_faces(a.count, a.seed, a.options);
  write_fer_csv(ds, a.out);
  out << "rows=" << ds.size() << '\n';
  print_histogram(out, ds);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Facial expression CNN: data preparation, training, evaluation and gradient checks"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "emberflow 1.0");

  PrepareArgs prepare;
  auto* p = app.add_subcommand("prepare", "Split a FER CSV into a labels file and a pixels file");
  p->add_option("--input", prepare.input, "FER CSV (emotion,pixels)")->required();
  p->add_option("--outdir", prepare.outdir, "Output directory")->required();
  p->add_option("--labels", prepare.labels, "Labels file name inside outdir");
  p->add_option("--pixels", prepare.pixels, "Pixels file name inside outdir");

  VisualizeArgs visualize;
  auto* v = app.add_subcommand("visualize", "Write each image as a 48x48 binary PGM");
  v->add_option("--input", visualize.input, "FER CSV")->required();
  v->add_option("--outdir", visualize.outdir, "Output directory")->required();
  v->add_option("--limit", visualize.limit, "Write at most N images (default: all)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the CNN; writes a checkpoint and per-epoch metrics");
  t->add_option("--input", tr.input, "FER CSV")->required();
  t->add_option("--optimizer", tr.optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
  t->add_option("--lr", tr.config.lr, "Base learning rate");
  t->add_option("--decay", tr.config.decay, "Time-based decay: lr / (1 + decay * step)");
  t->add_option("--batch-size", tr.config.batch_size, "Mini-batch size");
  t->add_option("--epochs", tr.config.epochs, "Number of epochs");
  t->add_option("--seed", tr.config.seed, "Seed for initialization, shuffling and dropout");
  t->add_option("--train-count", tr.train_count, "Leading rows used for training; the rest validate");
  t->add_option("--limit-train", tr.limit_train, "Use only the first N training rows (0 = all)");
  t->add_option("--limit-val", tr.limit_val, "Use only the first N validation rows (0 = all)");
  t->add_option("--pool-stride", tr.config.model.pool_stride, "Max-pool stride");
  t->add_option("--out", tr.out, "Checkpoint path");
  t->add_option("--metrics", tr.metrics, "Metrics CSV path");
  t->add_option("--curves", tr.curves, "Accuracy curve SVG path (default: none)");
  t->add_flag("--quiet", tr.quiet, "Print only the final summary line");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint: loss, accuracy and confusion matrix");
  e->add_option("--model", ev.model, "Checkpoint path")->required();
  e->add_option("--input", ev.input, "FER CSV")->required();
  e->add_option("--train-count", ev.train_count, "Evaluate only the rows after the first N (the validation slice)");
  e->add_option("--batch-size", ev.batch_size, "Evaluation batch size")->check(CLI::PositiveNumber);

  GradCheckOptions gc;
  auto* g = app.add_subcommand("gradcheck", "Compare analytic gradients with central finite differences");
  g->add_option("--tolerance", gc.model_tolerance, "Whole-model max relative error");
  g->add_option("--layer-tolerance", gc.layer_tolerance, "Per-layer max relative error");
  g->add_option("--seeds", gc.seeds, "Number of random seeds")->check(CLI::PositiveNumber);

  SynthArgs sy;
  auto* s = app.add_subcommand("synth", "Write a synthetic FER-format CSV of procedurally drawn faces");
  s->add_option("--out", sy.out, "Output CSV path")->required();
  s->add_option("--count", sy.count, "Number of rows")->check(CLI::PositiveNumber);
  s->add_option("--seed", sy.seed, "Generator seed");
  s->add_option("--noise", sy.options.noise_stddev, "Pixel noise standard deviation (intensity units)");
  s->add_option("--min-intensity", sy.options.min_intensity, "Weakest expression strength, in [0,1]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    configure_threads_from_env();
    if (*p) return cmd_prepare(prepare, out);
    if (*v) return cmd_visualize(visualize, out);
    if (*t) return cmd_train(tr, out);
    if (*e) return cmd_evaluate(ev, out);
    if (*g) return cmd_gradcheck(gc, out);
    if (*s) return cmd_synth(sy, out);
    return kExitUsage;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const GeometryError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const CheckpointError& ex) {
    err << "checkpoint error (" << to_string(ex.kind()) << "): " << ex.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace emberflow
