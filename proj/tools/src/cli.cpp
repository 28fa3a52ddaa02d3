#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "casdet/error.hpp"
#include "commands.hpp"

namespace casdet::cli {
namespace {

ModelSpec preset_spec(const std::string& preset, Variant v) {
  if (preset == "default") return ModelSpec::defaults(v);
  if (preset == "calibrated") return ModelSpec::calibrated(v);
  if (preset == "toy") return ModelSpec::toy(v);
  throw DataError("unknown preset '" + preset + "' (expected default, calibrated, toy)");
}

std::vector<Variant> parse_variant_list(const std::string& list) {
  if (list == "all") return {std::begin(kAllVariants), std::end(kAllVariants)};
  std::vector<Variant> out;
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(parse_variant(item));
  }
  if (out.empty()) throw DataError("empty variant list");
  return out;
}

// Layers, lowest precedence first: preset, --config file, individual flags.
struct ConfigFlags {
  std::string config_path;
  std::string preset;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<double> width_scale;
  std::optional<std::size_t> gru_hidden;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> folds;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;

  void attach(CLI::App* app, bool model_flags) {
    app->add_option("--config", config_path, "key = value run configuration file");
    app->add_option("--seed", seed, "root seed");
    if (!model_flags) return;
    app->add_option("--preset", preset, "model preset: default, calibrated or toy (toy also sets train.lr0 = 0.001)");
    app->add_option("--variant", variant, "baseline, rb1, rb2, cnn96, cnn128 or multipath");
    app->add_option("--width-scale", width_scale, "multiplier on convolution kernel counts");
    app->add_option("--gru-hidden", gru_hidden, "hidden units per GRU direction");
    app->add_option("--epochs", epochs, "maximum epochs");
    app->add_option("--folds", folds, "number of cross-validation folds");
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--batch-size", batch_size, "recordings per optimiser step");
  }

  RunConfig resolve() const {
    RunConfig c;
    std::string text;
    if (!preset.empty()) {
      const Variant v = variant.empty() ? Variant::kMultiPath : parse_variant(variant);
      text += format_model_spec(preset_spec(preset, v));
      if (preset == "toy") text += "train.lr0 = 0.001\n";
    }
    apply_run_config(c, text);
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw DataError("cannot open config " + config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      apply_run_config(c, ss.str());
    }
    std::ostringstream flags;
    flags.precision(17);
    if (!variant.empty() && preset.empty()) flags << "model.variant = " << variant << "\n";
    if (seed) flags << "seed = " << *seed << "\n";
    if (width_scale) flags << "model.width_scale = " << *width_scale << "\n";
    if (gru_hidden) flags << "model.gru_hidden = " << *gru_hidden << "\n";
    if (epochs) flags << "train.max_epochs = " << *epochs << "\n";
    if (folds) flags << "train.n_folds = " << *folds << "\n";
    if (lr) flags << "train.lr0 = " << *lr << "\n";
    if (batch_size) flags << "train.batch_size = " << *batch_size << "\n";
    apply_run_config(c, flags.str());
    return c;
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"casdet: continuous adventitious sound detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "casdet 1.0.0");

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "write a synthetic labelled corpus");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--n", synth.n_recordings, "number of recordings");
  s->add_option("--seed", synth.seed, "corpus seed");
  s->add_flag("--no-events", synth.no_events, "background only");
  s->add_option("--snr", synth.snr_db, "tone-to-background SNR in dB");

  TrainOptions train;
  ConfigFlags train_cfg;
  std::optional<std::size_t> only_fold;
  auto* t = app.add_subcommand("train", "k-fold training on the CAS recordings of a manifest");
  t->add_option("--data", train.data, "manifest file")->required();
  t->add_option("--out", train.out, "output directory")->required();
  t->add_option("--fold", only_fold, "train a single fold");
  t->add_option("--jobs", train.jobs, "folds trained concurrently");
  t->add_flag("--resample", train.resample, "resample recordings to 4000 Hz");
  t->add_flag("--quiet", train.quiet, "suppress per-epoch log lines");
  train_cfg.attach(t, true);

  PredictOptions predict;
  ConfigFlags predict_cfg;
  std::optional<double> predict_threshold;
  auto* p = app.add_subcommand("predict", "score recordings with every trained fold");
  p->add_option("--data", predict.data, "manifest file")->required();
  p->add_option("--models", predict.models, "directory written by train")->required();
  p->add_option("--out", predict.out, "output directory")->required();
  p->add_option("--threshold", predict_threshold, "override the validation threshold")->check(CLI::Range(0.0, 1.0));
  p->add_flag("--raw", predict.raw, "skip event merging and burst removal");
  p->add_flag("--dump-features", predict.dump_features, "write the feature matrices as CSV");
  p->add_option("--jobs", predict.jobs, "folds scored concurrently");
  p->add_flag("--resample", predict.resample, "resample recordings to 4000 Hz");
  predict_cfg.attach(p, false);

  EvaluateOptions evaluate;
  ConfigFlags evaluate_cfg;
  auto* e = app.add_subcommand("evaluate", "segment and event metrics of predict outputs");
  e->add_option("--data", evaluate.data, "manifest file")->required();
  e->add_option("--pred", evaluate.predictions, "directory written by predict")->required();
  e->add_option("--out", evaluate.out, "output directory")->required();
  e->add_flag("--svg", evaluate.svg, "also plot each fold's ROC curve");
  e->add_flag("--resample", evaluate.resample, "resample recordings to 4000 Hz");
  evaluate_cfg.attach(e, false);

  BenchmarkOptions bench;
  std::string bench_variants = "baseline,multipath,cnn96,cnn128", bench_preset = "default";
  std::string bench_out;
  auto* b = app.add_subcommand("benchmark", "median inference latency per variant");
  b->add_option("--variants", bench_variants, "comma-separated variants or 'all'; the first is the ratio base");
  b->add_option("--preset", bench_preset, "default, calibrated or toy");
  b->add_option("--reps", bench.repetitions, "timed repetitions per model");
  b->add_option("--warmup", bench.warmup, "discarded warm-up repetitions");
  b->add_option("--frames", bench.frames, "input frames");
  b->add_option("--seed", bench.seed, "input seed");
  b->add_option("--out", bench_out, "directory for latency.csv and latency.txt");

  ReportOptions report;
  std::string report_variants, report_preset = "default", report_out, roc, wav, events, labels, svg;
  auto* r = app.add_subcommand("report", "architecture tables and plots");
  r->add_option("--variants", report_variants, "comma-separated variants or 'all'");
  r->add_option("--preset", report_preset, "default, calibrated or toy");
  r->add_option("--frames", report.frames, "input frames for output shapes");
  r->add_flag("--json", report.json, "JSON instead of text");
  r->add_option("--out", report_out, "write the table here instead of stdout");
  r->add_option("--roc", roc, "ROC CSV written by evaluate");
  r->add_option("--wav", wav, "recording to plot");
  r->add_option("--events", events, "detections to overlay");
  r->add_option("--labels", labels, "labels to overlay");
  r->add_option("--svg", svg, "SVG output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) {
      cmd_synth(synth, out);
    } else if (t->parsed()) {
      train.config = train_cfg.resolve();
      train.only_fold = only_fold;
      cmd_train(train, out);
    } else if (p->parsed()) {
      const RunConfig c = predict_cfg.resolve();
      predict.merge = c.merge;
      predict.features = c.features;
      predict.threshold = predict_threshold;
      cmd_predict(predict, out);
    } else if (e->parsed()) {
      const RunConfig c = evaluate_cfg.resolve();
      evaluate.merge = c.merge;
      evaluate.features = c.features;
      cmd_evaluate(evaluate, out);
    } else if (b->parsed()) {
      for (Variant v : parse_variant_list(bench_variants)) bench.specs.push_back(preset_spec(bench_preset, v));
      if (!bench_out.empty()) bench.out = bench_out;
      cmd_benchmark(bench, out);
    } else if (r->parsed()) {
      if (!report_variants.empty()) {
        for (Variant v : parse_variant_list(report_variants)) report.specs.push_back(preset_spec(report_preset, v));
      }
      if (!report_out.empty()) report.out = report_out;
      if (!roc.empty()) report.roc_csv = roc;
      if (!wav.empty()) report.wav = wav;
      if (!events.empty()) report.events = events;
      if (!labels.empty()) report.labels = labels;
      if (!svg.empty()) report.svg = svg;
      cmd_report(report, out);
    }
  } catch (const NumericError& ex) {
    err << "casdet: numeric error: " << ex.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& ex) {
    err << "casdet: data error: " << ex.what() << "\n";
    return kExitData;
  } catch (const std::exception& ex) {
    err << "casdet: error: " << ex.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace casdet::cli
