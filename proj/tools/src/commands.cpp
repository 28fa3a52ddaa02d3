#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "casdet/checkpoint.hpp"
#include "casdet/error.hpp"
#include "casdet/evaluation.hpp"
#include "casdet/pipeline.hpp"
#include "casdet/synth.hpp"
#include "casdet/training.hpp"
#include "json.hpp"
#include "svg.hpp"

namespace casdet::cli {

using Json = nlohmann::ordered_json;

namespace {

// Stream indices under the root seed; fold streams are offset by the fold.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kModelStream = 1000;
constexpr std::uint64_t kTrainStream = 2000;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

Json metric_json(const Metric& m) { return m ? Json(*m) : Json(nullptr); }

// Runs body(i) for i in [0, n) on up to `jobs` threads. The exception of the
// lowest failing index is rethrown, so failures do not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::exception_ptr> errors(n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

class Logger {
 public:
  Logger(std::ostream& out, bool quiet) : out_(out), quiet_(quiet) {}
  void line(const std::string& s) {
    if (quiet_) return;
    std::lock_guard<std::mutex> lock(mu_);
    out_ << s << '\n' << std::flush;
  }

 private:
  std::ostream& out_;
  bool quiet_;
  std::mutex mu_;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string fold_name(std::size_t f) { return "fold" + std::to_string(f); }

// Folds present in a directory as fold<k>.<suffix> files or fold<k> subdirectories.
std::vector<std::size_t> list_folds(const fs::path& dir, const std::string& suffix, bool directories) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::size_t> folds;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("fold", 0) != 0) continue;
    std::string rest = name.substr(4);
    if (directories) {
      if (!e.is_directory()) continue;
    } else {
      if (rest.size() <= suffix.size() || rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) != 0) {
        continue;
      }
      rest.resize(rest.size() - suffix.size());
    }
    if (rest.empty() || !std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      continue;
    }
    folds.push_back(std::stoul(rest));
  }
  std::sort(folds.begin(), folds.end());
  if (folds.empty()) throw DataError("no fold outputs found in " + dir.string());
  return folds;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Json segment_summary(const EvaluationReport& r) {
  return {{"acc", metric_json(r.segment_metrics.acc)}, {"ppv", metric_json(r.segment_metrics.ppv)},
          {"sen", metric_json(r.segment_metrics.sen)}, {"spe", metric_json(r.segment_metrics.spe)},
          {"f1", metric_json(r.segment_metrics.f1)},   {"auc", metric_json(r.auc)}};
}

Json event_summary(const EvaluationReport& r) {
  return {{"ppv", metric_json(r.event_metrics.ppv)},
          {"sen", metric_json(r.event_metrics.sen)},
          {"f1", metric_json(r.event_metrics.f1)}};
}

// Mean of a metric over folds; null as soon as one fold leaves it undefined.
Json mean_over(const std::vector<Json>& blocks, const std::string& key) {
  double sum = 0.0;
  for (const auto& b : blocks) {
    if (b[key].is_null()) return nullptr;
    sum += b[key].get<double>();
  }
  return sum / static_cast<double>(blocks.size());
}

}  // namespace

std::uint64_t fold_split_seed(std::uint64_t root) { return derive_seed(root, kSplitStream); }
std::uint64_t fold_model_seed(std::uint64_t root, std::size_t fold) {
  return derive_seed(root, kModelStream + fold);
}
std::uint64_t fold_train_seed(std::uint64_t root, std::size_t fold) {
  return derive_seed(root, kTrainStream + fold);
}

void cmd_synth(const SynthOptions& options, std::ostream& log) {
  if (options.n_recordings == 0) throw DataError("synth: --n must be positive");
  SynthMix mix = options.no_events ? SynthMix::none() : SynthMix::defaults();
  mix.snr_db = options.snr_db;
  const Dataset ds = synth_corpus(options.n_recordings, mix, options.seed);
  ensure_dir(options.out);
  write_corpus(options.out, ds);
  std::size_t n_events = 0, n_cas = 0;
  for (const auto& e : ds.entries) {
    const auto k = std::count_if(e.labels.begin(), e.labels.end(), [](const LabelEvent& l) { return is_cas(l.kind); });
    n_events += static_cast<std::size_t>(k);
    n_cas += k > 0 ? 1 : 0;
  }
  Json j;
  j["seed"] = options.seed;
  j["n_recordings"] = ds.size();
  j["n_cas_recordings"] = n_cas;
  j["n_cas_events"] = n_events;
  j["snr_db"] = options.snr_db;
  j["background_only"] = options.no_events;
  write_text(options.out / "corpus.json", j.dump(2) + "\n");
  log << "synth: wrote " << ds.size() << " recordings (" << n_events << " CAS events) to "
      << options.out.string() << "\n";
}

void cmd_train(const TrainOptions& options, std::ostream& log) {
  const RunConfig& cfg = options.config;
  cfg.model.validate();
  cfg.train.validate();
  Logger logger(log, options.quiet);
  const Dataset all = load_dataset(options.data, {options.resample, kDefaultSampleRate});
  const Dataset cas = filter_cas_dataset(all);
  logger.line("train: " + std::to_string(cas.size()) + " of " + std::to_string(all.size()) +
              " recordings hold CAS labels");
  const auto folds = kfold_indices(cas.size(), cfg.train.n_folds, fold_split_seed(cfg.seed));
  std::vector<std::size_t> targets;
  if (options.only_fold) {
    if (*options.only_fold >= folds.size()) {
      throw DataError("train: --fold " + std::to_string(*options.only_fold) + " out of range [0, " +
                      std::to_string(folds.size()) + ")");
    }
    targets.push_back(*options.only_fold);
  } else {
    for (std::size_t f = 0; f < folds.size(); ++f) targets.push_back(f);
  }
  const auto prepared = prepare_all(cas, cfg.features);
  ensure_dir(options.out);
  write_text(options.out / "run.conf",
             "# casdet train, root seed " + std::to_string(cfg.seed) + "\n" + format_run_config(cfg));

  std::vector<Json> summaries(targets.size());
  parallel_for(targets.size(), options.jobs, [&](std::size_t t) {
    const std::size_t f = targets[t];
    std::vector<const PreparedRecording*> tr, va;
    for (std::size_t i : folds[f].train) tr.push_back(&prepared[i]);
    for (std::size_t i : folds[f].val) va.push_back(&prepared[i]);
    ModelSpec spec = cfg.model;
    spec.seed = fold_model_seed(cfg.seed, f);
    TrainConfig tc = cfg.train;
    tc.seed = fold_train_seed(cfg.seed, f);
    const std::string tag = fold_name(f);
    tc.on_epoch = [&](const EpochRecord& r, Model&) {
      logger.line(tag + " epoch " + std::to_string(r.epoch) + " train_loss " + fmt("%.6f", r.train_loss) +
                  " val_loss " + fmt("%.6f", r.val_loss) + " lr " + fmt("%.3g", r.lr));
      return false;
    };
    TrainResult result = train(spec, tr, va, tc);
    const double theta = calibrate_threshold(result.model, va);
    save_checkpoint(options.out / (tag + ".ckpt"), result.model);
    write_text(options.out / (tag + "_history.csv"),
               "# seed " + std::to_string(cfg.seed) + " fold " + std::to_string(f) + "\n" + result.history.to_csv());
    Json j;
    j["seed"] = cfg.seed;
    j["fold"] = f;
    j["model_seed"] = spec.seed;
    j["train_seed"] = tc.seed;
    j["variant"] = to_string(spec.variant);
    j["trainable_parameters"] = result.model.count_trainable();
    j["threshold"] = theta;
    j["threshold_source"] = "validation";
    j["epochs"] = result.history.epochs.size();
    j["best_epoch"] = result.history.best_epoch;
    j["best_val_loss"] = result.history.best_val_loss;
    j["stopping_reason"] = to_string(result.history.stopping_reason);
    Json train_ids = Json::array(), val_ids = Json::array();
    for (const auto* r : tr) train_ids.push_back(r->id);
    for (const auto* r : va) val_ids.push_back(r->id);
    j["train_ids"] = train_ids;
    j["val_ids"] = val_ids;
    write_text(options.out / (tag + ".json"), j.dump(2) + "\n");
    logger.line(tag + " done: best epoch " + std::to_string(result.history.best_epoch) + ", " +
                to_string(result.history.stopping_reason) + ", threshold " + fmt("%.4f", theta));
    summaries[t] = {{"fold", f},
                    {"threshold", theta},
                    {"best_epoch", result.history.best_epoch},
                    {"best_val_loss", result.history.best_val_loss}};
  });
  Json j;
  j["seed"] = cfg.seed;
  j["split_seed"] = fold_split_seed(cfg.seed);
  j["n_recordings"] = cas.size();
  j["n_folds"] = folds.size();
  j["folds"] = summaries;
  write_text(options.out / "train.json", j.dump(2) + "\n");
}

void cmd_predict(const PredictOptions& options, std::ostream& log) {
  const auto folds = list_folds(options.models, ".ckpt", false);
  std::uint64_t seed = 0;
  if (fs::exists(options.models / "train.json")) seed = read_json(options.models / "train.json")["seed"].get<std::uint64_t>();
  const Dataset ds = load_dataset(options.data, {options.resample, kDefaultSampleRate});
  if (ds.empty()) throw DataError("predict: manifest lists no recordings");
  std::vector<PreparedRecording> prepared(ds.size());
  parallel_for(ds.size(), options.jobs, [&](std::size_t i) { prepared[i] = prepare(ds.entries[i], options.features); });
  ensure_dir(options.out);
  if (options.dump_features) {
    ensure_dir(options.out / "features");
    for (const auto& p : prepared) write_feature_csv(options.out / "features" / (p.id + ".csv"), p.features);
  }
  std::vector<double> thetas(folds.size());
  parallel_for(folds.size(), options.jobs, [&](std::size_t t) {
    const std::size_t f = folds[t];
    const std::string tag = fold_name(f);
    Model model = load_checkpoint(options.models / (tag + ".ckpt"));
    double theta = 0.5;
    std::string source = "override";
    if (options.threshold) {
      theta = *options.threshold;
    } else {
      const fs::path meta = options.models / (tag + ".json");
      if (!fs::exists(meta)) throw DataError("predict: missing " + meta.string() + " (pass --threshold)");
      theta = read_json(meta)["threshold"].get<double>();
      source = "validation";
    }
    const fs::path dir = options.out / tag;
    ensure_dir(dir);
    for (const auto& rec : prepared) {
      const ScoredRecording s = score_recording(model, rec, theta, options.merge, !options.raw);
      write_probabilities(dir / (rec.id + ".prob"), s.probabilities, s.grid);
      write_events(dir / (rec.id + ".events"), s.events);
    }
    Json j;
    j["seed"] = seed;
    j["fold"] = f;
    j["threshold"] = theta;
    j["threshold_source"] = source;
    j["refined"] = !options.raw;
    j["n_recordings"] = prepared.size();
    write_text(dir / "predict.json", j.dump(2) + "\n");
    thetas[t] = theta;
  });
  for (std::size_t t = 0; t < folds.size(); ++t) {
    log << "predict: " << fold_name(folds[t]) << " scored " << prepared.size() << " recordings at threshold "
        << fmt("%.4f", thetas[t]) << "\n";
  }
}

void cmd_evaluate(const EvaluateOptions& options, std::ostream& log) {
  const auto folds = list_folds(options.predictions, "", true);
  const Dataset ds = load_dataset(options.data, {options.resample, kDefaultSampleRate});
  if (ds.empty()) throw DataError("evaluate: manifest lists no recordings");
  // Spectrograms for re-detection at the test-selected threshold.
  std::vector<Spectrogram> spectrograms(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    spectrograms[i] = preprocess(ds.entries[i].recording, options.features).spectrogram;
  }
  ensure_dir(options.out);
  std::uint64_t seed = 0;
  std::vector<Json> fold_rows, seg_blocks, evt_blocks, seg_test_blocks, evt_test_blocks;
  for (std::size_t f : folds) {
    const std::string tag = fold_name(f);
    const fs::path dir = options.predictions / tag;
    const Json meta = read_json(dir / "predict.json");
    seed = meta["seed"].get<std::uint64_t>();
    const double theta = meta["threshold"].get<double>();
    const bool refined = meta["refined"].get<bool>();
    std::vector<ScoredRecording> scored;
    for (const auto& e : ds.entries) {
      ScoredRecording s;
      s.id = e.recording.id;
      s.probabilities = read_probabilities(dir / (s.id + ".prob"), s.grid);
      s.events = read_events(dir / (s.id + ".events"));
      s.labels = e.labels;
      scored.push_back(std::move(s));
    }
    const EvaluationReport report = evaluate(scored, theta);
    Json j = Json::parse(report.to_json(seed));
    j["fold"] = f;
    j["threshold_source"] = meta["threshold_source"];
    j["refined"] = refined;

    // Test-selected threshold, reported beside the validation one.
    std::vector<double> pooled;
    std::vector<int> truth;
    for (const auto& s : scored) {
      pooled.insert(pooled.end(), s.probabilities.begin(), s.probabilities.end());
      const auto t = rasterize_labels(s.labels, s.grid);
      truth.insert(truth.end(), t.begin(), t.end());
    }
    const double test_theta = select_threshold(pooled, truth);
    std::vector<ScoredRecording> rescored = scored;
    for (std::size_t i = 0; i < rescored.size(); ++i) {
      redetect(rescored[i], spectrograms[i], test_theta, options.merge, refined);
    }
    const EvaluationReport test_report = evaluate(rescored, test_theta);
    j["test_selected"] = {{"threshold", test_theta},
                          {"segment", segment_summary(test_report)},
                          {"event", event_summary(test_report)}};
    write_text(options.out / ("metrics_" + tag + ".json"), j.dump(2) + "\n");
    if (report.auc) {
      write_text(options.out / ("roc_" + tag + ".csv"),
                 "# seed " + std::to_string(seed) + " fold " + std::to_string(f) + "\n" + format_roc_csv(report.roc));
      if (options.svg) write_text(options.out / ("roc_" + tag + ".svg"), roc_svg(report.roc, tag));
    }
    seg_blocks.push_back(segment_summary(report));
    evt_blocks.push_back(event_summary(report));
    seg_test_blocks.push_back(segment_summary(test_report));
    evt_test_blocks.push_back(event_summary(test_report));
    fold_rows.push_back({{"fold", f},
                         {"threshold", theta},
                         {"segment", seg_blocks.back()},
                         {"event", evt_blocks.back()},
                         {"test_selected_threshold", test_theta}});
    log << "evaluate: " << tag << " segment acc "
        << (report.segment_metrics.acc ? fmt("%.4f", *report.segment_metrics.acc) : std::string("undefined"))
        << ", event F1 " << (report.event_metrics.f1 ? fmt("%.4f", *report.event_metrics.f1) : std::string("undefined"))
        << "\n";
  }
  auto mean_block = [](const std::vector<Json>& blocks, std::initializer_list<const char*> keys) {
    Json m;
    for (const char* k : keys) m[k] = mean_over(blocks, k);
    return m;
  };
  Json summary;
  summary["seed"] = seed;
  summary["n_recordings"] = ds.size();
  summary["n_folds"] = folds.size();
  summary["folds"] = fold_rows;
  summary["mean"] = {{"segment", mean_block(seg_blocks, {"acc", "ppv", "sen", "spe", "f1", "auc"})},
                     {"event", mean_block(evt_blocks, {"ppv", "sen", "f1"})}};
  summary["mean_test_selected"] = {{"segment", mean_block(seg_test_blocks, {"acc", "ppv", "sen", "spe", "f1", "auc"})},
                                   {"event", mean_block(evt_test_blocks, {"ppv", "sen", "f1"})}};
  const auto& ref = kMultiPathReference;
  summary["reference_multipath"] = {
      {"segment",
       {{"acc", ref.seg_acc}, {"ppv", ref.seg_ppv}, {"sen", ref.seg_sen}, {"spe", ref.seg_spe}, {"f1", ref.seg_f1},
        {"auc", ref.seg_auc}}},
      {"event", {{"ppv", ref.evt_ppv}, {"sen", ref.evt_sen}, {"f1", ref.evt_f1}}}};
  write_text(options.out / "metrics.json", summary.dump(2) + "\n");
}

std::vector<LatencyRow> measure_latency(const std::vector<ModelSpec>& specs, std::size_t repetitions,
                                        std::size_t warmup, std::size_t frames, std::uint64_t seed) {
  if (specs.empty()) throw DataError("benchmark: no models");
  if (repetitions == 0) throw DataError("benchmark: repetitions must be positive");
  if (frames < 2) throw DataError("benchmark: frames must be at least 2");
  std::vector<Model> models;
  for (const auto& s : specs) models.emplace_back(s);
  FeatureMatrix input;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto fill = [&](std::size_t rows) {
    Matrix m(rows, frames);
    for (double& v : m.values()) v = n01(rng);
    return m;
  };
  input.spec_block = fill(kFreqBins);
  input.mfcc_block = fill(60);
  input.energy_block = fill(4);
  input.normalized = true;
  input.grid = {frames, 0.016};

  std::vector<LatencyRow> rows(models.size());
  for (std::size_t rep = 0; rep < warmup + repetitions; ++rep) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const Prediction p = predict(models[i], input);
      const auto t1 = std::chrono::steady_clock::now();
      if (p.probabilities.empty()) throw NumericError("benchmark: empty prediction");
      if (rep >= warmup) rows[i].samples_s.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    LatencyRow& r = rows[i];
    r.variant = to_string(specs[i].variant);
    r.parameters = models[i].count_trainable();
    r.median_s = quantile(r.samples_s, 0.5);
    r.q1_s = quantile(r.samples_s, 0.25);
    r.q3_s = quantile(r.samples_s, 0.75);
  }
  for (auto& r : rows) r.ratio = r.median_s / rows.front().median_s;
  return rows;
}

std::string format_latency_csv(const std::vector<LatencyRow>& rows, std::uint64_t seed) {
  std::string out = "# seed " + std::to_string(seed) + "\nvariant,parameters,median_s,q1_s,q3_s,iqr_s,ratio,n\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.4f,%zu\n", r.variant.c_str(), r.parameters,
                  r.median_s, r.q1_s, r.q3_s, r.iqr_s(), r.ratio, r.samples_s.size());
    out += buf;
  }
  return out;
}

std::string format_latency_text(const std::vector<LatencyRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %12s %12s %12s %8s\n", "variant", "parameters", "median_ms", "iqr_ms",
                "ratio");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %12zu %12.2f %12.2f %8.3f\n", r.variant.c_str(), r.parameters,
                  r.median_s * 1e3, r.iqr_s() * 1e3, r.ratio);
    out += buf;
  }
  return out;
}

void cmd_benchmark(const BenchmarkOptions& options, std::ostream& log) {
  const auto rows = measure_latency(options.specs, options.repetitions, options.warmup, options.frames, options.seed);
  const std::string text = format_latency_text(rows);
  log << text;
  if (options.out) {
    ensure_dir(*options.out);
    write_text(*options.out / "latency.csv", format_latency_csv(rows, options.seed));
    write_text(*options.out / "latency.txt", text);
  }
}

void cmd_report(const ReportOptions& options, std::ostream& log) {
  bool did_something = false;
  if (!options.specs.empty()) {
    did_something = true;
    std::string text;
    if (options.json) {
      Json arr = Json::array();
      for (const auto& s : options.specs) {
        Model m(s);
        arr.push_back(Json::parse(m.report(options.frames).to_json()));
      }
      text = arr.dump(2) + "\n";
    } else {
      for (const auto& s : options.specs) {
        Model m(s);
        text += m.report(options.frames).to_text() + "\n";
      }
    }
    if (options.out) {
      write_text(*options.out, text);
    } else {
      log << text;
    }
  }
  if (options.roc_csv) {
    if (!options.svg) throw DataError("report: --roc requires --svg");
    const RocCurve curve = parse_roc_csv(read_text(*options.roc_csv));
    write_text(*options.svg, roc_svg(curve, options.roc_csv->stem().string()));
    did_something = true;
  }
  if (options.wav) {
    if (!options.svg) throw DataError("report: --wav requires --svg");
    if (options.roc_csv) throw DataError("report: --roc and --wav each need their own --svg");
    const Recording rec = read_wav(*options.wav);
    validate(rec);
    const Spectrogram s = preprocess(rec).spectrogram;
    const auto labels = options.labels ? read_labels(*options.labels) : std::vector<LabelEvent>{};
    const auto events = options.events ? read_events(*options.events) : std::vector<DetectedEvent>{};
    write_text(*options.svg, spectrogram_svg(s, labels, events, options.wav->filename().string()));
    did_something = true;
  }
  if (!did_something) throw DataError("report: nothing to report (give --variants, --roc or --wav)");
}

}  // namespace casdet::cli
