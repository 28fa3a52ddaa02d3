#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "casdet/architectures.hpp"
#include "casdet/config.hpp"

namespace casdet::cli {

namespace fs = std::filesystem;

// Exit statuses shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Component seeds of a run, all derived from the root seed.
std::uint64_t fold_split_seed(std::uint64_t root);
std::uint64_t fold_model_seed(std::uint64_t root, std::size_t fold);
std::uint64_t fold_train_seed(std::uint64_t root, std::size_t fold);

struct SynthOptions {
  fs::path out;
  std::size_t n_recordings = 200;
  std::uint64_t seed = 1;
  bool no_events = false;
  double snr_db = 10.0;
};
void cmd_synth(const SynthOptions& options, std::ostream& log);

struct TrainOptions {
  fs::path data;  // manifest
  fs::path out;
  RunConfig config;
  std::optional<std::size_t> only_fold;
  bool resample = false;
  std::size_t jobs = 1;
  bool quiet = false;
};
void cmd_train(const TrainOptions& options, std::ostream& log);

struct PredictOptions {
  fs::path data;
  fs::path models;  // directory written by `train`
  fs::path out;
  std::optional<double> threshold;  // overrides the validation threshold
  bool raw = false;                 // skip merge and burst removal
  bool dump_features = false;
  bool resample = false;
  std::size_t jobs = 1;
  MergeConfig merge;
  FeatureConfig features;
};
void cmd_predict(const PredictOptions& options, std::ostream& log);

struct EvaluateOptions {
  fs::path data;
  fs::path predictions;  // directory written by `predict`
  fs::path out;
  bool resample = false;
  bool svg = false;
  MergeConfig merge;
  FeatureConfig features;
};
void cmd_evaluate(const EvaluateOptions& options, std::ostream& log);

struct LatencyRow {
  std::string variant;
  std::size_t parameters = 0;
  double median_s = 0.0;
  double q1_s = 0.0;
  double q3_s = 0.0;
  double ratio = 0.0;  // median over the first row's median
  std::vector<double> samples_s;

  double iqr_s() const { return q3_s - q1_s; }
};

// Median single-recording inference time of each model on a [1, 193, frames]
// input. Repetitions are interleaved across models so drift affects all
// alike; warm-up runs are discarded.
std::vector<LatencyRow> measure_latency(const std::vector<ModelSpec>& specs, std::size_t repetitions,
                                        std::size_t warmup, std::size_t frames, std::uint64_t seed);
std::string format_latency_csv(const std::vector<LatencyRow>& rows, std::uint64_t seed);
std::string format_latency_text(const std::vector<LatencyRow>& rows);

struct BenchmarkOptions {
  std::vector<ModelSpec> specs;
  std::size_t repetitions = 30;
  std::size_t warmup = 2;
  std::size_t frames = 938;
  std::uint64_t seed = 1;
  std::optional<fs::path> out;
};
void cmd_benchmark(const BenchmarkOptions& options, std::ostream& log);

struct ReportOptions {
  std::vector<ModelSpec> specs;
  std::size_t frames = 938;
  bool json = false;
  std::optional<fs::path> out;
  // ROC plot from an `evaluate` ROC CSV.
  std::optional<fs::path> roc_csv;
  // Spectrogram plot of a recording with event overlays.
  std::optional<fs::path> wav;
  std::optional<fs::path> events;
  std::optional<fs::path> labels;
  std::optional<fs::path> svg;
};
void cmd_report(const ReportOptions& options, std::ostream& log);

// Parses argv and dispatches; returns one of the exit statuses above.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace casdet::cli
