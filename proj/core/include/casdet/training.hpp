#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "casdet/architectures.hpp"
#include "casdet/features.hpp"
#include "casdet/signal_io.hpp"

namespace casdet {

// A recording run through preprocessing once, reused across epochs.
struct PreparedRecording {
  std::string id;
  FeatureMatrix features;
  Spectrogram spectrogram;  // pre-normalisation, for energy peaks
  std::vector<LabelEvent> labels;
};

PreparedRecording prepare(const DatasetEntry& entry, const FeatureConfig& config = {});
std::vector<PreparedRecording> prepare_all(const Dataset& dataset, const FeatureConfig& config = {});

// Ground truth at the model's output resolution.
std::vector<int> target_vector(const Model& model, const PreparedRecording& rec);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate used during this epoch
};

enum class StopReason { kEarlyStop, kMaxEpochs, kCallback };
std::string to_string(StopReason r);

struct TrainConfig {
  double lr0 = 1e-4;
  double decay_factor = 0.2;
  std::size_t plateau_patience = 10;
  std::size_t early_stop_patience = 50;
  std::size_t n_folds = 5;
  std::size_t batch_size = 16;
  // Gradients of a batch are accumulated over chunks of this many recordings;
  // batch-norm statistics are per chunk.
  std::size_t micro_batch = 1;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;
  // Called after every epoch with the current (not best) weights; returning
  // true stops training.
  std::function<bool(const EpochRecord&, Model&)> on_epoch;

  void validate() const;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  StopReason stopping_reason = StopReason::kMaxEpochs;

  std::string to_csv() const;
};

// Learning-rate plateau decay and early stopping on validation loss. "No
// improvement" means no new strict minimum; a decay does not reset the
// early-stop counter.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(const TrainConfig& config);

  struct Decision {
    bool new_best = false;
    bool decayed = false;
    bool stop = false;
  };
  Decision observe(double val_loss);

  double lr() const;
  std::size_t decays() const { return decays_; }
  double best() const { return best_; }

 private:
  double lr0_, factor_;
  std::size_t plateau_patience_, stop_patience_;
  double best_;
  std::size_t since_best_ = 0, since_decay_ = 0, decays_ = 0;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Seeded shuffle, then round-robin assignment: validation parts partition
// [0, n) and differ in size by at most one.
std::vector<Fold> kfold_indices(std::size_t n, std::size_t n_folds, std::uint64_t seed);
std::vector<std::pair<Dataset, Dataset>> kfold_split(const Dataset& dataset, std::size_t n_folds,
                                                     std::uint64_t seed);

// Mean BCE of the model over a set, infer mode.
double evaluate_loss(Model& model, const std::vector<const PreparedRecording*>& set);

struct TrainResult {
  Model model;  // best-validation snapshot
  History history;
};

TrainResult train(const ModelSpec& spec, const std::vector<const PreparedRecording*>& train_set,
                  const std::vector<const PreparedRecording*>& val_set, const TrainConfig& config);
TrainResult train(const ModelSpec& spec, const std::pair<Dataset, Dataset>& fold,
                  const TrainConfig& config, const FeatureConfig& features = {});

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng);

}  // namespace casdet
