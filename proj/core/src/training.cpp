#include "casdet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "casdet/error.hpp"
#include "casdet/evaluation.hpp"
#include "casdet/optim.hpp"

namespace casdet {
namespace {

Tensor target_batch(const Model& model, const std::vector<const PreparedRecording*>& recs) {
  const std::size_t k = model.output_length(recs.front()->features.n_frames());
  Tensor t({recs.size(), k});
  for (std::size_t s = 0; s < recs.size(); ++s) {
    const auto v = target_vector(model, *recs[s]);
    for (std::size_t i = 0; i < k; ++i) t[s * k + i] = static_cast<double>(v[i]);
  }
  return t;
}

Tensor feature_batch(const std::vector<const PreparedRecording*>& recs) {
  std::vector<const FeatureMatrix*> f;
  for (const auto* r : recs) f.push_back(&r->features);
  return to_batch(f);
}

void require_cas(const std::vector<const PreparedRecording*>& set, const char* what) {
  for (const auto* r : set) {
    if (std::none_of(r->labels.begin(), r->labels.end(),
                     [](const LabelEvent& l) { return is_cas(l.kind); })) {
      throw DataError(std::string(what) + " recording " + r->id +
                      " has no CAS label; run filter_cas_dataset first");
    }
  }
}

}  // namespace

PreparedRecording prepare(const DatasetEntry& entry, const FeatureConfig& config) {
  PreprocessedRecording p = preprocess(entry.recording, config);
  return {entry.recording.id, std::move(p.features), std::move(p.spectrogram), entry.labels};
}

std::vector<PreparedRecording> prepare_all(const Dataset& dataset, const FeatureConfig& config) {
  std::vector<PreparedRecording> out;
  out.reserve(dataset.size());
  for (const auto& e : dataset.entries) out.push_back(prepare(e, config));
  return out;
}

std::vector<int> target_vector(const Model& model, const PreparedRecording& rec) {
  return rasterize_labels(rec.labels, model.output_grid(rec.features.grid));
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kEarlyStop: return "early_stop";
    case StopReason::kMaxEpochs: return "max_epochs";
    case StopReason::kCallback: return "callback";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw DataError("train config: lr0 must be positive");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw DataError("train config: decay_factor must be in (0, 1)");
  if (!(plateau_patience < early_stop_patience)) {
    throw DataError("train config: plateau_patience must be below early_stop_patience");
  }
  if (batch_size == 0 || micro_batch == 0) throw DataError("train config: batch sizes must be positive");
  if (n_folds < 2) throw DataError("train config: n_folds must be at least 2");
}

std::string History::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", e.epoch, e.train_loss, e.val_loss, e.lr);
    out += buf;
  }
  return out;
}

PlateauSchedule::PlateauSchedule(const TrainConfig& config)
    : lr0_(config.lr0),
      factor_(config.decay_factor),
      plateau_patience_(config.plateau_patience),
      stop_patience_(config.early_stop_patience),
      best_(std::numeric_limits<double>::infinity()) {}

double PlateauSchedule::lr() const {
  return lr0_ * std::pow(factor_, static_cast<double>(decays_));
}

PlateauSchedule::Decision PlateauSchedule::observe(double val_loss) {
  Decision d;
  if (val_loss < best_) {
    best_ = val_loss;
    since_best_ = 0;
    since_decay_ = 0;
    d.new_best = true;
    return d;
  }
  ++since_best_;
  ++since_decay_;
  if (since_decay_ >= plateau_patience_) {
    ++decays_;
    since_decay_ = 0;
    d.decayed = true;
  }
  d.stop = since_best_ >= stop_patience_;
  return d;
}

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<Fold> kfold_indices(std::size_t n, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds == 0) throw DataError("kfold: n_folds must be positive");
  if (n < n_folds) {
    throw DataError("kfold: dataset of " + std::to_string(n) + " entries smaller than " +
                    std::to_string(n_folds) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  shuffle_indices(order, rng);
  std::vector<Fold> folds(n_folds);
  for (std::size_t i = 0; i < n; ++i) folds[i % n_folds].val.push_back(order[i]);
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::sort(folds[f].val.begin(), folds[f].val.end());
    for (std::size_t g = 0; g < n_folds; ++g) {
      if (g == f) continue;
      for (std::size_t i = g; i < n; i += n_folds) folds[f].train.push_back(order[i]);
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

std::vector<std::pair<Dataset, Dataset>> kfold_split(const Dataset& dataset, std::size_t n_folds,
                                                     std::uint64_t seed) {
  std::vector<std::pair<Dataset, Dataset>> out;
  for (const Fold& f : kfold_indices(dataset.size(), n_folds, seed)) {
    Dataset tr, va;
    tr.split = va.split = dataset.split;
    for (auto i : f.train) tr.entries.push_back(dataset.entries[i]);
    for (auto i : f.val) va.entries.push_back(dataset.entries[i]);
    out.emplace_back(std::move(tr), std::move(va));
  }
  return out;
}

double evaluate_loss(Model& model, const std::vector<const PreparedRecording*>& set) {
  if (set.empty()) throw DataError("evaluate_loss: empty set");
  double total = 0.0;
  for (const auto* r : set) {
    const std::vector<const PreparedRecording*> one{r};
    const Tensor probs = model.forward(feature_batch(one), Mode::kInfer);
    total += bce_loss(probs, target_batch(model, one)).loss;
  }
  return total / static_cast<double>(set.size());
}

TrainResult train(const ModelSpec& spec, const std::vector<const PreparedRecording*>& train_set,
                  const std::vector<const PreparedRecording*>& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw DataError("train: empty training fold");
  if (val_set.empty()) throw DataError("train: empty validation fold");
  require_cas(train_set, "training");
  require_cas(val_set, "validation");

  Model model(spec);
  auto params = model.parameters();
  AdamState adam = make_adam_state(params, {config.lr0});
  PlateauSchedule schedule(config);
  std::mt19937_64 rng(config.seed);
  History history;
  std::vector<Tensor> best = model.snapshot();
  history.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const double n_total = static_cast<double>(train_set.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = schedule.lr();
    adam.config.lr = lr;
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size, ++batch_index) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      const double batch_n = static_cast<double>(b1 - b0);
      model.zero_grad();
      for (std::size_t m0 = b0; m0 < b1; m0 += config.micro_batch) {
        const std::size_t m1 = std::min(b1, m0 + config.micro_batch);
        std::vector<const PreparedRecording*> chunk;
        for (std::size_t i = m0; i < m1; ++i) chunk.push_back(train_set[order[i]]);
        const Tensor probs = model.forward(feature_batch(chunk), Mode::kTrain);
        LossResult lr_result = bce_loss(probs, target_batch(model, chunk));
        if (!std::isfinite(lr_result.loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
        }
        const double share = static_cast<double>(m1 - m0) / batch_n;
        for (double& g : lr_result.gradient.values()) g *= share;
        model.backward(lr_result.gradient);
        loss_sum += lr_result.loss * static_cast<double>(m1 - m0);
      }
      try {
        adam_step(params, adam);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
    }
    EpochRecord rec{epoch, loss_sum / n_total, evaluate_loss(model, val_set), lr};
    if (!std::isfinite(rec.val_loss)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(rec);
    const auto decision = schedule.observe(rec.val_loss);
    if (decision.new_best) {
      history.best_epoch = epoch;
      history.best_val_loss = rec.val_loss;
      best = model.snapshot();
    }
    if (decision.stop) {
      history.stopping_reason = StopReason::kEarlyStop;
      break;
    }
    if (config.on_epoch && config.on_epoch(rec, model)) {
      history.stopping_reason = StopReason::kCallback;
      break;
    }
  }
  model.restore(best);
  return {std::move(model), std::move(history)};
}

TrainResult train(const ModelSpec& spec, const std::pair<Dataset, Dataset>& fold,
                  const TrainConfig& config, const FeatureConfig& features) {
  const auto tr = prepare_all(fold.first, features);
  const auto va = prepare_all(fold.second, features);
  std::vector<const PreparedRecording*> tp, vp;
  for (const auto& r : tr) tp.push_back(&r);
  for (const auto& r : va) vp.push_back(&r);
  return train(spec, tp, vp, config);
}

}  // namespace casdet
