#include "casdet/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "casdet/error.hpp"
#include "json.hpp"

namespace casdet {

ScoredRecording score_recording(Model& model, const PreparedRecording& rec, double threshold,
                                const MergeConfig& merge, bool refine) {
  const Prediction p = predict(model, rec.features);
  ScoredRecording s{rec.id, p.probabilities, p.grid, {}, rec.labels};
  redetect(s, rec.spectrogram, threshold, merge, refine);
  return s;
}

void redetect(ScoredRecording& scored, const Spectrogram& spectrogram, double threshold,
              const MergeConfig& merge, bool refine) {
  if (refine) {
    scored.events = postprocess(scored.probabilities, scored.grid, threshold, spectrogram, merge);
  } else {
    scored.events = segments_to_events(threshold_segments(scored.probabilities, threshold), scored.grid);
  }
}

double calibrate_threshold(Model& model, const std::vector<const PreparedRecording*>& set) {
  std::vector<double> probs;
  std::vector<int> truth;
  for (const auto* r : set) {
    const Prediction p = predict(model, r->features);
    const auto t = rasterize_labels(r->labels, p.grid);
    probs.insert(probs.end(), p.probabilities.begin(), p.probabilities.end());
    truth.insert(truth.end(), t.begin(), t.end());
  }
  return select_threshold(probs, truth);
}

EvaluationReport evaluate(const std::vector<ScoredRecording>& scored, double threshold) {
  if (scored.empty()) throw DataError("evaluate: no recordings");
  EvaluationReport r;
  r.n_recordings = scored.size();
  r.threshold = threshold;
  std::vector<double> pooled;
  std::vector<int> truth_pooled;
  for (const auto& s : scored) {
    const auto truth = rasterize_labels(s.labels, s.grid);
    r.segments += segment_confusion(threshold_segments(s.probabilities, threshold), truth);
    pooled.insert(pooled.end(), s.probabilities.begin(), s.probabilities.end());
    truth_pooled.insert(truth_pooled.end(), truth.begin(), truth.end());
    std::vector<LabelEvent> cas;
    for (const auto& l : s.labels) {
      if (is_cas(l.kind)) cas.push_back(l);
    }
    r.events += match_events(s.events, cas);
  }
  r.segment_metrics = segment_metrics(r.segments);
  r.event_metrics = event_metrics(r.events);
  const bool both = r.segments.tp + r.segments.fn > 0 && r.segments.tn + r.segments.fp > 0;
  if (both) {
    r.roc = roc_auc(pooled, truth_pooled);
    r.auc = r.roc.auc;
  }
  return r;
}

std::string EvaluationReport::to_json(std::uint64_t seed) const {
  using J = nlohmann::ordered_json;
  auto metric = [](const Metric& m) { return m ? J(*m) : J(nullptr); };
  J j;
  j["seed"] = seed;
  j["n_recordings"] = n_recordings;
  j["threshold"] = threshold;
  j["segment"] = {{"tp", segments.tp},
                  {"tn", segments.tn},
                  {"fp", segments.fp},
                  {"fn", segments.fn},
                  {"acc", metric(segment_metrics.acc)},
                  {"ppv", metric(segment_metrics.ppv)},
                  {"sen", metric(segment_metrics.sen)},
                  {"spe", metric(segment_metrics.spe)},
                  {"f1", metric(segment_metrics.f1)},
                  {"auc", metric(auc)}};
  j["event"] = {{"tp", events.tp},
                {"fp", events.fp},
                {"fn", events.fn},
                {"ppv", metric(event_metrics.ppv)},
                {"sen", metric(event_metrics.sen)},
                {"f1", metric(event_metrics.f1)}};
  const auto& ref = kMultiPathReference;
  j["reference_multipath"] = {{"segment", {{"acc", ref.seg_acc},
                                           {"ppv", ref.seg_ppv},
                                           {"sen", ref.seg_sen},
                                           {"spe", ref.seg_spe},
                                           {"f1", ref.seg_f1},
                                           {"auc", ref.seg_auc}}},
                              {"event", {{"ppv", ref.evt_ppv}, {"sen", ref.evt_sen}, {"f1", ref.evt_f1}}}};
  return j.dump(2) + "\n";
}

void write_probabilities(const std::filesystem::path& path, const std::vector<double>& p,
                         const FrameGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", grid.hop_s);
  out << "# casdet-probabilities,1," << p.size() << ',' << buf << '\n';
  for (double v : p) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out << buf;
  }
}

std::vector<double> read_probabilities(const std::filesystem::path& path, FrameGrid& grid) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string header;
  std::getline(in, header);
  std::size_t k = 0;
  double hop = 0.0;
  if (std::sscanf(header.c_str(), "# casdet-probabilities,1,%zu,%lf", &k, &hop) != 2 || !(hop > 0.0)) {
    throw DataError(path.string() + ": bad probability header");
  }
  std::vector<double> p;
  p.reserve(k);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0) throw DataError(path.string() + ": line " + std::to_string(p.size() + 2) + ": not a number");
    p.push_back(v);
  }
  if (p.size() != k) throw DataError(path.string() + ": expected " + std::to_string(k) + " values");
  grid = {k, hop};
  return p;
}

}  // namespace casdet
