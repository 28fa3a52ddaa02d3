#include "casdet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "casdet/error.hpp"

namespace casdet {
namespace {

constexpr double kTimeSlack = 1e-9;
constexpr double kMatchJaccard = 0.5;
constexpr double kJaccardSlack = 1e-12;

Metric ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

// Harmonic mean of PPV and SEN from the counts, so 2tp/(2tp+fp+fn) holds exactly.
Metric f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp + fp == 0 || tp + fn == 0) return std::nullopt;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::vector<Interval> cas_union(const std::vector<LabelEvent>& labels) {
  std::vector<Interval> iv;
  for (const auto& l : labels) {
    if (is_cas(l.kind)) iv.push_back({l.t_start, l.t_end});
  }
  std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
  std::vector<Interval> merged;
  for (const auto& i : iv) {
    if (!merged.empty() && i.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, i.end);
    } else {
      merged.push_back(i);
    }
  }
  return merged;
}

template <class T, class F>
void require_sorted(const std::vector<T>& v, F start, const char* what) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (start(v[i]) < start(v[i - 1])) {
      throw DataError(std::string("match_events: ") + what + " not sorted by start time");
    }
  }
}

}  // namespace

SegmentConfusion& SegmentConfusion::operator+=(const SegmentConfusion& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

EventCounts& EventCounts::operator+=(const EventCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

std::vector<int> rasterize_labels(const std::vector<LabelEvent>& labels, const FrameGrid& grid) {
  for (const auto& l : labels) {
    if (l.t_start < 0.0 || l.t_end > grid.span_s() + kTimeSlack) {
      throw DataError("label [" + std::to_string(l.t_start) + ", " + std::to_string(l.t_end) +
                      ") outside the recording span of " + std::to_string(grid.span_s()) + " s");
    }
  }
  const auto merged = cas_union(labels);
  std::vector<int> out(grid.n_frames, 0);
  const double half = 0.5 * grid.hop_s;
  std::size_t first = 0;
  for (std::size_t s = 0; s < grid.n_frames; ++s) {
    const double a = grid.frame_start(s), b = grid.frame_end(s);
    while (first < merged.size() && merged[first].end <= a) ++first;
    double overlap = 0.0;
    for (std::size_t i = first; i < merged.size() && merged[i].start < b; ++i) {
      overlap += std::max(0.0, std::min(b, merged[i].end) - std::max(a, merged[i].start));
    }
    out[s] = overlap >= half - kTimeSlack ? 1 : 0;
  }
  return out;
}

SegmentConfusion segment_confusion(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("segment_confusion: length " + std::to_string(predicted.size()) + " vs " +
                     std::to_string(truth.size()));
  }
  SegmentConfusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

SegmentMetrics segment_metrics(const SegmentConfusion& c) {
  SegmentMetrics m;
  m.acc = ratio(c.tp + c.tn, c.total());
  m.ppv = ratio(c.tp, c.tp + c.fp);
  m.sen = ratio(c.tp, c.tp + c.fn);
  m.spe = ratio(c.tn, c.tn + c.fp);
  m.f1 = f1_score(c.tp, c.fp, c.fn);
  return m;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
  if (scores.size() != truth.size()) throw ShapeError("roc_auc: scores and truth lengths differ");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 0 && truth[i] != 1) throw DataError("roc_auc: truth must be 0 or 1");
    pos += static_cast<std::size_t>(truth[i]);
  }
  const std::size_t neg = truth.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc: truth holds a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (truth[order[i]]) ++tp;
      else ++fp;
      ++i;
    }
    const RocPoint prev = curve.points.back();
    const RocPoint p{s, static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos)};
    curve.auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
    curve.points.push_back(p);
  }
  return curve;
}

std::string format_roc_csv(const RocCurve& curve) {
  std::string out = "threshold,fpr,tpr\n";
  char buf[128];
  for (const auto& p : curve.points) {
    if (std::isinf(p.threshold)) {
      std::snprintf(buf, sizeof buf, "inf,%.9f,%.9f\n", p.fpr, p.tpr);
    } else {
      std::snprintf(buf, sizeof buf, "%.9f,%.9f,%.9f\n", p.threshold, p.fpr, p.tpr);
    }
    out += buf;
  }
  return out;
}

double jaccard(const Interval& a, const Interval& b) {
  const double la = a.end - a.start, lb = b.end - b.start;
  if (!(la > 0.0) || !(lb > 0.0)) return 0.0;
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = la + lb - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

MatchResult match_events_detailed(const std::vector<DetectedEvent>& predicted,
                                  const std::vector<LabelEvent>& truth) {
  require_sorted(predicted, [](const DetectedEvent& e) { return e.t_start; }, "predictions");
  require_sorted(truth, [](const LabelEvent& e) { return e.t_start; }, "labels");
  auto matches = [](const LabelEvent& l, const DetectedEvent& p) {
    return jaccard({l.t_start, l.t_end}, {p.t_start, p.t_end}) >= kMatchJaccard - kJaccardSlack;
  };
  MatchResult r;
  for (const auto& l : truth) {
    if (std::any_of(predicted.begin(), predicted.end(),
                    [&](const DetectedEvent& p) { return matches(l, p); })) {
      ++r.matched_labels;
    }
  }
  for (const auto& p : predicted) {
    if (std::any_of(truth.begin(), truth.end(), [&](const LabelEvent& l) { return matches(l, p); })) {
      ++r.matched_predictions;
    }
  }
  r.counts.tp = std::min(r.matched_labels, r.matched_predictions);
  r.counts.fn = truth.size() - r.matched_labels;
  r.counts.fp = predicted.size() - r.matched_predictions;
  return r;
}

EventCounts match_events(const std::vector<DetectedEvent>& predicted,
                         const std::vector<LabelEvent>& truth) {
  return match_events_detailed(predicted, truth).counts;
}

EventMetrics event_metrics(const EventCounts& c) {
  EventMetrics m;
  m.ppv = ratio(c.tp, c.tp + c.fp);
  m.sen = ratio(c.tp, c.tp + c.fn);
  m.f1 = f1_score(c.tp, c.fp, c.fn);
  return m;
}

double segment_accuracy(const std::vector<double>& probabilities, const std::vector<int>& truth,
                        double threshold) {
  if (probabilities.size() != truth.size() || probabilities.empty()) {
    throw DataError("segment_accuracy: inputs must be non-empty and of equal length");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    correct += static_cast<std::size_t>((probabilities[i] >= threshold ? 1 : 0) == (truth[i] ? 1 : 0));
  }
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double select_threshold(const std::vector<double>& probabilities, const std::vector<int>& truth) {
  if (probabilities.empty()) throw DataError("select_threshold: empty inputs");
  if (probabilities.size() != truth.size()) throw ShapeError("select_threshold: length mismatch");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 0 && truth[i] != 1) throw DataError("select_threshold: truth must be 0 or 1");
    (truth[i] ? pos : neg).push_back(probabilities[i]);
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> unique = probabilities;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  std::vector<double> candidates{0.0};
  for (std::size_t i = 0; i + 1 < unique.size(); ++i) {
    candidates.push_back(0.5 * (unique[i] + unique[i + 1]));
  }
  candidates.push_back(1.0);
  std::sort(candidates.begin(), candidates.end());

  double best_theta = candidates.front();
  std::size_t best_correct = 0;
  bool first = true;
  for (double c : candidates) {
    const auto tp = static_cast<std::size_t>(pos.end() - std::lower_bound(pos.begin(), pos.end(), c));
    const auto tn = static_cast<std::size_t>(std::lower_bound(neg.begin(), neg.end(), c) - neg.begin());
    if (first || tp + tn > best_correct) {
      best_correct = tp + tn;
      best_theta = c;
      first = false;
    }
  }
  return best_theta;
}

}  // namespace casdet
