#pragma once

#include <optional>
#include <string>
#include <vector>

#include "casdet/features.hpp"
#include "casdet/postprocess.hpp"
#include "casdet/signal_io.hpp"

namespace casdet {

struct Interval {
  double start;
  double end;
};

// Step s is positive when its tile overlaps the union of CAS labels for at
// least half of the tile (boundary inclusive, 1e-9 s slack). Non-CAS labels
// are ignored.
std::vector<int> rasterize_labels(const std::vector<LabelEvent>& labels, const FrameGrid& grid);

struct SegmentConfusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
  SegmentConfusion& operator+=(const SegmentConfusion& o);
  friend bool operator==(const SegmentConfusion&, const SegmentConfusion&) = default;
};

struct EventCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  EventCounts& operator+=(const EventCounts& o);
  friend bool operator==(const EventCounts&, const EventCounts&) = default;
};

// nullopt marks an undefined ratio (zero denominator).
using Metric = std::optional<double>;

struct SegmentMetrics {
  Metric acc, ppv, sen, spe, f1;
};

struct EventMetrics {
  Metric ppv, sen, f1;
};

SegmentConfusion segment_confusion(const std::vector<int>& predicted, const std::vector<int>& truth);
// F1 is 0 (not undefined) when PPV and SEN are both defined and both 0.
SegmentMetrics segment_metrics(const SegmentConfusion& c);

struct RocPoint {
  double threshold;  // +inf for the (0, 0) endpoint
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// Exact ROC over every unique score (inclusive >=), trapezoidal AUC.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& truth);
std::string format_roc_csv(const RocCurve& curve);

double jaccard(const Interval& a, const Interval& b);

struct MatchResult {
  EventCounts counts;
  std::size_t matched_labels = 0;
  std::size_t matched_predictions = 0;
};

// Two-pass JI >= 0.5 matching. tp counts matched pairs once:
// min(matched labels, matched predictions).
MatchResult match_events_detailed(const std::vector<DetectedEvent>& predicted,
                                  const std::vector<LabelEvent>& truth);
EventCounts match_events(const std::vector<DetectedEvent>& predicted,
                         const std::vector<LabelEvent>& truth);
EventMetrics event_metrics(const EventCounts& c);

// Midpoint sweep maximising segment accuracy; ties go to the smallest θ.
double select_threshold(const std::vector<double>& probabilities, const std::vector<int>& truth);
double segment_accuracy(const std::vector<double>& probabilities, const std::vector<int>& truth,
                        double threshold);

// Reference Multi-path CNN-BiGRU test-set figures, for report comparison.
struct ReferenceMetrics {
  double seg_acc, seg_ppv, seg_sen, seg_spe, seg_f1, seg_auc;
  double evt_ppv, evt_sen, evt_f1;
};
inline constexpr ReferenceMetrics kMultiPathReference{0.884, 0.671, 0.505, 0.954, 0.575,
                                                      0.914, 0.498, 0.432, 0.530};

}  // namespace casdet
