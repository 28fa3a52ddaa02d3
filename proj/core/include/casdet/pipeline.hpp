#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "casdet/architectures.hpp"
#include "casdet/evaluation.hpp"
#include "casdet/postprocess.hpp"
#include "casdet/training.hpp"

namespace casdet {

// One recording after inference: output-resolution probabilities, the
// detected events and the reference labels.
struct ScoredRecording {
  std::string id;
  std::vector<double> probabilities;
  FrameGrid grid;
  std::vector<DetectedEvent> events;
  std::vector<LabelEvent> labels;
};

// With `refine` the events pass through merge and burst removal; without it
// they are the raw thresholded runs.
ScoredRecording score_recording(Model& model, const PreparedRecording& rec, double threshold,
                                const MergeConfig& merge, bool refine = true);

// Re-derives events from stored probabilities at a new threshold.
void redetect(ScoredRecording& scored, const Spectrogram& spectrogram, double threshold,
              const MergeConfig& merge, bool refine = true);

// θ maximising pooled segment accuracy over a set.
double calibrate_threshold(Model& model, const std::vector<const PreparedRecording*>& set);

struct EvaluationReport {
  std::size_t n_recordings = 0;
  double threshold = 0.5;
  SegmentConfusion segments;
  SegmentMetrics segment_metrics;
  std::optional<double> auc;  // undefined for single-class truth
  RocCurve roc;
  EventCounts events;
  EventMetrics event_metrics;

  std::string to_json(std::uint64_t seed) const;
};

// Segments and ROC are pooled over every step of every recording; event
// counts are summed per recording.
EvaluationReport evaluate(const std::vector<ScoredRecording>& scored, double threshold);

// `# casdet-probabilities,1,<k>,<hop_s>` then one value per line.
void write_probabilities(const std::filesystem::path& path, const std::vector<double>& p,
                         const FrameGrid& grid);
std::vector<double> read_probabilities(const std::filesystem::path& path, FrameGrid& grid);

}  // namespace casdet
