#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "casdet/features.hpp"

namespace casdet {

struct DetectedEvent {
  double t_start = 0.0;
  double t_end = 0.0;
  double peak_freq = 0.0;  // Hz

  double duration() const { return t_end - t_start; }
  friend bool operator==(const DetectedEvent&, const DetectedEvent&) = default;
};

struct MergeConfig {
  double max_gap_s = 0.5;          // T
  double max_peak_diff_hz = 25.0;  // P
  double min_duration_s = 0.05;
};

// 1 where p >= threshold.
std::vector<int> threshold_segments(const std::vector<double>& probabilities, double threshold);

// Maximal runs of ones as [first * hop, (last + 1) * hop); peak_freq is 0.
std::vector<DetectedEvent> segments_to_events(const std::vector<int>& binary, const FrameGrid& grid);

// Spectrogram frames whose tiles intersect [t_start, t_end).
struct FrameRange {
  std::size_t begin;
  std::size_t end;
};
FrameRange frames_for_interval(const Spectrogram& spectrogram, double t_start, double t_end);

// Centre frequency of the argmax bin of the power spectrum averaged over the
// event's frames; ties resolve to the lowest bin.
double event_peak_frequency(const DetectedEvent& event, const Spectrogram& spectrogram);

// Neighbouring events i, j merge when (start_j - end_i) < T and
// |p_j - p_i| < P; the merged event's peak is recomputed over its span and
// compared again with both neighbours until no pair merges.
std::vector<DetectedEvent> merge_events(const std::vector<DetectedEvent>& events,
                                        const Spectrogram& spectrogram,
                                        const MergeConfig& config = {});

// Drops events with duration < min_duration_s.
std::vector<DetectedEvent> remove_bursts(const std::vector<DetectedEvent>& events,
                                         const MergeConfig& config = {});

// threshold -> segments -> peaks -> merge -> burst removal.
std::vector<DetectedEvent> postprocess(const std::vector<double>& probabilities,
                                       const FrameGrid& output_grid, double threshold,
                                       const Spectrogram& spectrogram,
                                       const MergeConfig& config = {});

// `<t_start> <t_end> <peak_freq_hz>` per line, seconds with 3 decimals.
std::string format_events(const std::vector<DetectedEvent>& events);
std::vector<DetectedEvent> parse_events(const std::string& text);
void write_events(const std::filesystem::path& path, const std::vector<DetectedEvent>& events);
std::vector<DetectedEvent> read_events(const std::filesystem::path& path);

}  // namespace casdet
