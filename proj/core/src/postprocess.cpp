#include "casdet/postprocess.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "casdet/error.hpp"

namespace casdet {
namespace {

// Slack for comparing times that are sums of frame hops.
constexpr double kTimeSlack = 1e-9;

bool mergeable(const DetectedEvent& a, const DetectedEvent& b, const MergeConfig& config) {
  return (b.t_start - a.t_end) < config.max_gap_s &&
         std::abs(b.peak_freq - a.peak_freq) < config.max_peak_diff_hz;
}

}  // namespace

std::vector<int> threshold_segments(const std::vector<double>& probabilities, double threshold) {
  std::vector<int> out(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) out[i] = probabilities[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<DetectedEvent> segments_to_events(const std::vector<int>& binary, const FrameGrid& grid) {
  if (binary.size() != grid.n_frames) {
    throw ShapeError("segments_to_events: " + std::to_string(binary.size()) +
                     " segments for a grid of " + std::to_string(grid.n_frames) + " steps");
  }
  std::vector<DetectedEvent> events;
  std::size_t i = 0;
  while (i < binary.size()) {
    if (binary[i] == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < binary.size() && binary[j] != 0) ++j;
    events.push_back({grid.frame_start(i), grid.frame_start(j), 0.0});
    i = j;
  }
  return events;
}

FrameRange frames_for_interval(const Spectrogram& spectrogram, double t_start, double t_end) {
  const double hop = spectrogram.grid.hop_s;
  const std::size_t n = spectrogram.n_frames();
  if (!(t_end > t_start) || t_start < -kTimeSlack) {
    throw DataError("event [" + std::to_string(t_start) + ", " + std::to_string(t_end) +
                    ") is empty or negative");
  }
  const auto begin = static_cast<std::size_t>(std::floor(std::max(0.0, t_start) / hop + kTimeSlack));
  const auto end = static_cast<std::size_t>(std::ceil(t_end / hop - kTimeSlack));
  if (end > n || begin >= end) {
    throw DataError("event [" + std::to_string(t_start) + ", " + std::to_string(t_end) +
                    ") outside the spectrogram span of " + std::to_string(spectrogram.grid.span_s()) + " s");
  }
  return {begin, end};
}

double event_peak_frequency(const DetectedEvent& event, const Spectrogram& spectrogram) {
  const FrameRange r = frames_for_interval(spectrogram, event.t_start, event.t_end);
  const Matrix& mag = spectrogram.magnitudes;
  std::size_t best_bin = 0;
  double best = -1.0;
  for (std::size_t k = 0; k < mag.rows(); ++k) {
    double acc = 0.0;
    // Summed, not averaged: a division could round near-equal bins into a tie.
    for (std::size_t m = r.begin; m < r.end; ++m) acc += mag(k, m) * mag(k, m);
    if (acc > best) {
      best = acc;
      best_bin = k;
    }
  }
  return spectrogram.bin_frequency(best_bin);
}

std::vector<DetectedEvent> merge_events(const std::vector<DetectedEvent>& events,
                                        const Spectrogram& spectrogram, const MergeConfig& config) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].t_start < events[i - 1].t_start) {
      throw DataError("merge_events: events not sorted by start time");
    }
    if (events[i].t_start < events[i - 1].t_end - kTimeSlack) {
      throw DataError("merge_events: events " + std::to_string(i - 1) + " and " +
                      std::to_string(i) + " overlap");
    }
  }
  // Every adjacent pair of `out` is non-mergeable, so after a merge only the
  // new event's left neighbour needs rechecking; this equals restarting the
  // scan from the beginning after each merge.
  std::vector<DetectedEvent> out;
  out.reserve(events.size());
  for (const DetectedEvent& e : events) {
    DetectedEvent next = e;
    next.peak_freq = event_peak_frequency(next, spectrogram);
    out.push_back(next);
    while (out.size() >= 2 && mergeable(out[out.size() - 2], out.back(), config)) {
      DetectedEvent merged{out[out.size() - 2].t_start, out.back().t_end, 0.0};
      merged.peak_freq = event_peak_frequency(merged, spectrogram);
      out.pop_back();
      out.back() = merged;
    }
  }
  return out;
}

std::vector<DetectedEvent> remove_bursts(const std::vector<DetectedEvent>& events,
                                         const MergeConfig& config) {
  std::vector<DetectedEvent> out;
  for (const auto& e : events) {
    if (e.duration() >= config.min_duration_s - kTimeSlack) out.push_back(e);
  }
  return out;
}

std::vector<DetectedEvent> postprocess(const std::vector<double>& probabilities,
                                       const FrameGrid& output_grid, double threshold,
                                       const Spectrogram& spectrogram, const MergeConfig& config) {
  const auto events = segments_to_events(threshold_segments(probabilities, threshold), output_grid);
  return remove_bursts(merge_events(events, spectrogram, config), config);
}

std::string format_events(const std::vector<DetectedEvent>& events) {
  std::string out;
  char buf[128];
  for (const auto& e : events) {
    std::snprintf(buf, sizeof buf, "%.3f %.3f %.3f\n", e.t_start, e.t_end, e.peak_freq);
    out += buf;
  }
  return out;
}

std::vector<DetectedEvent> parse_events(const std::string& text) {
  std::vector<DetectedEvent> events;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    DetectedEvent e;
    std::string extra;
    if (!(ls >> e.t_start >> e.t_end >> e.peak_freq) || (ls >> extra)) {
      throw DataError("event file line " + std::to_string(line_no) +
                      ": expected `<t_start> <t_end> <peak_freq_hz>`");
    }
    if (!(e.t_end > e.t_start)) {
      throw DataError("event file line " + std::to_string(line_no) + ": t_end ≤ t_start");
    }
    events.push_back(e);
  }
  return events;
}

void write_events(const std::filesystem::path& path, const std::vector<DetectedEvent>& events) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path.string());
  f << format_events(events);
}

std::vector<DetectedEvent> read_events(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_events(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace casdet
