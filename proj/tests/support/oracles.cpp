#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace casdet::testing {

std::vector<double> direct_dft_magnitudes(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += frame[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = std::abs(acc);
  }
  return out;
}

double scan_peak_frequency(double t_start, double t_end, const Spectrogram& spectrogram) {
  const std::size_t bins = spectrogram.magnitudes.rows();
  std::vector<double> power(bins, 0.0);
  std::size_t used = 0;
  for (std::size_t m = 0; m < spectrogram.n_frames(); ++m) {
    const double a = static_cast<double>(m) * spectrogram.grid.hop_s;
    const double b = static_cast<double>(m + 1) * spectrogram.grid.hop_s;
    if (!(a < t_end && b > t_start)) continue;
    ++used;
    for (std::size_t k = 0; k < bins; ++k) {
      const double v = spectrogram.magnitudes(k, m);
      power[k] += v * v;
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < bins; ++k) {
    if (power[k] > power[best]) best = k;
  }
  return used ? static_cast<double>(best) * spectrogram.freq_resolution : 0.0;
}

std::vector<DetectedEvent> fixpoint_merge(std::vector<DetectedEvent> events,
                                          const Spectrogram& spectrogram, const MergeConfig& config) {
  for (auto& e : events) e.peak_freq = scan_peak_frequency(e.t_start, e.t_end, spectrogram);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
      const auto& a = events[i];
      const auto& b = events[i + 1];
      if (b.t_start - a.t_end < config.max_gap_s &&
          std::abs(b.peak_freq - a.peak_freq) < config.max_peak_diff_hz) {
        DetectedEvent m{a.t_start, b.t_end, 0.0};
        m.peak_freq = scan_peak_frequency(m.t_start, m.t_end, spectrogram);
        events[i] = m;
        events.erase(events.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        changed = true;
        break;
      }
    }
  }
  return events;
}

EventCounts pairwise_match(const std::vector<DetectedEvent>& predicted,
                           const std::vector<LabelEvent>& truth) {
  std::vector<char> label_hit(truth.size(), 0), pred_hit(predicted.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = 0; j < predicted.size(); ++j) {
      const double inter = std::max(0.0, std::min(truth[i].t_end, predicted[j].t_end) -
                                             std::max(truth[i].t_start, predicted[j].t_start));
      const double uni = (truth[i].t_end - truth[i].t_start) +
                         (predicted[j].t_end - predicted[j].t_start) - inter;
      // JI >= 1/2 is 2 * inter >= union; the slack absorbs rounding.
      if (uni > 0.0 && 2.0 * inter >= uni - 1e-12) {
        label_hit[i] = 1;
        pred_hit[j] = 1;
      }
    }
  }
  const auto ml = static_cast<std::size_t>(std::count(label_hit.begin(), label_hit.end(), 1));
  const auto mp = static_cast<std::size_t>(std::count(pred_hit.begin(), pred_hit.end(), 1));
  return {std::min(ml, mp), predicted.size() - mp, truth.size() - ml};
}

double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0, n_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (truth[i]) {
      rank_sum += rank[i];
      n_pos += 1.0;
    }
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double grid_best_threshold(const std::vector<double>& p, const std::vector<int>& truth, std::size_t steps) {
  double best_t = 0.0, best_acc = -1.0;
  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(steps);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < p.size(); ++i) ok += static_cast<std::size_t>((p[i] >= t) == (truth[i] == 1));
    const double acc = static_cast<double>(ok) / static_cast<double>(p.size());
    if (acc > best_acc) {
      best_acc = acc;
      best_t = t;
    }
  }
  return best_t;
}

Spectrogram tone_spectrogram(const std::vector<std::size_t>& peak_bin_per_frame, double hop_s) {
  Spectrogram s;
  s.magnitudes = Matrix(kFreqBins, peak_bin_per_frame.size(), 0.01);
  for (std::size_t m = 0; m < peak_bin_per_frame.size(); ++m) s.magnitudes(peak_bin_per_frame[m], m) = 1.0;
  s.freq_resolution = 4000.0 / static_cast<double>(kWindowSize);
  s.grid = {peak_bin_per_frame.size(), hop_s};
  return s;
}

}  // namespace casdet::testing
