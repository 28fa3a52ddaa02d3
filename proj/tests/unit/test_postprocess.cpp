#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "casdet/error.hpp"
#include "casdet/features.hpp"
#include "casdet/postprocess.hpp"
#include "oracles.hpp"

namespace casdet {
namespace {

constexpr double kBin = 4000.0 / 256.0;

// Per-frame dominant bin; events get their peaks from this spectrogram.
Spectrogram two_tone(double t0_a, double t1_a, std::size_t bin_a, double t0_b, double t1_b,
                     std::size_t bin_b) {
  const double hop = 0.016;
  std::vector<std::size_t> bins(250, 2);
  for (std::size_t m = 0; m < bins.size(); ++m) {
    const double t = static_cast<double>(m) * hop;
    if (t >= t0_a && t < t1_a) bins[m] = bin_a;
    if (t >= t0_b && t < t1_b) bins[m] = bin_b;
  }
  return casdet::testing::tone_spectrogram(bins, hop);
}

std::vector<DetectedEvent> with_peaks(std::vector<DetectedEvent> events, const Spectrogram& s) {
  for (auto& e : events) e.peak_freq = event_peak_frequency(e, s);
  return events;
}

TEST(Threshold, InclusiveBoundary) {
  EXPECT_EQ(threshold_segments({0.2, 0.5, 0.9}, 0.5), (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(threshold_segments({0.0, 0.3, 1.0}, 0.0), (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(threshold_segments({0.2, 0.99, 0.5}, 1.0), (std::vector<int>{0, 0, 0}));
}

TEST(Threshold, MonotoneInTheta) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(300);
  for (double& v : p) v = u(rng);
  auto prev = threshold_segments(p, 0.0);
  for (double th = 0.05; th <= 1.0; th += 0.05) {
    const auto cur = threshold_segments(p, th);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE(cur[i], prev[i]);
    prev = cur;
  }
}

TEST(Segments, RunLengths) {
  const FrameGrid grid{4, 0.032};
  EXPECT_TRUE(segments_to_events({0, 0, 0, 0}, grid).empty());
  const auto ev = segments_to_events({1, 1, 0, 1}, grid);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_NEAR(ev[0].t_start, 0.0, 1e-12);
  EXPECT_NEAR(ev[0].t_end, 0.064, 1e-12);
  EXPECT_NEAR(ev[1].t_start, 0.096, 1e-12);
  EXPECT_NEAR(ev[1].t_end, 0.128, 1e-12);
  const auto all = segments_to_events(std::vector<int>(469, 1), {469, 0.032});
  ASSERT_EQ(all.size(), 1u);
  EXPECT_NEAR(all[0].t_end, 469 * 0.032, 1e-9);
}

TEST(PeakFrequency, KnownToneWithinOneBin) {
  Recording r;
  r.samples.resize(8000);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    r.samples[i] = std::sin(2.0 * std::numbers::pi * 400.0 * static_cast<double>(i) / 4000.0);
  }
  const Spectrogram s = stft(r.samples, 4000);
  const double f = event_peak_frequency({0.5, 1.5, 0.0}, s);
  EXPECT_TRUE(std::abs(f - 406.25) < 1e-9 || std::abs(f - 390.625) < 1e-9) << f;
  EXPECT_LE(std::abs(f - 400.0), kBin);
}

TEST(PeakFrequency, SingleBinAndZeroTie) {
  Spectrogram s = casdet::testing::tone_spectrogram(std::vector<std::size_t>(20, 37), 0.016);
  for (double& v : s.magnitudes.values()) v = v < 1.0 ? 0.0 : v;
  EXPECT_DOUBLE_EQ(event_peak_frequency({0.0, 0.2, 0.0}, s), 37 * kBin);
  for (double& v : s.magnitudes.values()) v = 0.0;
  EXPECT_DOUBLE_EQ(event_peak_frequency({0.0, 0.2, 0.0}, s), 0.0);
}

TEST(PeakFrequency, MatchesFrameScanOracle) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> mag(0.0, 1.0);
  Spectrogram s;
  s.magnitudes = Matrix(kFreqBins, 120);
  for (double& v : s.magnitudes.values()) v = mag(rng);
  s.freq_resolution = kBin;
  s.grid = {120, 0.016};
  std::uniform_real_distribution<double> t(0.0, 1.8);
  for (int i = 0; i < 200; ++i) {
    double a = t(rng), b = t(rng);
    if (a > b) std::swap(a, b);
    if (b - a < 1e-3) continue;
    EXPECT_DOUBLE_EQ(event_peak_frequency({a, b, 0.0}, s),
                     casdet::testing::scan_peak_frequency(a, b, s));
  }
}

TEST(Merge, CloseSimilarEventsJoin) {
  const Spectrogram s = two_tone(1.0, 1.5, 26, 1.8, 2.3, 26);
  const auto in = with_peaks({{1.0, 1.5, 0.0}, {1.8, 2.3, 0.0}}, s);
  const auto out = merge_events(in, s);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].t_start, 1.0);
  EXPECT_DOUBLE_EQ(out[0].t_end, 2.3);
}

TEST(Merge, LargeGapKept) {
  const Spectrogram s = two_tone(1.0, 1.5, 26, 2.1, 2.6, 26);
  const auto in = with_peaks({{1.0, 1.5, 0.0}, {2.1, 2.6, 0.0}}, s);
  EXPECT_EQ(merge_events(in, s), in);
}

TEST(Merge, DistantPeaksKept) {
  // 406.25 Hz against 437.5 Hz.
  const Spectrogram s = two_tone(1.0, 1.5, 26, 1.8, 2.3, 28);
  const auto in = with_peaks({{1.0, 1.5, 0.0}, {1.8, 2.3, 0.0}}, s);
  EXPECT_NEAR(in[1].peak_freq - in[0].peak_freq, 31.25, 1e-9);
  EXPECT_EQ(merge_events(in, s), in);
}

TEST(Merge, GapEqualToThresholdKept) {
  const Spectrogram s = two_tone(1.0, 1.5, 26, 2.0, 2.5, 26);
  MergeConfig c;
  c.max_gap_s = 0.5;
  const auto in = with_peaks({{1.0, 1.5, 0.0}, {2.0, 2.5, 0.0}}, s);
  EXPECT_EQ(merge_events(in, s, c).size(), 2u);
}

struct RandomInstance {
  Spectrogram spectrogram;
  std::vector<DetectedEvent> events;
  MergeConfig config;
};

RandomInstance random_instance(std::mt19937_64& rng) {
  const std::size_t frames = 200;
  const double hop = 0.016;
  std::uniform_int_distribution<std::size_t> bin(20, 23);
  std::vector<std::size_t> bins(frames);
  std::size_t current = bin(rng);
  for (auto& b : bins) {
    if (rng() % 9 == 0) current = bin(rng);
    b = current;
  }
  RandomInstance inst;
  inst.spectrogram = casdet::testing::tone_spectrogram(bins, hop);
  // Ones on the output grid (two spectrogram frames per step).
  std::vector<int> binary(frames / 2);
  for (auto& v : binary) v = rng() % 3 == 0 ? 1 : 0;
  inst.events = with_peaks(segments_to_events(binary, {binary.size(), 2 * hop}), inst.spectrogram);
  std::uniform_real_distribution<double> gap(0.0, 0.4), diff(10.0, 40.0);
  inst.config.max_gap_s = gap(rng);
  inst.config.max_peak_diff_hz = diff(rng);
  return inst;
}

TEST(Merge, MatchesFixpointOracleOnRandomInstances) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const RandomInstance inst = random_instance(rng);
    const auto got = merge_events(inst.events, inst.spectrogram, inst.config);
    const auto want = casdet::testing::fixpoint_merge(inst.events, inst.spectrogram, inst.config);
    ASSERT_EQ(got, want) << "instance " << i;
  }
}

TEST(Merge, PropertiesOnRandomInstances) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    const RandomInstance inst = random_instance(rng);
    const auto once = merge_events(inst.events, inst.spectrogram, inst.config);
    EXPECT_EQ(merge_events(once, inst.spectrogram, inst.config), once);
    double covered_in = 0.0, covered_out = 0.0;
    for (const auto& e : inst.events) covered_in += e.duration();
    for (std::size_t k = 0; k < once.size(); ++k) {
      covered_out += once[k].duration();
      if (k > 0) EXPECT_LT(once[k - 1].t_end, once[k].t_start + 1e-12);
      EXPECT_GE(once[k].peak_freq, 20 * kBin);
      EXPECT_LE(once[k].peak_freq, 23 * kBin);
    }
    EXPECT_GE(covered_out + 1e-9, covered_in);
  }
}

TEST(Bursts, StrictLessRule) {
  EXPECT_TRUE(remove_bursts({{1.0, 1.04, 0.0}}).empty());
  EXPECT_EQ(remove_bursts({{1.0, 1.05, 0.0}}).size(), 1u);
  EXPECT_EQ(remove_bursts({{0.0, 0.05, 0.0}}).size(), 1u);
  EXPECT_TRUE(remove_bursts({}).empty());
}

TEST(Postprocess, ChainOutputsSortedDisjointAndLongEnough) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const RandomInstance inst = random_instance(rng);
    std::vector<double> p(100);
    for (double& v : p) v = u(rng);
    const auto ev = postprocess(p, {100, 0.032}, 0.6, inst.spectrogram, inst.config);
    for (std::size_t k = 0; k < ev.size(); ++k) {
      EXPECT_GE(ev[k].duration(), inst.config.min_duration_s - 1e-12);
      if (k > 0) EXPECT_LT(ev[k - 1].t_end, ev[k].t_start + 1e-12);
    }
  }
}

TEST(EventsText, RoundTrip) {
  const std::vector<DetectedEvent> ev{{1.0, 1.5, 406.25}, {2.25, 3.125, 0.0}};
  const std::string text = format_events(ev);
  const auto back = parse_events(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_NEAR(back[0].t_end, 1.5, 1e-9);
  EXPECT_NEAR(back[0].peak_freq, 406.25, 1e-9);
  EXPECT_THROW(parse_events("1.0 nope 3\n"), DataError);
}

}  // namespace
}  // namespace casdet
