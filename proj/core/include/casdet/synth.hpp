#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "casdet/signal_io.hpp"

namespace casdet {

inline constexpr double kSynthDuration = 15.0;
inline constexpr double kEdgeRamp = 0.010;

// V falls to f0 - sweep and returns; inverted-V rises to f0 + sweep; W is two
// V dips; wiggle zig-zags by sweep/4 around f0.
enum class Contour { kFlat, kWiggle, kV, kW, kInvertedV };
enum class BreathPhase { kInspiratory, kExpiratory, kBoth };

std::string to_string(Contour c);
Contour parse_contour(const std::string& name);
std::string to_string(BreathPhase p);

struct SynthSpec {
  LabelKind kind = LabelKind::kWheeze;
  double f0 = 400.0;
  std::size_t n_harmonics = 0;
  Contour contour = Contour::kFlat;
  double sweep_hz = 100.0;
  BreathPhase phase = BreathPhase::kExpiratory;
  // Adds a second tone at 1.37x the contour.
  bool polyphonic = false;
  // Tone power over unit background power.
  double snr_db = 10.0;
  int sample_rate = kDefaultSampleRate;
  std::uint64_t seed = 1;  // start phases

  // Knots of the piecewise-linear fundamental contour, evenly spaced in time.
  std::vector<double> contour_knots() const;
};

struct SynthEvent {
  std::vector<double> samples;
  LabelEvent label;
  std::size_t start_sample = 0;
};

// Harmonics at or above Nyquist are dropped. Throws DataError when the
// fundamental contour leaves (0, Nyquist), when a rhonchus contour reaches
// 200 Hz, or when the event does not fit in the recording.
SynthEvent synth_cas(const SynthSpec& spec, double duration_s, double t_start);

struct SynthMix {
  // Probability of 0..4 events per recording.
  std::array<double, 5> event_count_weights{0.1, 0.3, 0.3, 0.2, 0.1};
  // Probability of wheeze, stridor, rhonchus.
  std::array<double, 3> kind_weights{0.6, 0.2, 0.2};
  double min_duration_s = 0.4;
  double max_duration_s = 1.2;
  double min_gap_s = 0.6;
  double snr_db = 10.0;
  double harmonic_probability = 0.5;
  double polyphonic_probability = 0.15;
  bool rhonchus_harmonics = false;

  static SynthMix defaults() { return {}; }
  // Background only.
  static SynthMix none();
};

// Unit-RMS pink noise shaped by a breathing envelope.
std::vector<double> breathing_noise(std::size_t n, double cycle_s, double offset_s, int sample_rate,
                                    std::uint64_t seed);

Dataset synth_corpus(std::size_t n_recordings, const SynthMix& mix, std::uint64_t seed);

// Writes `<id>.wav`, `<id>.txt` and `manifest.txt` under `dir`.
void write_corpus(const std::filesystem::path& dir, const Dataset& dataset);

// Independent per-recording stream seeds.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace casdet
