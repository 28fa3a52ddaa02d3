#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "casdet/matrix.hpp"
#include "casdet/signal_io.hpp"

namespace casdet {

inline constexpr std::size_t kWindowSize = 256;
inline constexpr std::size_t kHopSize = 64;
inline constexpr std::size_t kFreqBins = kWindowSize / 2 + 1;  // 129
inline constexpr std::size_t kMfccRows = 60;
inline constexpr std::size_t kEnergyRows = 4;
inline constexpr std::size_t kFeatureRows = kFreqBins + kMfccRows + kEnergyRows;  // 193

// Frame m owns the half-open tile [m * hop_s, (m + 1) * hop_s).
struct FrameGrid {
  std::size_t n_frames = 0;
  double hop_s = 0.0;

  double frame_start(std::size_t m) const { return static_cast<double>(m) * hop_s; }
  double frame_end(std::size_t m) const { return static_cast<double>(m + 1) * hop_s; }
  double span_s() const { return static_cast<double>(n_frames) * hop_s; }

  static FrameGrid for_samples(std::size_t n_samples, int sample_rate);
  friend bool operator==(const FrameGrid&, const FrameGrid&) = default;
};

struct Spectrogram {
  Matrix magnitudes;  // kFreqBins x n_frames
  double freq_resolution = 0.0;
  FrameGrid grid;

  std::size_t n_frames() const { return magnitudes.cols(); }
  double bin_frequency(std::size_t bin) const { return static_cast<double>(bin) * freq_resolution; }
};

struct HighpassConfig {
  double cutoff_hz = 80.0;
  int order = 4;
};

struct MfccConfig {
  std::size_t n_filters = 40;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 selects the Nyquist frequency
  double log_floor = 1e-10;
  std::size_t n_coeffs = 20;
  std::size_t delta_window = 2;
};

struct FeatureConfig {
  HighpassConfig highpass;
  MfccConfig mfcc;
};

struct FeatureMatrix {
  Matrix spec_block;    // 129 x F
  Matrix mfcc_block;    // 60 x F: static, delta, acceleration
  Matrix energy_block;  // 4 x F
  bool normalized = false;
  FrameGrid grid;

  std::size_t n_frames() const { return spec_block.cols(); }
  // Rows stacked as spectrogram, MFCC, energy: 193 x F.
  Matrix stacked() const;
};

// Result of the preprocessing chain; `spectrogram` keeps the raw magnitudes for
// energy-peak lookups after normalization.
struct PreprocessedRecording {
  FeatureMatrix features;
  Spectrogram spectrogram;
};

std::vector<double> highpass_80(const Recording& recording, const HighpassConfig& config = {});

std::vector<double> hann_window(std::size_t n);  // periodic

// Centered framing with 128-sample reflection padding, hop 64, FFT 256.
Spectrogram stft(std::span<const double> samples, int sample_rate);

// Triangular mel filters (HTK mel scale), n_filters x kFreqBins.
Matrix mel_filterbank(const MfccConfig& config, int sample_rate);
Matrix dct2_orthonormal(std::size_t n_out, std::size_t n_in);
// Regression deltas over +-window frames with edge replication.
Matrix deltas(const Matrix& values, std::size_t window);
Matrix mfcc_static(const Spectrogram& spectrogram, const MfccConfig& config = {});
Matrix mfcc60(const Spectrogram& spectrogram, const MfccConfig& config = {});
// True when every mel energy is at or below the log floor. The log-mel input
// is then constant and preprocessing emits a zero MFCC block.
bool below_log_floor(const Spectrogram& spectrogram, const MfccConfig& config = {});

struct Band {
  double lo_hz;
  double hi_hz;
};
inline constexpr Band kEnergyBands[kEnergyRows] = {
    {0.0, 250.0}, {250.0, 500.0}, {500.0, 1000.0}, {0.0, 2000.0}};

// Sum of squared magnitudes over bins with centre in [lo, hi); a band whose
// upper edge is the Nyquist frequency also includes the Nyquist bin.
Matrix band_energy(const Spectrogram& spectrogram);

// z-score over every entry; all zeros when sigma < 1e-12.
Matrix normalize_group(const Matrix& values);

PreprocessedRecording preprocess(const Recording& recording, const FeatureConfig& config = {});
FeatureMatrix assemble_features(const Recording& recording, const FeatureConfig& config = {});

// Feature dump, CSV, format version 1. See README for the layout.
void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_feature_csv(const std::filesystem::path& path);

}  // namespace casdet
