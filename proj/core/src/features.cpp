#include "casdet/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>

#include "casdet/butterworth.hpp"
#include "casdet/error.hpp"

namespace casdet {
namespace {

// FFTW's planner is not re-entrant; executing a finished plan is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::lock_guard lock(fftw_planner_mutex());
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(std::size_t k) const { return std::hypot(out_[k][0], out_[k][1]); }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct Moments {
  double mean;
  double stddev;
};

Moments moments(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

void write_block(std::ostream& out, const char* name, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << name << ',' << r;
    for (double v : m.row(r)) out << ',' << v;
    out << '\n';
  }
}

}  // namespace

FrameGrid FrameGrid::for_samples(std::size_t n_samples, int sample_rate) {
  return {1 + n_samples / kHopSize, static_cast<double>(kHopSize) / sample_rate};
}

Matrix FeatureMatrix::stacked() const {
  const std::size_t f = n_frames();
  Matrix out(spec_block.rows() + mfcc_block.rows() + energy_block.rows(), f);
  std::size_t r = 0;
  for (const Matrix* block : {&spec_block, &mfcc_block, &energy_block}) {
    for (std::size_t i = 0; i < block->rows(); ++i, ++r) {
      std::copy(block->row(i).begin(), block->row(i).end(), out.row(r).begin());
    }
  }
  return out;
}

std::vector<double> highpass_80(const Recording& recording, const HighpassConfig& config) {
  if (!(recording.sample_rate > 2.0 * config.cutoff_hz)) {
    throw DataError("sample rate " + std::to_string(recording.sample_rate) +
                    " Hz too low for a " + std::to_string(config.cutoff_hz) + " Hz cutoff");
  }
  const auto sections =
      butterworth_highpass(config.order, config.cutoff_hz, recording.sample_rate);
  const auto padlen = static_cast<std::size_t>(3.0 * recording.sample_rate / config.cutoff_hz);
  return sosfiltfilt(sections, recording.samples, padlen);
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

Spectrogram stft(std::span<const double> samples, int sample_rate) {
  const std::size_t n = samples.size();
  if (n < kWindowSize) {
    throw DataError("signal of " + std::to_string(n) + " samples shorter than one " +
                    std::to_string(kWindowSize) + "-sample window");
  }
  constexpr std::size_t pad = kWindowSize / 2;
  std::vector<double> padded(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    padded[pad - 1 - i] = samples[i + 1];
    padded[pad + n + i] = samples[n - 2 - i];
  }
  std::copy(samples.begin(), samples.end(), padded.begin() + pad);

  Spectrogram spec;
  spec.grid = FrameGrid::for_samples(n, sample_rate);
  spec.freq_resolution = static_cast<double>(sample_rate) / kWindowSize;
  spec.magnitudes = Matrix(kFreqBins, spec.grid.n_frames);

  const auto window = hann_window(kWindowSize);
  RealFft fft(kWindowSize);
  for (std::size_t m = 0; m < spec.grid.n_frames; ++m) {
    const double* frame = padded.data() + m * kHopSize;
    double* in = fft.input();
    for (std::size_t i = 0; i < kWindowSize; ++i) in[i] = frame[i] * window[i];
    fft.execute();
    for (std::size_t k = 0; k < kFreqBins; ++k) spec.magnitudes(k, m) = fft.magnitude(k);
  }
  return spec;
}

Matrix mel_filterbank(const MfccConfig& config, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  const double f_max = config.f_max > 0.0 ? config.f_max : nyquist;
  const double mel_lo = hz_to_mel(config.f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(config.n_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(config.n_filters + 1));
  }
  const double df = static_cast<double>(sample_rate) / kWindowSize;
  Matrix fb(config.n_filters, kFreqBins);
  for (std::size_t j = 0; j < config.n_filters; ++j) {
    const double lo = edges[j], mid = edges[j + 1], hi = edges[j + 2];
    for (std::size_t k = 0; k < kFreqBins; ++k) {
      const double f = static_cast<double>(k) * df;
      const double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
      fb(j, k) = std::max(0.0, w);
    }
  }
  return fb;
}

Matrix dct2_orthonormal(std::size_t n_out, std::size_t n_in) {
  Matrix d(n_out, n_in);
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i) {
      d(k, i) = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                 (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
  }
  return d;
}

Matrix deltas(const Matrix& values, std::size_t window) {
  const std::size_t f = values.cols();
  Matrix out(values.rows(), f);
  if (f == 0 || window == 0) return out;
  double denom = 0.0;
  for (std::size_t n = 1; n <= window; ++n) denom += static_cast<double>(n * n);
  denom *= 2.0;
  const auto last = static_cast<std::ptrdiff_t>(f - 1);
  for (std::size_t r = 0; r < values.rows(); ++r) {
    const auto row = values.row(r);
    for (std::size_t t = 0; t < f; ++t) {
      double acc = 0.0;
      for (std::size_t n = 1; n <= window; ++n) {
        const auto ti = static_cast<std::ptrdiff_t>(t);
        const auto dn = static_cast<std::ptrdiff_t>(n);
        const double ahead = row[static_cast<std::size_t>(std::min(ti + dn, last))];
        const double behind = row[static_cast<std::size_t>(std::max<std::ptrdiff_t>(ti - dn, 0))];
        acc += static_cast<double>(n) * (ahead - behind);
      }
      out(r, t) = acc / denom;
    }
  }
  return out;
}

Matrix mfcc_static(const Spectrogram& spectrogram, const MfccConfig& config) {
  const int sample_rate = static_cast<int>(std::lround(spectrogram.freq_resolution * kWindowSize));
  const Matrix fb = mel_filterbank(config, sample_rate);
  const Matrix dct = dct2_orthonormal(config.n_coeffs, config.n_filters);
  const std::size_t f = spectrogram.n_frames();
  Matrix out(config.n_coeffs, f);
  std::vector<double> log_mel(config.n_filters);
  for (std::size_t m = 0; m < f; ++m) {
    for (std::size_t j = 0; j < config.n_filters; ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k < kFreqBins; ++k) {
        const double mag = spectrogram.magnitudes(k, m);
        e += fb(j, k) * mag * mag;
      }
      log_mel[j] = std::log(std::max(e, config.log_floor));
    }
    for (std::size_t c = 0; c < config.n_coeffs; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < config.n_filters; ++j) acc += dct(c, j) * log_mel[j];
      out(c, m) = acc;
    }
  }
  return out;
}

bool below_log_floor(const Spectrogram& spectrogram, const MfccConfig& config) {
  const int sample_rate = static_cast<int>(std::lround(spectrogram.freq_resolution * kWindowSize));
  const Matrix fb = mel_filterbank(config, sample_rate);
  for (std::size_t m = 0; m < spectrogram.n_frames(); ++m) {
    for (std::size_t j = 0; j < config.n_filters; ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k < kFreqBins; ++k) {
        const double mag = spectrogram.magnitudes(k, m);
        e += fb(j, k) * mag * mag;
      }
      if (e > config.log_floor) return false;
    }
  }
  return true;
}

Matrix mfcc60(const Spectrogram& spectrogram, const MfccConfig& config) {
  const Matrix stat = mfcc_static(spectrogram, config);
  const Matrix delta = deltas(stat, config.delta_window);
  const Matrix accel = deltas(delta, config.delta_window);
  const std::size_t c = stat.rows();
  Matrix out(3 * c, stat.cols());
  for (std::size_t r = 0; r < c; ++r) {
    std::copy(stat.row(r).begin(), stat.row(r).end(), out.row(r).begin());
    std::copy(delta.row(r).begin(), delta.row(r).end(), out.row(c + r).begin());
    std::copy(accel.row(r).begin(), accel.row(r).end(), out.row(2 * c + r).begin());
  }
  return out;
}

Matrix band_energy(const Spectrogram& spectrogram) {
  const std::size_t f = spectrogram.n_frames();
  const std::size_t bins = spectrogram.magnitudes.rows();
  const double nyquist = spectrogram.bin_frequency(bins - 1);
  Matrix out(kEnergyRows, f);
  for (std::size_t b = 0; b < kEnergyRows; ++b) {
    const Band band = kEnergyBands[b];
    for (std::size_t k = 0; k < bins; ++k) {
      const double fk = spectrogram.bin_frequency(k);
      const bool inside = (fk >= band.lo_hz && fk < band.hi_hz) ||
                          (fk == nyquist && band.hi_hz >= nyquist);
      if (!inside) continue;
      for (std::size_t m = 0; m < f; ++m) {
        const double mag = spectrogram.magnitudes(k, m);
        out(b, m) += mag * mag;
      }
    }
  }
  return out;
}

Matrix normalize_group(const Matrix& values) {
  Matrix out(values.rows(), values.cols());
  const auto [mean, sd] = moments(values.values());
  if (sd < 1e-12) return out;
  auto& dst = out.values();
  const auto& src = values.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - mean) / sd;
  return out;
}

PreprocessedRecording preprocess(const Recording& recording, const FeatureConfig& config) {
  validate(recording);
  const auto filtered = highpass_80(recording, config.highpass);
  PreprocessedRecording out;
  out.spectrogram = stft(filtered, recording.sample_rate);
  const Spectrogram& spec = out.spectrogram;

  FeatureMatrix& fm = out.features;
  fm.grid = spec.grid;
  fm.spec_block = normalize_group(spec.magnitudes);

  const Matrix mfcc = mfcc60(spec, config.mfcc);
  const std::size_t c = config.mfcc.n_coeffs;
  fm.mfcc_block = Matrix(mfcc.rows(), mfcc.cols());
  const bool silent = below_log_floor(spec, config.mfcc);
  for (std::size_t g = 0; g < 3 && !silent; ++g) {
    const Matrix group = normalize_group(mfcc.row_block(g * c, (g + 1) * c));
    std::copy(group.values().begin(), group.values().end(),
              fm.mfcc_block.row(g * c).begin());
  }

  const Matrix energy = band_energy(spec);
  fm.energy_block = Matrix(energy.rows(), energy.cols());
  for (std::size_t b = 0; b < energy.rows(); ++b) {
    const Matrix group = normalize_group(energy.row_block(b, b + 1));
    std::copy(group.values().begin(), group.values().end(), fm.energy_block.row(b).begin());
  }
  fm.normalized = true;
  return out;
}

FeatureMatrix assemble_features(const Recording& recording, const FeatureConfig& config) {
  return preprocess(recording, config).features;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& features) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path.string());
  out.precision(17);
  out << "casdet-features,1," << features.n_frames() << ',' << features.grid.hop_s << ','
      << (features.normalized ? 1 : 0) << '\n';
  write_block(out, "spec", features.spec_block);
  write_block(out, "mfcc", features.mfcc_block);
  write_block(out, "energy", features.energy_block);
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty feature file");
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) head.push_back(tok);
  }
  if (head.size() != 5 || head[0] != "casdet-features" || head[1] != "1") {
    throw DataError(path.string() + ": not a version-1 feature dump");
  }
  FeatureMatrix fm;
  const std::size_t f = std::stoul(head[2]);
  fm.grid = {f, std::stod(head[3])};
  fm.normalized = head[4] == "1";
  fm.spec_block = Matrix(kFreqBins, f);
  fm.mfcc_block = Matrix(kMfccRows, f);
  fm.energy_block = Matrix(kEnergyRows, f);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string block, tok;
    std::getline(ss, block, ',');
    std::getline(ss, tok, ',');
    Matrix* target = block == "spec" ? &fm.spec_block
                     : block == "mfcc" ? &fm.mfcc_block
                     : block == "energy" ? &fm.energy_block
                                         : nullptr;
    const std::size_t r = std::stoul(tok);
    if (target == nullptr || r >= target->rows()) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": bad row tag");
    }
    std::size_t c = 0;
    while (std::getline(ss, tok, ',')) {
      if (c >= f) throw DataError(path.string() + ": line " + std::to_string(line_no) + ": too many values");
      (*target)(r, c++) = std::stod(tok);
    }
    if (c != f) throw DataError(path.string() + ": line " + std::to_string(line_no) + ": too few values");
  }
  return fm;
}

}  // namespace casdet
