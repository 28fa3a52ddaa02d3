#include "casdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "casdet/error.hpp"
#include "casdet/layers.hpp"

namespace casdet {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInhaleFraction = 0.4;
constexpr double kPolyRatio = 1.37;
constexpr double kHarmonicDecay = 0.6;
constexpr double kRhonchusLimit = 200.0;
constexpr double kPeakLevel = 0.5;

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double gaussian(std::mt19937_64& rng) {
  // Box-Muller from portable uniforms; 1 - u keeps the log argument positive.
  const double u = 1.0 - uniform01(rng);
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(kTwoPi * v);
}

std::size_t pick(std::mt19937_64& rng, const double* w, std::size_t n) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += w[i];
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < n; ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  return n - 1;
}

// Milliseconds keep label text and sample indices exact at 4000 Hz.
double to_ms(double t) { return std::round(t * 1000.0) / 1000.0; }

double contour_at(const std::vector<double>& knots, double u) {
  if (knots.size() == 1) return knots[0];
  const double x = u * static_cast<double>(knots.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(x), knots.size() - 2);
  const double frac = x - static_cast<double>(i);
  return knots[i] + (knots[i + 1] - knots[i]) * frac;
}

struct Breath {
  double cycle_s;
  double offset_s;
};

}  // namespace

std::string to_string(Contour c) {
  switch (c) {
    case Contour::kFlat: return "flat";
    case Contour::kWiggle: return "wiggle";
    case Contour::kV: return "V";
    case Contour::kW: return "W";
    case Contour::kInvertedV: return "inverted-V";
  }
  return "unknown";
}

Contour parse_contour(const std::string& name) {
  for (Contour c : {Contour::kFlat, Contour::kWiggle, Contour::kV, Contour::kW, Contour::kInvertedV}) {
    if (to_string(c) == name) return c;
  }
  throw DataError("unknown contour '" + name + "'");
}

std::string to_string(BreathPhase p) {
  switch (p) {
    case BreathPhase::kInspiratory: return "inspiratory";
    case BreathPhase::kExpiratory: return "expiratory";
    case BreathPhase::kBoth: return "both";
  }
  return "unknown";
}

std::vector<double> SynthSpec::contour_knots() const {
  const double s = sweep_hz;
  switch (contour) {
    case Contour::kFlat: return {f0};
    case Contour::kWiggle:
      return {f0, f0 + s / 4, f0 - s / 4, f0 + s / 4, f0 - s / 4, f0 + s / 4, f0 - s / 4, f0};
    case Contour::kV: return {f0, f0 - s, f0};
    case Contour::kW: return {f0, f0 - s, f0, f0 - s, f0};
    case Contour::kInvertedV: return {f0, f0 + s, f0};
  }
  return {f0};
}

SynthEvent synth_cas(const SynthSpec& spec, double duration_s, double t_start) {
  if (!is_cas(spec.kind)) throw DataError("synth_cas: label kind is not a CAS kind");
  if (spec.sample_rate <= 0) throw DataError("synth_cas: sample rate must be positive");
  const double fs = spec.sample_rate;
  const double nyquist = fs / 2.0;
  const auto start = static_cast<std::size_t>(std::llround(std::max(0.0, t_start) * fs));
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  if (t_start < 0.0 || n == 0 || static_cast<double>(start + n) > kSynthDuration * fs + 0.5) {
    throw DataError("synth_cas: event does not fit inside the recording");
  }
  const auto knots = spec.contour_knots();
  const auto [lo, hi] = std::minmax_element(knots.begin(), knots.end());
  if (!(*lo > 0.0) || !(*hi < nyquist)) {
    throw DataError("synth_cas: contour spans " + std::to_string(*lo) + ".." + std::to_string(*hi) +
                    " Hz, outside (0, " + std::to_string(nyquist) + ")");
  }
  if (spec.kind == LabelKind::kRhonchus && *hi >= kRhonchusLimit) {
    throw DataError("synth_cas: rhonchus contour reaches " + std::to_string(*hi) + " Hz");
  }

  struct Tone {
    double ratio;
    double amplitude;
    double phase;
  };
  std::mt19937_64 rng(spec.seed);
  std::vector<Tone> tones;
  auto add_series = [&](double ratio, double amplitude) {
    for (std::size_t h = 0; h <= spec.n_harmonics; ++h) {
      const double r = ratio * static_cast<double>(h + 1);
      const double phase = kTwoPi * uniform01(rng);
      if (r * *hi < nyquist) tones.push_back({r, amplitude * std::pow(kHarmonicDecay, h), phase});
    }
  };
  add_series(1.0, 1.0);
  if (spec.polyphonic) add_series(kPolyRatio, 0.7);

  SynthEvent ev;
  ev.samples.assign(n, 0.0);
  ev.start_sample = start;
  double phi = 0.0;  // fundamental phase
  for (std::size_t i = 0; i < n; ++i) {
    const double u = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    double x = 0.0;
    for (const Tone& t : tones) x += t.amplitude * std::sin(t.ratio * phi + t.phase);
    ev.samples[i] = x;
    phi += kTwoPi * contour_at(knots, u) / fs;
  }
  double power = 0.0;
  for (double x : ev.samples) power += x * x;
  power /= static_cast<double>(n);
  const double gain = std::pow(10.0, spec.snr_db / 20.0) / std::sqrt(power);
  const auto ramp = std::min(n / 2, static_cast<std::size_t>(std::llround(kEdgeRamp * fs)));
  for (std::size_t i = 0; i < n; ++i) {
    double w = 1.0;
    const std::size_t edge = std::min(i, n - 1 - i);
    if (edge < ramp) w = 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(edge) + 0.5) / ramp);
    ev.samples[i] *= gain * w;
  }
  ev.label = {spec.kind, static_cast<double>(start) / fs, static_cast<double>(start + n) / fs};
  return ev;
}

SynthMix SynthMix::none() {
  SynthMix m;
  m.event_count_weights = {1.0, 0.0, 0.0, 0.0, 0.0};
  return m;
}

std::vector<double> breathing_noise(std::size_t n, double cycle_s, double offset_s, int sample_rate,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  // Paul Kellet's pink filter on white Gaussian noise.
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = gaussian(rng);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    const double pink = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
    const double t = static_cast<double>(i) / sample_rate + offset_s;
    const double u = std::fmod(t, cycle_s) / cycle_s;
    const double env = u < kInhaleFraction
                           ? 0.3 + 0.7 * std::sin(std::numbers::pi * u / kInhaleFraction)
                           : 0.3 + 0.5 * std::sin(std::numbers::pi * (u - kInhaleFraction) / (1 - kInhaleFraction));
    out[i] = pink * env;
  }
  double power = 0.0;
  for (double x : out) power += x * x;
  const double scale = 1.0 / std::sqrt(power / static_cast<double>(n));
  for (double& x : out) x *= scale;
  return out;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  // splitmix64 finalizer.
  std::uint64_t z = root + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

DatasetEntry synth_recording(std::size_t index, const SynthMix& mix, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int fs = kDefaultSampleRate;
  const auto n = static_cast<std::size_t>(kSynthDuration * fs);
  const Breath breath{uniform(rng, 3.0, 4.5), 0.0};
  const double offset = uniform(rng, 0.0, breath.cycle_s);

  DatasetEntry entry;
  char id[32];
  std::snprintf(id, sizeof id, "synth_%04zu", index);
  entry.recording.id = id;
  entry.recording.sample_rate = fs;
  entry.recording.samples = breathing_noise(n, breath.cycle_s, offset, fs, rng());

  // Breath segment boundaries in recording time.
  auto segment = [&](double t, bool inhale, double& seg_lo, double& seg_hi) {
    const double c = breath.cycle_s;
    const double base = std::floor((t + offset) / c) * c - offset;
    seg_lo = inhale ? base : base + kInhaleFraction * c;
    seg_hi = inhale ? base + kInhaleFraction * c : base + c;
  };

  const std::size_t n_events = pick(rng, mix.event_count_weights.data(), mix.event_count_weights.size());
  std::vector<LabelEvent> placed;
  for (std::size_t e = 0; e < n_events; ++e) {
    SynthSpec spec;
    spec.seed = rng();
    spec.snr_db = mix.snr_db;
    spec.sample_rate = fs;
    const std::size_t kind = pick(rng, mix.kind_weights.data(), mix.kind_weights.size());
    const bool harmonics = uniform01(rng) < mix.harmonic_probability;
    spec.n_harmonics = harmonics ? 1 + uniform_index(rng, 3) : 0;
    spec.polyphonic = uniform01(rng) < mix.polyphonic_probability;
    spec.contour = static_cast<Contour>(uniform_index(rng, 5));
    if (kind == 0) {
      spec.kind = LabelKind::kWheeze;
      spec.f0 = uniform(rng, 200.0, 800.0);
      spec.sweep_hz = uniform(rng, 0.1, 0.3) * spec.f0;
      const double p = uniform01(rng);
      spec.phase = p < 0.2 ? BreathPhase::kInspiratory : p < 0.8 ? BreathPhase::kExpiratory : BreathPhase::kBoth;
    } else if (kind == 1) {
      spec.kind = LabelKind::kStridor;
      spec.f0 = uniform(rng, 500.0, 900.0);
      spec.sweep_hz = uniform(rng, 0.05, 0.15) * spec.f0;
      spec.phase = BreathPhase::kInspiratory;
    } else {
      spec.kind = LabelKind::kRhonchus;
      spec.f0 = uniform(rng, 110.0, 160.0);
      spec.sweep_hz = uniform(rng, 10.0, 30.0);
      spec.polyphonic = false;
      if (!mix.rhonchus_harmonics) spec.n_harmonics = 0;
      spec.phase = static_cast<BreathPhase>(uniform_index(rng, 3));
    }
    const double dur = to_ms(uniform(rng, mix.min_duration_s, mix.max_duration_s));

    for (int attempt = 0; attempt < 60; ++attempt) {
      const double anchor = uniform(rng, 0.0, kSynthDuration);
      double lo = 0, hi = 0, start = 0;
      if (spec.phase == BreathPhase::kBoth) {
        segment(anchor, true, lo, hi);
        start = uniform(rng, hi - dur + 0.1, hi - 0.1);
      } else {
        segment(anchor, spec.phase == BreathPhase::kInspiratory, lo, hi);
        if (hi - lo < dur + 0.1) continue;
        start = uniform(rng, lo + 0.05, hi - dur - 0.05);
      }
      start = to_ms(start);
      const double end = start + dur;
      if (start < 0.1 || end > kSynthDuration - 0.1) continue;
      const bool clear = std::all_of(placed.begin(), placed.end(), [&](const LabelEvent& o) {
        return end + mix.min_gap_s <= o.t_start || o.t_end + mix.min_gap_s <= start;
      });
      if (!clear) continue;
      const SynthEvent ev = synth_cas(spec, dur, start);
      for (std::size_t i = 0; i < ev.samples.size(); ++i) {
        entry.recording.samples[ev.start_sample + i] += ev.samples[i];
      }
      placed.push_back({spec.kind, to_ms(ev.label.t_start), to_ms(ev.label.t_end)});
      break;
    }
  }
  std::sort(placed.begin(), placed.end(),
            [](const LabelEvent& a, const LabelEvent& b) { return a.t_start < b.t_start; });
  entry.labels = std::move(placed);

  // Peak-normalize and quantize to the 16-bit grid so the in-memory corpus
  // equals what a WAV round trip yields.
  double peak = 0.0;
  for (double x : entry.recording.samples) peak = std::max(peak, std::abs(x));
  const double scale = peak > 0.0 ? kPeakLevel / peak : 1.0;
  for (double& x : entry.recording.samples) x = std::round(x * scale * 32768.0) / 32768.0;
  return entry;
}

}  // namespace

Dataset synth_corpus(std::size_t n_recordings, const SynthMix& mix, std::uint64_t seed) {
  if (n_recordings == 0) throw DataError("synth_corpus: n_recordings must be at least 1");
  Dataset ds;
  ds.entries.reserve(n_recordings);
  for (std::size_t i = 0; i < n_recordings; ++i) {
    ds.entries.push_back(synth_recording(i, mix, derive_seed(seed, i)));
  }
  return ds;
}

void write_corpus(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestLine> lines;
  for (const auto& e : dataset.entries) {
    const std::string wav = e.recording.id + ".wav";
    const std::string txt = e.recording.id + ".txt";
    write_wav(dir / wav, e.recording);
    write_labels(dir / txt, e.labels);
    lines.push_back({wav, txt});
  }
  write_manifest(dir / "manifest.txt", lines);
}

}  // namespace casdet
