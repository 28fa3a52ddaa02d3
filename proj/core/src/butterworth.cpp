#include "casdet/butterworth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "casdet/error.hpp"

namespace casdet {
namespace {

struct SectionState {
  double z1 = 0.0, z2 = 0.0;
};

inline double step(const Biquad& s, SectionState& st, double x) {
  const double y = s.b0 * x + st.z1;
  st.z1 = s.b1 * x - s.a1 * y + st.z2;
  st.z2 = s.b2 * x - s.a2 * y;
  return y;
}

// State for which a constant input `x` produces a constant output.
SectionState steady_state(const Biquad& s, double x) {
  const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  const double y = gain * x;
  SectionState st;
  st.z2 = s.b2 * x - s.a2 * y;
  st.z1 = s.b1 * x - s.a1 * y + st.z2;
  return st;
}

void run_cascade(std::span<const Biquad> sections, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x.front();
  for (const auto& s : sections) {
    SectionState st = steady_state(s, level);
    level *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    for (double& v : x) v = step(s, st, v);
  }
}

}  // namespace

std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double sample_rate) {
  if (order <= 0 || order % 2 != 0) throw DataError("Butterworth order must be positive and even");
  if (!(cutoff_hz > 0.0) || !(2.0 * cutoff_hz < sample_rate)) {
    throw DataError("sample rate " + std::to_string(sample_rate) + " Hz too low for a " +
                    std::to_string(cutoff_hz) + " Hz cutoff");
  }
  using cd = std::complex<double>;
  const double fs2 = 2.0 * sample_rate;
  const double warped = fs2 * std::tan(std::numbers::pi * cutoff_hz / sample_rate);
  std::vector<Biquad> out;
  for (int k = 0; k < order / 2; ++k) {
    // Upper-half-plane low-pass prototype pole; its conjugate completes the pair.
    const double theta = std::numbers::pi * (2.0 * k + 1.0 + order) / (2.0 * order);
    const cd proto = std::polar(1.0, theta);
    const cd analog = warped / proto;  // low-pass to high-pass: s -> wc / s
    const cd z = (fs2 + analog) / (fs2 - analog);
    Biquad s{1.0, -2.0, 1.0, -2.0 * z.real(), std::norm(z)};
    const double nyquist_gain = 4.0 / (1.0 - s.a1 + s.a2);
    s.b0 /= nyquist_gain;
    s.b1 /= nyquist_gain;
    s.b2 /= nyquist_gain;
    out.push_back(s);
  }
  return out;
}

std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : sections) {
    SectionState st;
    for (double& v : y) v = step(s, st, v);
  }
  return y;
}

std::vector<double> sosfiltfilt(std::span<const Biquad> sections, std::span<const double> x,
                                std::size_t padlen) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  padlen = std::min(padlen, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  run_cascade(sections, ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(sections, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

}  // namespace casdet
