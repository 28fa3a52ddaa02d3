#pragma once

#include <span>
#include <vector>

namespace casdet {

// One second-order section, a0 normalised to 1.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

// Digital Butterworth high-pass via the bilinear transform with a prewarped
// cutoff. Each section has unity gain at Nyquist. `order` must be even.
std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double sample_rate);

// Causal cascade, transposed direct form II, zero initial state.
std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x);

// Zero-phase forward-backward filtering with odd-reflection padding and
// steady-state initial conditions.
std::vector<double> sosfiltfilt(std::span<const Biquad> sections, std::span<const double> x,
                                std::size_t padlen);

}  // namespace casdet
