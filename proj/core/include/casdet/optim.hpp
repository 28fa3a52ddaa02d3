#pragma once

#include <cstdint>
#include <vector>

#include "casdet/layers.hpp"

namespace casdet {

inline constexpr double kProbabilityClamp = 1e-7;

struct LossResult {
  double loss = 0.0;
  Tensor gradient;  // d(loss)/d(probabilities)
};

// Mean binary cross-entropy over every element. Probabilities are clamped to
// [1e-7, 1 - 1e-7]; the gradient is zero where clamping applied.
LossResult bce_loss(const Tensor& probabilities, const Tensor& targets);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

AdamState make_adam_state(const std::vector<Parameter*>& params, const AdamConfig& config = {});

// Bias-corrected Adam update of every trainable parameter from its `grad`.
// Throws NumericError naming the parameter when a gradient is non-finite.
void adam_step(const std::vector<Parameter*>& params, AdamState& state);

}  // namespace casdet
