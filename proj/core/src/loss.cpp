#include <algorithm>
#include <cmath>

#include "casdet/error.hpp"
#include "casdet/optim.hpp"

namespace casdet {

LossResult bce_loss(const Tensor& probabilities, const Tensor& targets) {
  require_shape(targets, probabilities.shape(), "bce_loss targets");
  if (probabilities.empty()) throw DataError("bce_loss on an empty tensor");
  LossResult out{0.0, Tensor(probabilities.shape())};
  const double n = static_cast<double>(probabilities.size());
  constexpr double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double raw = probabilities[i];
    const double y = targets[i];
    if (!std::isfinite(raw) || raw < 0.0 || raw > 1.0) {
      throw NumericError("bce_loss: probability " + std::to_string(raw) + " outside (0, 1)");
    }
    if (y != 0.0 && y != 1.0) throw DataError("bce_loss: target must be 0 or 1");
    const double p = std::clamp(raw, lo, hi);
    out.loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if (raw > lo && raw < hi) out.gradient[i] = (p - y) / (p * (1.0 - p) * n);
  }
  out.loss /= n;
  return out;
}

}  // namespace casdet
