#include <cmath>

#include "casdet/error.hpp"
#include "casdet/optim.hpp"

namespace casdet {

AdamState make_adam_state(const std::vector<Parameter*>& params, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  for (const Parameter* p : params) {
    state.m.emplace_back(p->value.shape());
    state.v.emplace_back(p->value.shape());
  }
  return state;
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state) {
  if (params.size() != state.m.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (!p.trainable) continue;
    if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape()) {
      throw ShapeError("adam_step: shape mismatch for " + p.name);
    }
    if (!p.grad.all_finite()) throw NumericError("adam_step: non-finite gradient in " + p.name);
  }
  ++state.t;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace casdet
