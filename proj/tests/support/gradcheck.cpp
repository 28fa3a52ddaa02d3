#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace casdet::testing {

double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale) {
  Tensor t(shape);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : t.values()) v = u(rng);
  return t;
}

GradCheckResult grad_check(Layer& layer, const Tensor& x, std::mt19937_64& rng,
                           const std::function<void()>& before_forward, double step) {
  auto run = [&](const Tensor& input) {
    if (before_forward) before_forward();
    return layer.forward(input, Mode::kTrain);
  };
  const Tensor y0 = run(x);
  const Tensor w = random_tensor(y0.shape(), rng);
  auto objective = [&](const Tensor& input) {
    const Tensor y = run(input);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };

  layer.zero_grad();
  run(x);
  const Tensor dx = layer.backward(w);

  std::vector<std::pair<std::string, std::pair<std::vector<double>, std::vector<double>>>> pairs;

  // One-sided differences agree to O(h) on smooth functions; a larger gap
  // means a kink (ReLU, max) lies within the step.
  bool smooth = true;
  auto central = [&](const std::function<double(double)>& at) {
    const double up = at(step), mid = at(0.0), down = at(-step);
    const double fwd = (up - mid) / step, bwd = (mid - down) / step;
    if (std::abs(fwd - bwd) > 1e-3 * std::max(1.0, std::abs(fwd + bwd) / 2)) smooth = false;
    return (up - down) / (2.0 * step);
  };

  std::vector<double> numeric(x.size());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    numeric[i] = central([&](double h) {
      probe[i] = x[i] + h;
      const double v = objective(probe);
      probe[i] = x[i];
      return v;
    });
  }
  pairs.push_back({"input", {dx.to_vector(), numeric}});

  for (Parameter* p : layer.parameters()) {
    if (!p->trainable) continue;
    const std::vector<double> analytic = p->grad.to_vector();
    std::vector<double> num(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      num[i] = central([&](double h) {
        p->value[i] = keep + h;
        const double v = objective(x);
        p->value[i] = keep;
        return v;
      });
    }
    pairs.push_back({p->name, {analytic, num}});
  }

  // Errors are relative to the tensor's own gradient, floored at a small
  // fraction of the largest gradient in the check.
  double scale = 0.0;
  for (const auto& [name, ab] : pairs) {
    double n = 0.0;
    for (double v : ab.second) n += v * v;
    scale = std::max(scale, std::sqrt(n));
  }
  const double floor = std::max(1e-6, 1e-3 * scale);
  GradCheckResult result;
  result.smooth = smooth;
  for (const auto& [name, ab] : pairs) {
    const double e = relative_error(ab.first, ab.second, floor);
    if (e > result.max_rel_error || result.worst.empty()) {
      result.max_rel_error = e;
      result.worst = name;
    }
  }
  return result;
}

}  // namespace casdet::testing
