#pragma once

#include "casdet/layers.hpp"

namespace casdet {

struct BiGruSpec {
  std::size_t input_size = 1;
  std::size_t hidden = 1;  // per direction
};

// Bidirectional GRU over [N, T, D] -> [N, T, 2H] (forward states, then
// backward states). Gate order in the packed matrices is update, reset,
// candidate; each direction carries an input-side and a recurrent-side bias:
//
//   z = sigmoid(x Wz + bz + h Uz + cz)
//   r = sigmoid(x Wr + br + h Ur + cr)
//   n = tanh(x Wn + bn + r * (h Un + cn))
//   h' = z * h + (1 - z) * n
class BiGRU final : public Layer {
 public:
  BiGRU(std::string name, const BiGruSpec& spec, std::mt19937_64& rng);
  std::string kind() const override { return "BiGRU"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<Parameter*> parameters() override;
  const BiGruSpec& spec() const { return spec_; }

  struct Direction {
    Parameter kernel;            // [D, 3H]
    Parameter recurrent_kernel;  // [H, 3H]
    Parameter bias;              // [2, 3H]: input side, recurrent side
  };
  Direction& direction(std::size_t d) { return dirs_[d]; }

 private:
  // Per-sample, per-direction context for backpropagation through time.
  struct StepCache {
    std::vector<double> z, r, n, hn, h_prev;  // each [T * H]
  };

  void run_direction(std::size_t d, const double* x, std::size_t steps, double* out,
                     std::size_t out_stride, StepCache* cache) const;
  void backprop_direction(std::size_t d, const double* x, std::size_t steps, const double* dout,
                          std::size_t dout_stride, const StepCache& cache, double* dx);

  BiGruSpec spec_;
  Direction dirs_[2];
  Tensor input_;
  std::vector<StepCache> caches_;  // [N * 2]
  bool cached_ = false;
};

}  // namespace casdet
