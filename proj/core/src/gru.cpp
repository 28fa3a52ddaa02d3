#include "casdet/gru.hpp"

#include <Eigen/Core>

#include <cmath>

#include "casdet/error.hpp"

namespace casdet {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstStridedMat = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedMat = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

BiGRU::BiGRU(std::string name, const BiGruSpec& spec, std::mt19937_64& rng)
    : Layer(std::move(name)), spec_(spec) {
  if (spec.input_size == 0 || spec.hidden == 0) throw DataError(this->name() + ": BiGRU extents must be positive");
  const std::size_t d = spec.input_size, h = spec.hidden;
  const char* dir_names[2] = {"forward", "backward"};
  const double k_limit = std::sqrt(3.0 / static_cast<double>(d));
  const double r_limit = 1.0 / std::sqrt(static_cast<double>(h));
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string prefix = this->name() + "/" + dir_names[i];
    Direction& dir = dirs_[i];
    dir.kernel = {prefix + "/kernel", Tensor({d, 3 * h}), Tensor({d, 3 * h}), true};
    dir.recurrent_kernel = {prefix + "/recurrent_kernel", Tensor({h, 3 * h}), Tensor({h, 3 * h}), true};
    dir.bias = {prefix + "/bias", Tensor({2, 3 * h}), Tensor({2, 3 * h}), true};
    for (double& w : dir.kernel.value.values()) w = uniform_symmetric(rng, k_limit);
    for (double& w : dir.recurrent_kernel.value.values()) w = uniform_symmetric(rng, r_limit);
  }
}

Shape BiGRU::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[2] != spec_.input_size) {
    throw ShapeError(name() + ": expected [N, T, " + std::to_string(spec_.input_size) +
                     "], got " + to_string(input));
  }
  if (input[1] == 0) throw ShapeError(name() + ": empty sequence");
  return {input[0], input[1], 2 * spec_.hidden};
}

std::vector<Parameter*> BiGRU::parameters() {
  std::vector<Parameter*> out;
  for (auto& d : dirs_) {
    out.push_back(&d.kernel);
    out.push_back(&d.recurrent_kernel);
    out.push_back(&d.bias);
  }
  return out;
}

void BiGRU::run_direction(std::size_t d, const double* x, std::size_t steps, double* out,
                          std::size_t out_stride, StepCache* cache) const {
  const auto in = static_cast<Eigen::Index>(spec_.input_size);
  const auto h = static_cast<Eigen::Index>(spec_.hidden);
  const auto t_len = static_cast<Eigen::Index>(steps);
  const Direction& dir = dirs_[d];
  const ConstMapMat w(dir.kernel.value.data(), in, 3 * h);
  const ConstMapMat u(dir.recurrent_kernel.value.data(), h, 3 * h);
  const ConstMapMat bias(dir.bias.value.data(), 2, 3 * h);
  const ConstMapMat xs(x, t_len, in);

  RowMat xg = xs * w;
  xg.rowwise() += bias.row(0);
  RowVec state = RowVec::Zero(h);
  RowVec hg(3 * h);
  if (cache) {
    for (auto* v : {&cache->z, &cache->r, &cache->n, &cache->hn, &cache->h_prev}) {
      v->resize(steps * spec_.hidden);
    }
  }
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = d == 0 ? k : steps - 1 - k;
    hg.noalias() = state * u;
    hg += bias.row(1);
    const double* xr = xg.data() + t * 3 * spec_.hidden;
    double* o = out + t * out_stride;
    for (std::size_t j = 0; j < spec_.hidden; ++j) {
      const std::size_t hh = spec_.hidden;
      const double z = sigmoid(xr[j] + hg[static_cast<Eigen::Index>(j)]);
      const double r = sigmoid(xr[hh + j] + hg[static_cast<Eigen::Index>(hh + j)]);
      const double hn = hg[static_cast<Eigen::Index>(2 * hh + j)];
      const double n = std::tanh(xr[2 * hh + j] + r * hn);
      const double prev = state[static_cast<Eigen::Index>(j)];
      const double next = z * prev + (1.0 - z) * n;
      if (cache) {
        const std::size_t c = t * hh + j;
        cache->z[c] = z;
        cache->r[c] = r;
        cache->n[c] = n;
        cache->hn[c] = hn;
        cache->h_prev[c] = prev;
      }
      o[j] = next;
    }
    for (std::size_t j = 0; j < spec_.hidden; ++j) state[static_cast<Eigen::Index>(j)] = o[j];
  }
}

Tensor BiGRU::forward(const Tensor& x, Mode mode) {
  const Shape out_shape = output_shape(x.shape());
  const std::size_t n = x.dim(0), t = x.dim(1), d = x.dim(2), h = spec_.hidden;
  Tensor y(out_shape);
  const bool train = mode == Mode::kTrain;
  if (train) caches_.assign(2 * n, StepCache{});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t dir = 0; dir < 2; ++dir) {
      run_direction(dir, x.data() + s * t * d, t, y.data() + s * t * 2 * h + dir * h, 2 * h,
                    train ? &caches_[2 * s + dir] : nullptr);
    }
  }
  cached_ = train;
  input_ = train ? x : Tensor();
  if (!train) caches_.clear();
  return y;
}

void BiGRU::backprop_direction(std::size_t d, const double* x, std::size_t steps,
                               const double* dout, std::size_t dout_stride,
                               const StepCache& cache, double* dx) {
  const std::size_t hh = spec_.hidden;
  const auto in = static_cast<Eigen::Index>(spec_.input_size);
  const auto h = static_cast<Eigen::Index>(hh);
  const auto t_len = static_cast<Eigen::Index>(steps);
  Direction& dir = dirs_[d];
  const ConstMapMat w(dir.kernel.value.data(), in, 3 * h);
  const ConstMapMat u(dir.recurrent_kernel.value.data(), h, 3 * h);
  MapMat dw(dir.kernel.grad.data(), in, 3 * h);
  MapMat du(dir.recurrent_kernel.grad.data(), h, 3 * h);
  MapMat dbias(dir.bias.grad.data(), 2, 3 * h);

  RowMat dxg(t_len, 3 * h);  // gradient w.r.t. input-side gate pre-activations
  RowMat dhg(t_len, 3 * h);  // gradient w.r.t. recurrent-side products
  RowVec carry = RowVec::Zero(h);
  for (std::size_t k = 0; k < steps; ++k) {
    // Reverse of the forward visiting order.
    const std::size_t t = d == 0 ? steps - 1 - k : k;
    const double* g_out = dout + t * dout_stride;
    double* gx = dxg.data() + t * 3 * hh;
    double* gh = dhg.data() + t * 3 * hh;
    RowVec next_carry(h);
    for (std::size_t j = 0; j < hh; ++j) {
      const std::size_t c = t * hh + j;
      const double dh = g_out[j] + carry[static_cast<Eigen::Index>(j)];
      const double z = cache.z[c], r = cache.r[c], n = cache.n[c], hn = cache.hn[c];
      const double prev = cache.h_prev[c];
      const double dz = dh * (prev - n);
      const double dn = dh * (1.0 - z);
      const double da_n = dn * (1.0 - n * n);
      const double dr = da_n * hn;
      const double da_r = dr * r * (1.0 - r);
      const double da_z = dz * z * (1.0 - z);
      gx[j] = da_z;
      gx[hh + j] = da_r;
      gx[2 * hh + j] = da_n;
      gh[j] = da_z;
      gh[hh + j] = da_r;
      gh[2 * hh + j] = da_n * r;
      next_carry[static_cast<Eigen::Index>(j)] = dh * z;
    }
    const Eigen::Map<const RowVec> ghv(gh, 3 * h);
    next_carry.noalias() += ghv * u.transpose();
    carry = next_carry;
  }

  // h_prev rows form the matrix of previous states indexed by time step.
  const ConstMapMat prev(cache.h_prev.data(), t_len, h);
  const ConstMapMat xs(x, t_len, in);
  du.noalias() += prev.transpose() * dhg;
  dw.noalias() += xs.transpose() * dxg;
  dbias.row(0) += dxg.colwise().sum();
  dbias.row(1) += dhg.colwise().sum();
  MapMat dxs(dx, t_len, in);
  dxs.noalias() += dxg * w.transpose();
}

Tensor BiGRU::backward(const Tensor& dy) {
  require_cache(cached_);
  require_shape(dy, output_shape(input_.shape()), name() + " backward");
  const std::size_t n = input_.dim(0), t = input_.dim(1), d = input_.dim(2), h = spec_.hidden;
  Tensor dx(input_.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t dir = 0; dir < 2; ++dir) {
      backprop_direction(dir, input_.data() + s * t * d, t, dy.data() + s * t * 2 * h + dir * h,
                         2 * h, caches_[2 * s + dir], dx.data() + s * t * d);
    }
  }
  return dx;
}

}  // namespace casdet
