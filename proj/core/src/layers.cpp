#include "casdet/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "casdet/error.hpp"

namespace casdet {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using StridedMat = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMat = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

// Target im2col tile size in doubles (about 2 MiB).
constexpr std::size_t kTileBudget = 1u << 18;

void require_nchw(const Shape& s, const std::string& who) {
  if (s.size() != 4) throw ShapeError(who + ": expected [N, C, H, W], got " + to_string(s));
}

}  // namespace

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

double uniform_symmetric(std::mt19937_64& rng, double limit) {
  return (2.0 * uniform01(rng) - 1.0) * limit;
}

void Layer::zero_grad() {
  for (Parameter* p : parameters()) {
    if (p->trainable) p->grad.fill(0.0);
  }
}

std::size_t Layer::trainable_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

std::size_t Layer::total_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Layer::require_cache(bool present) const {
  if (!present) throw std::logic_error(name_ + ": backward called without a train-mode forward");
}

// --- Conv2D -----------------------------------------------------------------

Conv2D::Conv2D(std::string name, const Conv2DSpec& spec, std::mt19937_64& rng)
    : Layer(std::move(name)), spec_(spec) {
  if (spec.kernel_h == 0 || spec.kernel_w == 0 || spec.in_channels == 0 || spec.out_channels == 0) {
    throw DataError(this->name() + ": Conv2D extents must be positive");
  }
  const Shape kshape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  kernel_ = {this->name() + "/kernel", Tensor(kshape), Tensor(kshape), true};
  bias_ = {this->name() + "/bias", Tensor({spec.out_channels}), Tensor({spec.out_channels}), true};
  const double limit =
      std::sqrt(6.0 / static_cast<double>(spec.in_channels * spec.kernel_h * spec.kernel_w));
  for (double& w : kernel_.value.values()) w = uniform_symmetric(rng, limit);
}

Shape Conv2D::output_shape(const Shape& input) const {
  require_nchw(input, name());
  if (input[1] != spec_.in_channels) {
    throw ShapeError(name() + ": expected " + std::to_string(spec_.in_channels) +
                     " input channels, got shape " + to_string(input));
  }
  return {input[0], spec_.out_channels, input[2], input[3]};
}

std::size_t Conv2D::rows_per_tile(std::size_t width) const {
  const std::size_t k = spec_.in_channels * spec_.kernel_h * spec_.kernel_w;
  return std::max<std::size_t>(1, kTileBudget / std::max<std::size_t>(1, k * width));
}

void Conv2D::im2col(const double* plane, std::size_t height, std::size_t width, std::size_t y0,
                    std::size_t y1, double* cols) const {
  const std::size_t p = (y1 - y0) * width;
  const auto pad_t = static_cast<std::ptrdiff_t>((spec_.kernel_h - 1) / 2);
  const auto pad_l = static_cast<std::ptrdiff_t>((spec_.kernel_w - 1) / 2);
  const auto w = static_cast<std::ptrdiff_t>(width);
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < spec_.in_channels; ++ci) {
    const double* chan = plane + ci * height * width;
    for (std::size_t i = 0; i < spec_.kernel_h; ++i) {
      for (std::size_t j = 0; j < spec_.kernel_w; ++j, ++r) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad_l;
        const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t x_hi = std::min<std::ptrdiff_t>(w, w - shift);
        double* dst_row = cols + r * p;
        for (std::size_t y = y0; y < y1; ++y) {
          double* dst = dst_row + (y - y0) * width;
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - pad_t;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height) || x_hi <= x_lo) {
            std::fill(dst, dst + width, 0.0);
            continue;
          }
          const double* src = chan + static_cast<std::size_t>(sy) * width;
          std::fill(dst, dst + x_lo, 0.0);
          std::memcpy(dst + x_lo, src + x_lo + shift,
                      static_cast<std::size_t>(x_hi - x_lo) * sizeof(double));
          std::fill(dst + x_hi, dst + width, 0.0);
        }
      }
    }
  }
}

void Conv2D::col2im(const double* cols, std::size_t height, std::size_t width, std::size_t y0,
                    std::size_t y1, double* plane) const {
  const std::size_t p = (y1 - y0) * width;
  const auto pad_t = static_cast<std::ptrdiff_t>((spec_.kernel_h - 1) / 2);
  const auto pad_l = static_cast<std::ptrdiff_t>((spec_.kernel_w - 1) / 2);
  const auto w = static_cast<std::ptrdiff_t>(width);
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < spec_.in_channels; ++ci) {
    double* chan = plane + ci * height * width;
    for (std::size_t i = 0; i < spec_.kernel_h; ++i) {
      for (std::size_t j = 0; j < spec_.kernel_w; ++j, ++r) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad_l;
        const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t x_hi = std::min<std::ptrdiff_t>(w, w - shift);
        const double* src_row = cols + r * p;
        for (std::size_t y = y0; y < y1; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - pad_t;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
          const double* src = src_row + (y - y0) * width;
          double* dst = chan + static_cast<std::size_t>(sy) * width + shift;
          for (std::ptrdiff_t x = x_lo; x < x_hi; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

Tensor Conv2D::forward(const Tensor& x, Mode mode) {
  const Shape out_shape = output_shape(x.shape());
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = spec_.out_channels;
  const std::size_t k = spec_.in_channels * spec_.kernel_h * spec_.kernel_w;
  const std::size_t rows = rows_per_tile(w);
  Tensor y(out_shape);
  AlignedBuffer cols(k * std::min(rows, h) * w);
  const ConstMapMat kernel(kernel_.value.data(), static_cast<Eigen::Index>(cout),
                           static_cast<Eigen::Index>(k));
  const ConstMapVec bias(bias_.value.data(), static_cast<Eigen::Index>(cout));
  for (std::size_t s = 0; s < n; ++s) {
    const double* in_plane = x.data() + s * spec_.in_channels * h * w;
    double* out_plane = y.data() + s * cout * h * w;
    for (std::size_t y0 = 0; y0 < h; y0 += rows) {
      const std::size_t y1 = std::min(h, y0 + rows);
      const auto p = static_cast<Eigen::Index>((y1 - y0) * w);
      im2col(in_plane, h, w, y0, y1, cols.data());
      const ConstMapMat c(cols.data(), static_cast<Eigen::Index>(k), p);
      StridedMat out(out_plane + y0 * w, static_cast<Eigen::Index>(cout), p,
                     Eigen::OuterStride<>(static_cast<Eigen::Index>(h * w)));
      out.noalias() = kernel * c;
      out.colwise() += bias;
    }
  }
  cached_ = mode == Mode::kTrain;
  if (cached_) {
    input_ = x;
  } else {
    input_ = Tensor();
  }
  return y;
}

Tensor Conv2D::backward(const Tensor& dy) {
  require_cache(cached_);
  require_shape(dy, output_shape(input_.shape()), name() + " backward");
  const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const std::size_t cout = spec_.out_channels;
  const std::size_t k = spec_.in_channels * spec_.kernel_h * spec_.kernel_w;
  const std::size_t rows = rows_per_tile(w);
  Tensor dx(input_.shape());
  AlignedBuffer cols(k * std::min(rows, h) * w);
  AlignedBuffer dcols(cols.size());
  const ConstMapMat kernel(kernel_.value.data(), static_cast<Eigen::Index>(cout),
                           static_cast<Eigen::Index>(k));
  MapMat dkernel(kernel_.grad.data(), static_cast<Eigen::Index>(cout),
                 static_cast<Eigen::Index>(k));
  MapVec dbias(bias_.grad.data(), static_cast<Eigen::Index>(cout));
  for (std::size_t s = 0; s < n; ++s) {
    const double* in_plane = input_.data() + s * spec_.in_channels * h * w;
    const double* dy_plane = dy.data() + s * cout * h * w;
    double* dx_plane = dx.data() + s * spec_.in_channels * h * w;
    for (std::size_t y0 = 0; y0 < h; y0 += rows) {
      const std::size_t y1 = std::min(h, y0 + rows);
      const auto p = static_cast<Eigen::Index>((y1 - y0) * w);
      im2col(in_plane, h, w, y0, y1, cols.data());
      const ConstMapMat c(cols.data(), static_cast<Eigen::Index>(k), p);
      const ConstStridedMat g(dy_plane + y0 * w, static_cast<Eigen::Index>(cout), p,
                              Eigen::OuterStride<>(static_cast<Eigen::Index>(h * w)));
      dkernel.noalias() += g * c.transpose();
      dbias += g.rowwise().sum();
      MapMat dc(dcols.data(), static_cast<Eigen::Index>(k), p);
      dc.noalias() = kernel.transpose() * g;
      col2im(dcols.data(), h, w, y0, y1, dx_plane);
    }
  }
  return dx;
}

// --- BatchNorm --------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, const BatchNormSpec& spec)
    : Layer(std::move(name)), spec_(spec) {
  if (spec.channels == 0) throw DataError(this->name() + ": BatchNorm needs channels > 0");
  const Shape s{spec.channels};
  gamma_ = {this->name() + "/gamma", Tensor(s, 1.0), Tensor(s), true};
  beta_ = {this->name() + "/beta", Tensor(s), Tensor(s), true};
  running_mean_ = {this->name() + "/moving_mean", Tensor(s), Tensor(s), false};
  running_var_ = {this->name() + "/moving_variance", Tensor(s, 1.0), Tensor(s), false};
}

Shape BatchNorm::output_shape(const Shape& input) const {
  require_nchw(input, name());
  if (input[1] != spec_.channels) {
    throw ShapeError(name() + ": expected " + std::to_string(spec_.channels) +
                     " channels, got shape " + to_string(input));
  }
  return input;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  output_shape(x.shape());
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * plane);
  Tensor y(x.shape());
  if (mode == Mode::kInfer) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(running_var_.value[ch] + spec_.epsilon);
      const double scale = gamma_.value[ch] * inv;
      const double shift = beta_.value[ch] - running_mean_.value[ch] * scale;
      for (std::size_t s = 0; s < n; ++s) {
        const double* src = x.data() + (s * c + ch) * plane;
        double* dst = y.data() + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
      }
    }
    cached_ = false;
    return y;
  }
  x_hat_ = Tensor(x.shape());
  inv_std_.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double* src = x.data() + (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double* src = x.data() + (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) ss += (src[i] - mean) * (src[i] - mean);
    }
    const double var = ss / count;
    const double inv = 1.0 / std::sqrt(var + spec_.epsilon);
    inv_std_[ch] = inv;
    for (std::size_t s = 0; s < n; ++s) {
      const double* src = x.data() + (s * c + ch) * plane;
      double* xh = x_hat_.data() + (s * c + ch) * plane;
      double* dst = y.data() + (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mean) * inv;
        dst[i] = gamma_.value[ch] * xh[i] + beta_.value[ch];
      }
    }
    const double m = spec_.momentum;
    running_mean_.value[ch] = m * running_mean_.value[ch] + (1.0 - m) * mean;
    running_var_.value[ch] = m * running_var_.value[ch] + (1.0 - m) * var;
  }
  cached_ = true;
  return y;
}

Tensor BatchNorm::backward(const Tensor& dy) {
  require_cache(cached_);
  require_shape(dy, x_hat_.shape(), name() + " backward");
  const std::size_t n = dy.dim(0), c = dy.dim(1), plane = dy.dim(2) * dy.dim(3);
  const double count = static_cast<double>(n * plane);
  Tensor dx(dy.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double* g = dy.data() + (s * c + ch) * plane;
      const double* xh = x_hat_.data() + (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xh += g[i] * xh[i];
      }
    }
    gamma_.grad[ch] += sum_dy_xh;
    beta_.grad[ch] += sum_dy;
    const double k = gamma_.value[ch] * inv_std_[ch] / count;
    for (std::size_t s = 0; s < n; ++s) {
      const double* g = dy.data() + (s * c + ch) * plane;
      const double* xh = x_hat_.data() + (s * c + ch) * plane;
      double* d = dx.data() + (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        d[i] = k * (count * g[i] - sum_dy - xh[i] * sum_dy_xh);
      }
    }
  }
  return dx;
}

// --- ReLU -------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, Mode mode) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  cached_ = mode == Mode::kTrain;
  input_ = cached_ ? x : Tensor();
  return y;
}

Tensor ReLU::backward(const Tensor& dy) {
  require_cache(cached_);
  require_shape(dy, input_.shape(), name() + " backward");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = input_[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

// --- MaxPool2D --------------------------------------------------------------

Shape MaxPool2D::output_shape(const Shape& input) const {
  require_nchw(input, name());
  const std::size_t h = ceil_mode_ ? (input[2] + 1) / 2 : input[2] / 2;
  const std::size_t w = ceil_mode_ ? (input[3] + 1) / 2 : input[3] / 2;
  if (h == 0 || w == 0) {
    throw ShapeError(name() + ": input " + to_string(input) + " too small for a 2x2 pool");
  }
  return {input[0], input[1], h, w};
}

Tensor MaxPool2D::forward(const Tensor& x, Mode mode) {
  const Shape out_shape = output_shape(x.shape());
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t oh = out_shape[2], ow = out_shape[3];
  Tensor y(out_shape);
  const bool train = mode == Mode::kTrain;
  if (train) argmax_.assign(y.size(), 0);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          const std::size_t iy = 2 * oy + dy;
          if (iy >= h) break;
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t ix = 2 * ox + dx;
            if (ix >= w) break;
            const double v = src[iy * w + ix];
            if (v > best) {
              best = v;
              arg = iy * w + ix;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        y[o] = best;
        if (train) argmax_[o] = p * h * w + arg;
      }
    }
  }
  cached_ = train;
  input_shape_ = x.shape();
  return y;
}

Tensor MaxPool2D::backward(const Tensor& dy) {
  require_cache(cached_);
  require_shape(dy, output_shape(input_shape_), name() + " backward");
  Tensor dx(input_shape_);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
  return dx;
}

// --- Dropout ----------------------------------------------------------------

Dropout::Dropout(std::string name, double rate, std::uint64_t seed)
    : Layer(std::move(name)), rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw DataError(this->name() + ": dropout rate must be in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::kInfer) {
    cached_ = false;
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate_);
  mask_.resize(x.size());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = (rate_ == 0.0 || uniform01(rng_) >= rate_) ? keep_scale : 0.0;
    y[i] = x[i] * mask_[i];
  }
  cached_ = true;
  return y;
}

Tensor Dropout::backward(const Tensor& dy) {
  require_cache(cached_);
  if (dy.size() != mask_.size()) throw ShapeError(name() + " backward: gradient size mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

// --- FlattenPerTimestep -----------------------------------------------------

Shape FlattenPerTimestep::output_shape(const Shape& input) const {
  require_nchw(input, name());
  return {input[0], input[3], input[1] * input[2]};
}

Tensor FlattenPerTimestep::forward(const Tensor& x, Mode mode) {
  const Shape out_shape = output_shape(x.shape());
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t feat = c * h;
  Tensor y(out_shape);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t r = 0; r < h; ++r) {
        const double* src = x.data() + ((s * c + ch) * h + r) * w;
        double* dst = y.data() + s * w * feat + ch * h + r;
        for (std::size_t t = 0; t < w; ++t) dst[t * feat] = src[t];
      }
    }
  }
  input_shape_ = x.shape();
  cached_ = mode == Mode::kTrain;
  return y;
}

Tensor FlattenPerTimestep::backward(const Tensor& dy) {
  require_cache(cached_);
  require_shape(dy, output_shape(input_shape_), name() + " backward");
  const std::size_t n = input_shape_[0], c = input_shape_[1], h = input_shape_[2],
                    w = input_shape_[3];
  const std::size_t feat = c * h;
  Tensor dx(input_shape_);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t r = 0; r < h; ++r) {
        double* dst = dx.data() + ((s * c + ch) * h + r) * w;
        const double* src = dy.data() + s * w * feat + ch * h + r;
        for (std::size_t t = 0; t < w; ++t) dst[t] = src[t * feat];
      }
    }
  }
  return dx;
}

// --- Dense ------------------------------------------------------------------

Dense::Dense(std::string name, const DenseSpec& spec, std::mt19937_64& rng)
    : Layer(std::move(name)), spec_(spec) {
  if (spec.in_features == 0 || spec.units == 0) throw DataError(this->name() + ": Dense extents must be positive");
  const Shape ks{spec.in_features, spec.units};
  kernel_ = {this->name() + "/kernel", Tensor(ks), Tensor(ks), true};
  bias_ = {this->name() + "/bias", Tensor({spec.units}), Tensor({spec.units}), true};
  const double limit = std::sqrt(6.0 / static_cast<double>(spec.in_features));
  for (double& w : kernel_.value.values()) w = uniform_symmetric(rng, limit);
}

Shape Dense::output_shape(const Shape& input) const {
  if (input.empty() || input.back() != spec_.in_features) {
    throw ShapeError(name() + ": expected last axis " + std::to_string(spec_.in_features) +
                     ", got shape " + to_string(input));
  }
  Shape out = input;
  out.back() = spec_.units;
  return out;
}

Tensor Dense::forward(const Tensor& x, Mode mode) {
  Tensor y(output_shape(x.shape()));
  const auto rows = static_cast<Eigen::Index>(x.size() / spec_.in_features);
  const ConstMapMat in(x.data(), rows, static_cast<Eigen::Index>(spec_.in_features));
  const ConstMapMat k(kernel_.value.data(), static_cast<Eigen::Index>(spec_.in_features),
                      static_cast<Eigen::Index>(spec_.units));
  const Eigen::Map<const Eigen::RowVectorXd> b(bias_.value.data(),
                                               static_cast<Eigen::Index>(spec_.units));
  MapMat out(y.data(), rows, static_cast<Eigen::Index>(spec_.units));
  out.noalias() = in * k;
  out.rowwise() += b;
  cached_ = mode == Mode::kTrain;
  input_ = cached_ ? x : Tensor();
  return y;
}

Tensor Dense::backward(const Tensor& dy) {
  require_cache(cached_);
  require_shape(dy, output_shape(input_.shape()), name() + " backward");
  const auto rows = static_cast<Eigen::Index>(input_.size() / spec_.in_features);
  const auto in_f = static_cast<Eigen::Index>(spec_.in_features);
  const auto units = static_cast<Eigen::Index>(spec_.units);
  const ConstMapMat in(input_.data(), rows, in_f);
  const ConstMapMat g(dy.data(), rows, units);
  const ConstMapMat k(kernel_.value.data(), in_f, units);
  MapMat dk(kernel_.grad.data(), in_f, units);
  Eigen::Map<Eigen::RowVectorXd> db(bias_.grad.data(), units);
  dk.noalias() += in.transpose() * g;
  db += g.colwise().sum();
  Tensor dx(input_.shape());
  MapMat dxm(dx.data(), rows, in_f);
  dxm.noalias() = g * k.transpose();
  return dx;
}

// --- Sigmoid ----------------------------------------------------------------

Tensor Sigmoid::forward(const Tensor& x, Mode mode) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (v >= 0.0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  cached_ = mode == Mode::kTrain;
  output_ = cached_ ? y : Tensor();
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy) {
  require_cache(cached_);
  require_shape(dy, output_.shape(), name() + " backward");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * output_[i] * (1.0 - output_[i]);
  return dx;
}

// --- ResidualBlock ----------------------------------------------------------

ResidualBlock::ResidualBlock(std::string name, const ResidualSpec& spec, std::mt19937_64& rng)
    : Layer(std::move(name)), spec_(spec) {
  const std::string& n = this->name();
  conv1_ = std::make_unique<Conv2D>(n + "/conv1",
                                    Conv2DSpec{3, 3, spec.in_channels, spec.out_channels}, rng);
  bn_ = std::make_unique<BatchNorm>(n + "/bn", BatchNormSpec{spec.out_channels});
  relu1_ = std::make_unique<ReLU>(n + "/relu1");
  conv2_ = std::make_unique<Conv2D>(n + "/conv2",
                                    Conv2DSpec{3, 3, spec.out_channels, spec.out_channels}, rng);
  if (spec.in_channels != spec.out_channels) {
    if (spec.projection) {
      shortcut_ = std::make_unique<Conv2D>(
          n + "/shortcut", Conv2DSpec{1, 1, spec.in_channels, spec.out_channels}, rng);
    } else if (spec.in_channels != 1) {
      throw DataError(n + ": a parameter-free shortcut needs matching channels or one input channel");
    }
  }
  relu2_ = std::make_unique<ReLU>(n + "/relu2");
}

Shape ResidualBlock::output_shape(const Shape& input) const { return conv1_->output_shape(input); }

Tensor ResidualBlock::forward(const Tensor& x, Mode mode) {
  Tensor main = conv2_->forward(relu1_->forward(bn_->forward(conv1_->forward(x, mode), mode), mode), mode);
  if (shortcut_) {
    const Tensor s = shortcut_->forward(x, mode);
    for (std::size_t i = 0; i < main.size(); ++i) main[i] += s[i];
  } else if (spec_.in_channels == spec_.out_channels) {
    for (std::size_t i = 0; i < main.size(); ++i) main[i] += x[i];
  } else {
    // Broadcast the single input channel over every output channel.
    const std::size_t n = x.dim(0), c = spec_.out_channels, plane = x.dim(2) * x.dim(3);
    for (std::size_t s = 0; s < n; ++s) {
      const double* src = x.data() + s * plane;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double* dst = main.data() + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
    }
  }
  return relu2_->forward(main, mode);
}

Tensor ResidualBlock::backward(const Tensor& dy) {
  const Tensor g = relu2_->backward(dy);
  Tensor dx = conv1_->backward(bn_->backward(relu1_->backward(conv2_->backward(g))));
  if (shortcut_) {
    const Tensor ds = shortcut_->backward(g);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
  } else if (spec_.in_channels == spec_.out_channels) {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  } else {
    const std::size_t n = dx.dim(0), c = spec_.out_channels, plane = dx.dim(2) * dx.dim(3);
    for (std::size_t s = 0; s < n; ++s) {
      double* dst = dx.data() + s * plane;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = g.data() + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
    }
  }
  return dx;
}

std::vector<Parameter*> ResidualBlock::parameters() {
  std::vector<Parameter*> out;
  for (Layer* l : std::initializer_list<Layer*>{conv1_.get(), bn_.get(), conv2_.get(), shortcut_.get()}) {
    if (!l) continue;
    const auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const Layer*> ResidualBlock::children() const {
  std::vector<const Layer*> out{conv1_.get(), bn_.get(), relu1_.get(), conv2_.get()};
  if (shortcut_) out.push_back(shortcut_.get());
  out.push_back(relu2_.get());
  return out;
}

// --- Sequential -------------------------------------------------------------

Shape Sequential::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor y = x;
  for (auto& l : layers_) y = l->forward(y, mode);
  return y;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    const auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const Layer*> Sequential::children() const {
  std::vector<const Layer*> out;
  for (const auto& l : layers_) out.push_back(l.get());
  return out;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t bound) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t b = bound;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % b;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % b);
}

}  // namespace casdet
