#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "casdet/tensor.hpp"

namespace casdet {

enum class Mode { kTrain, kInfer };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // Non-trainable state (batch-norm running statistics) is checkpointed but
  // never touched by the optimizer.
  bool trainable = true;
};

// A layer owns its parameters and the context cached by the last train-mode
// forward pass; backward consumes that context.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;
  // Throws ShapeError when `input` violates the layer's input contract.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  // Returns d(loss)/d(input) and accumulates parameter gradients.
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::vector<const Layer*> children() const { return {}; }

  void zero_grad();
  std::size_t trainable_count();
  std::size_t total_count();

 protected:
  void require_cache(bool present) const;

 private:
  std::string name_;
};

using LayerPtr = std::unique_ptr<Layer>;

struct Conv2DSpec {
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
};

// Same-padded, stride-1 cross-correlation on [N, C, H, W]. Even kernels pad
// (k-1)/2 before and the remainder after.
class Conv2D final : public Layer {
 public:
  Conv2D(std::string name, const Conv2DSpec& spec, std::mt19937_64& rng);
  std::string kind() const override { return "Conv2D"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<Parameter*> parameters() override { return {&kernel_, &bias_}; }
  const Conv2DSpec& spec() const { return spec_; }
  Parameter& kernel() { return kernel_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t rows_per_tile(std::size_t width) const;
  void im2col(const double* plane, std::size_t height, std::size_t width, std::size_t y0,
              std::size_t y1, double* cols) const;
  void col2im(const double* cols, std::size_t height, std::size_t width, std::size_t y0,
              std::size_t y1, double* plane) const;

  Conv2DSpec spec_;
  Parameter kernel_;  // [out, in, kh, kw]
  Parameter bias_;    // [out]
  Tensor input_;
  bool cached_ = false;
};

struct BatchNormSpec {
  std::size_t channels = 1;
  double epsilon = 1e-5;
  double momentum = 0.99;
};

// Per-channel normalisation of [N, C, H, W]; running = m * running + (1-m) * batch.
class BatchNorm final : public Layer {
 public:
  BatchNorm(std::string name, const BatchNormSpec& spec);
  std::string kind() const override { return "BatchNorm"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<Parameter*> parameters() override {
    return {&gamma_, &beta_, &running_mean_, &running_var_};
  }
  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }

 private:
  BatchNormSpec spec_;
  Parameter gamma_, beta_, running_mean_, running_var_;
  Tensor x_hat_;
  std::vector<double> inv_std_;
  bool cached_ = false;
};

class ReLU final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "ReLU"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor input_;
  bool cached_ = false;
};

// 2x2 window, stride 2, over the last two axes of [N, C, H, W]. Floor mode
// drops a trailing odd row/column; ceil mode keeps it as a partial window.
class MaxPool2D final : public Layer {
 public:
  MaxPool2D(std::string name, bool ceil_mode = false)
      : Layer(std::move(name)), ceil_mode_(ceil_mode) {}
  std::string kind() const override { return "MaxPool2D"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;

 private:
  bool ceil_mode_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

// Inverted dropout: train mode scales kept units by 1/(1-rate).
class Dropout final : public Layer {
 public:
  Dropout(std::string name, double rate, std::uint64_t seed);
  std::string kind() const override { return "Dropout"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  double rate() const { return rate_; }

 private:
  double rate_;
  std::mt19937_64 rng_;
  std::vector<double> mask_;
  bool cached_ = false;
};

// [N, C, H, W] -> [N, W, C*H]; feature index is c * H + h.
class FlattenPerTimestep final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "FlattenPerTimestep"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Shape input_shape_;
  bool cached_ = false;
};

struct DenseSpec {
  std::size_t in_features = 1;
  std::size_t units = 1;
};

// Affine map over the last axis.
class Dense final : public Layer {
 public:
  Dense(std::string name, const DenseSpec& spec, std::mt19937_64& rng);
  std::string kind() const override { return "Dense"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<Parameter*> parameters() override { return {&kernel_, &bias_}; }
  Parameter& kernel() { return kernel_; }
  Parameter& bias() { return bias_; }

 private:
  DenseSpec spec_;
  Parameter kernel_;  // [in, units]
  Parameter bias_;    // [units]
  Tensor input_;
  bool cached_ = false;
};

class Sigmoid final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "Sigmoid"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor output_;
  bool cached_ = false;
};

struct ResidualSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  // 1x1 convolution on the shortcut when channel counts differ. Without it a
  // single-channel input is broadcast across the output channels.
  bool projection = true;
};

// conv3x3 -> BatchNorm -> ReLU -> conv3x3 -> (+ shortcut) -> ReLU
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(std::string name, const ResidualSpec& spec, std::mt19937_64& rng);
  std::string kind() const override { return "ResidualBlock"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<Parameter*> parameters() override;
  std::vector<const Layer*> children() const override;

  Conv2D& conv1() { return *conv1_; }
  Conv2D& conv2() { return *conv2_; }
  BatchNorm& batch_norm() { return *bn_; }
  Conv2D* projection() { return shortcut_.get(); }

 private:
  ResidualSpec spec_;
  std::unique_ptr<Conv2D> conv1_;
  std::unique_ptr<BatchNorm> bn_;
  std::unique_ptr<ReLU> relu1_;
  std::unique_ptr<Conv2D> conv2_;
  std::unique_ptr<Conv2D> shortcut_;
  std::unique_ptr<ReLU> relu2_;
};

// Ordered chain of layers.
class Sequential final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "Sequential"; }
  void add(LayerPtr layer) { layers_.push_back(std::move(layer)); }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<Parameter*> parameters() override;
  std::vector<const Layer*> children() const override;

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }
  const Layer& at(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<LayerPtr> layers_;
};

// Uniform(-limit, limit) from the engine's raw bits; identical across
// standard libraries.
double uniform_symmetric(std::mt19937_64& rng, double limit);
double uniform01(std::mt19937_64& rng);
// Uniform index in [0, bound) from raw engine bits (library-independent).
std::size_t uniform_index(std::mt19937_64& rng, std::size_t bound);

}  // namespace casdet
