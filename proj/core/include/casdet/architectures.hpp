#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "casdet/features.hpp"
#include "casdet/gru.hpp"
#include "casdet/layers.hpp"

namespace casdet {

enum class Variant { kBaseline, kRB1, kRB2, kCNN96, kCNN128, kMultiPath };

inline constexpr Variant kAllVariants[] = {Variant::kBaseline, Variant::kRB1,    Variant::kRB2,
                                           Variant::kCNN96,    Variant::kCNN128, Variant::kMultiPath};

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);  // throws DataError

struct ModelSpec {
  Variant variant = Variant::kBaseline;
  std::size_t conv_kernels = 64;
  std::size_t gru_hidden = 256;
  std::size_t gru_layers = 1;
  // Width of an extra ReLU dense layer between the recurrent stack and the
  // per-step output unit; 0 disables it.
  std::size_t dense_hidden = 0;
  double dropout_rate = 0.1;
  // Scales conv_kernels for desk-sized models.
  double width_scale = 1.0;
  // Pool rounding: floor drops an odd trailing row/column, ceil keeps it.
  bool pool_ceil = false;
  // BatchNorm after the second convolution of each plain conv stack.
  bool stack_batchnorm = false;
  bool residual_projection = true;
  std::uint64_t seed = 1;

  // Reference kernel count for the variant (64, 96 or 128), other fields default.
  static ModelSpec defaults(Variant v);
  // Head/pool layout whose parameter totals reproduce the reference totals
  // (see README, "Parameter accounting").
  static ModelSpec calibrated(Variant v);
  // Quarter-width stacks with a 32-unit recurrent head, sized for single-core
  // training runs.
  static ModelSpec toy(Variant v);

  std::size_t effective_kernels() const;
  // Throws DataError on inconsistent specs.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Rows of the stacked 193-row feature matrix fed to each path.
struct FeatureSlice {
  std::size_t row_begin;
  std::size_t row_end;
  std::size_t rows() const { return row_end - row_begin; }
};

struct LayerReportRow {
  std::string name;
  std::string kind;
  Shape output_shape;
  std::size_t trainable = 0;
  std::size_t total = 0;  // includes batch-norm running statistics
};

struct ArchitectureReport {
  std::string variant;
  std::vector<LayerReportRow> rows;
  std::size_t trainable = 0;
  std::size_t total = 0;

  std::string to_text() const;
  std::string to_json() const;
};

struct Prediction {
  std::vector<double> probabilities;  // 1 x k
  FrameGrid grid;                     // output resolution
};

class Model {
 public:
  explicit Model(const ModelSpec& spec);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  const std::vector<FeatureSlice>& slices() const { return slices_; }

  // [N, 193, F] -> [N, k].
  Tensor forward(const Tensor& features, Mode mode);
  // Takes d(loss)/d(probabilities) of shape [N, k].
  void backward(const Tensor& grad);

  std::vector<Parameter*> parameters();
  void zero_grad();

  std::size_t output_length(std::size_t n_frames) const;
  FrameGrid output_grid(const FrameGrid& input) const;
  std::size_t flattened_width() const;  // per-step input width of the BiGRU

  std::size_t count_trainable();
  std::size_t count_total();
  ArchitectureReport report(std::size_t n_frames = 938);

  Sequential& path(std::size_t i) { return *paths_.at(i); }
  Sequential& head() { return *head_; }
  // Final per-step output unit.
  Dense& output_layer();

  std::vector<Tensor> snapshot();
  void restore(const std::vector<Tensor>& values);

 private:
  ModelSpec spec_;
  std::vector<FeatureSlice> slices_;
  std::vector<std::unique_ptr<Sequential>> paths_;
  std::unique_ptr<Sequential> head_;
  Dense* output_ = nullptr;
  std::vector<Shape> path_out_shapes_;
};

Model build_model(const ModelSpec& spec);

// Parameters of the layers in one convolutional path, summed directly.
std::size_t count_path_params(Model& model, std::size_t path, bool include_buffers = false);

// Stacks features into a [1, 193, F] batch tensor.
Tensor to_batch(const std::vector<const FeatureMatrix*>& features);

Prediction predict(Model& model, const FeatureMatrix& features);

}  // namespace casdet
