#include "casdet/architectures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "casdet/error.hpp"
#include "json.hpp"

namespace casdet {
namespace {

constexpr FeatureSlice kAllRows{0, kFeatureRows};
constexpr FeatureSlice kSpectrogramRows{0, kFreqBins};
constexpr FeatureSlice kCepstralEnergyRows{kFreqBins, kFeatureRows};

void add_conv_stack(Sequential& seq, const ModelSpec& spec, std::size_t kernels,
                    std::mt19937_64& rng) {
  const std::string& p = seq.name();
  seq.add(std::make_unique<Conv2D>(p + "/conv1", Conv2DSpec{6, 6, 1, kernels}, rng));
  seq.add(std::make_unique<ReLU>(p + "/relu1"));
  seq.add(std::make_unique<Conv2D>(p + "/conv2", Conv2DSpec{4, 4, kernels, kernels}, rng));
  if (spec.stack_batchnorm) seq.add(std::make_unique<BatchNorm>(p + "/bn", BatchNormSpec{kernels}));
  seq.add(std::make_unique<ReLU>(p + "/relu2"));
}

void add_residual_stack(Sequential& seq, const ModelSpec& spec, std::size_t kernels,
                        std::size_t blocks, std::mt19937_64& rng) {
  std::size_t in = 1;
  for (std::size_t b = 0; b < blocks; ++b) {
    seq.add(std::make_unique<ResidualBlock>(seq.name() + "/rb" + std::to_string(b + 1),
                                            ResidualSpec{in, kernels, spec.residual_projection},
                                            rng));
    in = kernels;
  }
}

void collect_rows(const Layer& layer, Shape& shape, std::vector<LayerReportRow>& rows) {
  auto& mutable_layer = const_cast<Layer&>(layer);
  shape = layer.output_shape(shape);
  rows.push_back({layer.name(), layer.kind(), shape, mutable_layer.trainable_count(),
                  mutable_layer.total_count()});
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kRB1: return "rb1";
    case Variant::kRB2: return "rb2";
    case Variant::kCNN96: return "cnn96";
    case Variant::kCNN128: return "cnn128";
    case Variant::kMultiPath: return "multipath";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  for (Variant v : kAllVariants) {
    if (to_string(v) == n) return v;
  }
  if (n == "multi-path" || n == "multi_path") return Variant::kMultiPath;
  throw DataError("unknown model variant '" + name +
                  "' (expected baseline, rb1, rb2, cnn96, cnn128, multipath)");
}

ModelSpec ModelSpec::defaults(Variant v) {
  ModelSpec s;
  s.variant = v;
  s.conv_kernels = v == Variant::kCNN96 ? 96 : v == Variant::kCNN128 ? 128 : 64;
  return s;
}

ModelSpec ModelSpec::calibrated(Variant v) {
  ModelSpec s = defaults(v);
  s.gru_hidden = 128;
  s.gru_layers = 2;
  s.dense_hidden = 32;
  s.pool_ceil = true;
  s.stack_batchnorm = true;
  s.residual_projection = false;
  return s;
}

ModelSpec ModelSpec::toy(Variant v) {
  ModelSpec s = defaults(v);
  s.width_scale = 0.25;
  s.gru_hidden = 32;
  return s;
}

std::size_t ModelSpec::effective_kernels() const {
  const double scaled = std::round(static_cast<double>(conv_kernels) * width_scale);
  return static_cast<std::size_t>(std::max(1.0, scaled));
}

void ModelSpec::validate() const {
  const std::size_t expected = defaults(variant).conv_kernels;
  if (conv_kernels != expected) {
    throw DataError("inconsistent model spec: variant " + to_string(variant) + " uses " +
                    std::to_string(expected) + " kernels, got " + std::to_string(conv_kernels));
  }
  if (gru_hidden == 0) throw DataError("inconsistent model spec: gru_hidden must be >= 1");
  if (gru_layers == 0) throw DataError("inconsistent model spec: gru_layers must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw DataError("inconsistent model spec: dropout_rate must be in [0, 1)");
  }
  if (!(width_scale > 0.0 && width_scale <= 1.0)) {
    throw DataError("inconsistent model spec: width_scale must be in (0, 1]");
  }
}

Model::Model(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(spec_.seed);
  const std::size_t kernels = spec_.effective_kernels();

  if (spec_.variant == Variant::kMultiPath) {
    slices_ = {kSpectrogramRows, kCepstralEnergyRows};
  } else {
    slices_ = {kAllRows};
  }

  std::size_t flat = 0;
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    auto seq = std::make_unique<Sequential>("path" + std::to_string(i));
    switch (spec_.variant) {
      case Variant::kRB1: add_residual_stack(*seq, spec_, kernels, 1, rng); break;
      case Variant::kRB2: add_residual_stack(*seq, spec_, kernels, 2, rng); break;
      default: add_conv_stack(*seq, spec_, kernels, rng); break;
    }
    seq->add(std::make_unique<MaxPool2D>(seq->name() + "/pool", spec_.pool_ceil));
    seq->add(std::make_unique<Dropout>(seq->name() + "/dropout", spec_.dropout_rate,
                                       spec_.seed * 7919 + i + 1));
    seq->add(std::make_unique<FlattenPerTimestep>(seq->name() + "/flatten"));
    // Width along the feature axis does not depend on the frame count; probe
    // with two frames.
    const Shape out = seq->output_shape({1, 1, slices_[i].rows(), 2});
    flat += out[2];
    paths_.push_back(std::move(seq));
  }

  head_ = std::make_unique<Sequential>("head");
  std::size_t width = flat;
  for (std::size_t l = 0; l < spec_.gru_layers; ++l) {
    const std::string name = spec_.gru_layers == 1 ? "head/bigru" : "head/bigru" + std::to_string(l + 1);
    head_->add(std::make_unique<BiGRU>(name, BiGruSpec{width, spec_.gru_hidden}, rng));
    width = 2 * spec_.gru_hidden;
  }
  if (spec_.dense_hidden > 0) {
    head_->add(std::make_unique<Dense>("head/dense_hidden", DenseSpec{width, spec_.dense_hidden}, rng));
    head_->add(std::make_unique<ReLU>("head/dense_relu"));
    width = spec_.dense_hidden;
  }
  auto out = std::make_unique<Dense>("head/dense", DenseSpec{width, 1}, rng);
  output_ = out.get();
  head_->add(std::move(out));
  head_->add(std::make_unique<Sigmoid>("head/sigmoid"));
}

Dense& Model::output_layer() { return *output_; }

std::size_t Model::flattened_width() const {
  std::size_t flat = 0;
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    flat += paths_[i]->output_shape({1, 1, slices_[i].rows(), 2})[2];
  }
  return flat;
}

std::size_t Model::output_length(std::size_t n_frames) const {
  return spec_.pool_ceil ? (n_frames + 1) / 2 : n_frames / 2;
}

FrameGrid Model::output_grid(const FrameGrid& input) const {
  return {output_length(input.n_frames), 2.0 * input.hop_s};
}

Tensor Model::forward(const Tensor& features, Mode mode) {
  if (features.rank() != 3 || features.dim(1) != kFeatureRows) {
    throw ShapeError("model input: expected [N, " + std::to_string(kFeatureRows) +
                     ", F], got " + to_string(features.shape()));
  }
  const std::size_t n = features.dim(0), f = features.dim(2);
  std::vector<Tensor> flats;
  path_out_shapes_.clear();
  std::size_t width = 0, steps = 0;
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    const FeatureSlice sl = slices_[i];
    Tensor x({n, 1, sl.rows(), f});
    for (std::size_t s = 0; s < n; ++s) {
      const double* src = features.data() + (s * kFeatureRows + sl.row_begin) * f;
      std::copy(src, src + sl.rows() * f, x.data() + s * sl.rows() * f);
    }
    flats.push_back(paths_[i]->forward(x, mode));
    path_out_shapes_.push_back(flats.back().shape());
    width += flats.back().dim(2);
    steps = flats.back().dim(1);
  }
  Tensor joined = flats.front();
  if (flats.size() > 1) {
    joined = Tensor({n, steps, width});
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t t = 0; t < steps; ++t) {
        double* dst = joined.data() + (s * steps + t) * width;
        for (const Tensor& p : flats) {
          const std::size_t w = p.dim(2);
          const double* src = p.data() + (s * steps + t) * w;
          dst = std::copy(src, src + w, dst);
        }
      }
    }
  }
  const Tensor probs = head_->forward(joined, mode);
  return probs.reshaped({n, steps});
}

void Model::backward(const Tensor& grad) {
  if (path_out_shapes_.empty()) throw std::logic_error("model backward without a forward pass");
  const Shape& first = path_out_shapes_.front();
  const std::size_t n = first[0], steps = first[1];
  require_shape(grad, {n, steps}, "model backward");
  const Tensor djoined = head_->backward(grad.reshaped({n, steps, 1}));
  std::size_t width = djoined.dim(2), offset = 0;
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    const std::size_t w = path_out_shapes_[i][2];
    Tensor dp({n, steps, w});
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t t = 0; t < steps; ++t) {
        const double* src = djoined.data() + (s * steps + t) * width + offset;
        std::copy(src, src + w, dp.data() + (s * steps + t) * w);
      }
    }
    paths_[i]->backward(dp);
    offset += w;
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : paths_) {
    const auto ps = p->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  const auto hs = head_->parameters();
  out.insert(out.end(), hs.begin(), hs.end());
  return out;
}

void Model::zero_grad() {
  for (auto& p : paths_) p->zero_grad();
  head_->zero_grad();
}

std::size_t Model::count_trainable() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

std::size_t Model::count_total() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

ArchitectureReport Model::report(std::size_t n_frames) {
  ArchitectureReport r;
  r.variant = to_string(spec_.variant);
  std::size_t width = 0, steps = 0;
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    Shape s{1, 1, slices_[i].rows(), n_frames};
    for (const Layer* l : paths_[i]->children()) collect_rows(*l, s, r.rows);
    width += s[2];
    steps = s[1];
  }
  Shape s{1, steps, width};
  if (paths_.size() > 1) r.rows.push_back({"head/concat", "Concatenate", s, 0, 0});
  for (const Layer* l : head_->children()) collect_rows(*l, s, r.rows);
  r.trainable = count_trainable();
  r.total = count_total();
  return r;
}

std::vector<Tensor> Model::snapshot() {
  std::vector<Tensor> out;
  for (Parameter* p : parameters()) out.push_back(p->value);
  return out;
}

void Model::restore(const std::vector<Tensor>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw ShapeError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(values[i], params[i]->value.shape(), "restore " + params[i]->name);
    params[i]->value = values[i];
  }
}

Model build_model(const ModelSpec& spec) { return Model(spec); }

std::size_t count_path_params(Model& model, std::size_t path, bool include_buffers) {
  std::size_t n = 0;
  for (Parameter* p : model.path(path).parameters()) {
    if (p->trainable || include_buffers) n += p->value.size();
  }
  return n;
}

std::string ArchitectureReport::to_text() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-20s %-22s %12s\n", "layer", "kind", "output shape", "params");
  out << "variant: " << variant << '\n' << line;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof line, "%-28s %-20s %-22s %12zu\n", row.name.c_str(), row.kind.c_str(),
                  casdet::to_string(row.output_shape).c_str(), row.total);
    out << line;
  }
  out << "trainable parameters: " << trainable << '\n';
  out << "total parameters:     " << total << '\n';
  return out.str();
}

std::string ArchitectureReport::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    j["layers"].push_back({{"name", row.name},
                           {"kind", row.kind},
                           {"output_shape", row.output_shape},
                           {"trainable", row.trainable},
                           {"total", row.total}});
  }
  j["trainable"] = trainable;
  j["total"] = total;
  return j.dump(2);
}

Tensor to_batch(const std::vector<const FeatureMatrix*>& features) {
  if (features.empty()) throw DataError("to_batch: no feature matrices");
  const std::size_t f = features.front()->n_frames();
  Tensor batch({features.size(), kFeatureRows, f});
  for (std::size_t s = 0; s < features.size(); ++s) {
    if (features[s]->n_frames() != f) {
      throw ShapeError("to_batch: frame counts differ (" + std::to_string(f) + " vs " +
                       std::to_string(features[s]->n_frames()) + ")");
    }
    const Matrix m = features[s]->stacked();
    std::copy(m.values().begin(), m.values().end(), batch.data() + s * kFeatureRows * f);
  }
  return batch;
}

Prediction predict(Model& model, const FeatureMatrix& features) {
  const Tensor probs = model.forward(to_batch({&features}), Mode::kInfer);
  Prediction p;
  p.probabilities.assign(probs.values().begin(), probs.values().end());
  p.grid = model.output_grid(features.grid);
  return p;
}

}  // namespace casdet
