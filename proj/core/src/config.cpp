#include "casdet/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "casdet/error.hpp"

namespace casdet {
namespace {

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw DataError("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw DataError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config: " + key + " expects true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
Field number(std::string key, T RunConfig::*section, double T::*member) {
  return {key,
          [=](RunConfig& c, const std::string& v) { (c.*section).*member = to_double(key, v); },
          [=](const RunConfig& c) { return fmt((c.*section).*member); }};
}

template <typename T, typename U>
Field count(std::string key, T RunConfig::*section, U T::*member) {
  return {key,
          [=](RunConfig& c, const std::string& v) {
            (c.*section).*member = static_cast<U>(to_unsigned(key, v));
          },
          [=](const RunConfig& c) { return fmt(static_cast<std::uint64_t>((c.*section).*member)); }};
}

template <typename T>
Field flag(std::string key, T RunConfig::*section, bool T::*member) {
  return {key,
          [=](RunConfig& c, const std::string& v) { (c.*section).*member = to_bool(key, v); },
          [=](const RunConfig& c) { return fmt((c.*section).*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"seed", [](RunConfig& c, const std::string& v) { c.seed = to_unsigned("seed", v); },
                 [](const RunConfig& c) { return fmt(c.seed); }});
    f.push_back({"model.variant",
                 [](RunConfig& c, const std::string& v) {
                   const ModelSpec d = ModelSpec::defaults(parse_variant(v));
                   c.model.variant = d.variant;
                   c.model.conv_kernels = d.conv_kernels;
                 },
                 [](const RunConfig& c) { return to_string(c.model.variant); }});
    f.push_back(count("model.conv_kernels", &RunConfig::model, &ModelSpec::conv_kernels));
    f.push_back(count("model.gru_hidden", &RunConfig::model, &ModelSpec::gru_hidden));
    f.push_back(count("model.gru_layers", &RunConfig::model, &ModelSpec::gru_layers));
    f.push_back(count("model.dense_hidden", &RunConfig::model, &ModelSpec::dense_hidden));
    f.push_back(number("model.dropout_rate", &RunConfig::model, &ModelSpec::dropout_rate));
    f.push_back(number("model.width_scale", &RunConfig::model, &ModelSpec::width_scale));
    f.push_back(flag("model.pool_ceil", &RunConfig::model, &ModelSpec::pool_ceil));
    f.push_back(flag("model.stack_batchnorm", &RunConfig::model, &ModelSpec::stack_batchnorm));
    f.push_back(flag("model.residual_projection", &RunConfig::model, &ModelSpec::residual_projection));
    f.push_back(count("model.seed", &RunConfig::model, &ModelSpec::seed));
    f.push_back(number("train.lr0", &RunConfig::train, &TrainConfig::lr0));
    f.push_back(number("train.decay_factor", &RunConfig::train, &TrainConfig::decay_factor));
    f.push_back(count("train.plateau_patience", &RunConfig::train, &TrainConfig::plateau_patience));
    f.push_back(count("train.early_stop_patience", &RunConfig::train, &TrainConfig::early_stop_patience));
    f.push_back(count("train.n_folds", &RunConfig::train, &TrainConfig::n_folds));
    f.push_back(count("train.batch_size", &RunConfig::train, &TrainConfig::batch_size));
    f.push_back(count("train.micro_batch", &RunConfig::train, &TrainConfig::micro_batch));
    f.push_back(count("train.max_epochs", &RunConfig::train, &TrainConfig::max_epochs));
    f.push_back(count("train.seed", &RunConfig::train, &TrainConfig::seed));
    f.push_back(number("merge.max_gap_s", &RunConfig::merge, &MergeConfig::max_gap_s));
    f.push_back(number("merge.max_peak_diff_hz", &RunConfig::merge, &MergeConfig::max_peak_diff_hz));
    f.push_back(number("merge.min_duration_s", &RunConfig::merge, &MergeConfig::min_duration_s));
    f.push_back({"features.highpass_hz",
                 [](RunConfig& c, const std::string& v) {
                   c.features.highpass.cutoff_hz = to_double("features.highpass_hz", v);
                 },
                 [](const RunConfig& c) { return fmt(c.features.highpass.cutoff_hz); }});
    f.push_back({"features.highpass_order",
                 [](RunConfig& c, const std::string& v) {
                   c.features.highpass.order = static_cast<int>(to_unsigned("features.highpass_order", v));
                 },
                 [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.features.highpass.order)); }});
    f.push_back({"features.mel_filters",
                 [](RunConfig& c, const std::string& v) {
                   c.features.mfcc.n_filters = to_unsigned("features.mel_filters", v);
                 },
                 [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.features.mfcc.n_filters)); }});
    f.push_back({"features.mel_fmin_hz",
                 [](RunConfig& c, const std::string& v) { c.features.mfcc.f_min = to_double("features.mel_fmin_hz", v); },
                 [](const RunConfig& c) { return fmt(c.features.mfcc.f_min); }});
    f.push_back({"features.mel_fmax_hz",
                 [](RunConfig& c, const std::string& v) { c.features.mfcc.f_max = to_double("features.mel_fmax_hz", v); },
                 [](const RunConfig& c) { return fmt(c.features.mfcc.f_max); }});
    f.push_back({"features.log_floor",
                 [](RunConfig& c, const std::string& v) {
                   c.features.mfcc.log_floor = to_double("features.log_floor", v);
                 },
                 [](const RunConfig& c) { return fmt(c.features.mfcc.log_floor); }});
    f.push_back({"features.delta_window",
                 [](RunConfig& c, const std::string& v) {
                   c.features.mfcc.delta_window = to_unsigned("features.delta_window", v);
                 },
                 [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.features.mfcc.delta_window)); }});
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

void apply(RunConfig& config, const std::string& text, bool model_only) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = find_field(key);
    if (f == nullptr || (model_only && key.rfind("model.", 0) != 0)) {
      throw DataError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    f->set(config, value);
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  apply_run_config(c, text);
  return c;
}

void apply_run_config(RunConfig& config, const std::string& text) {
  apply(config, text, false);
  config.model.validate();
  config.train.validate();
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

ModelSpec parse_model_spec(const std::string& text) {
  RunConfig c;
  apply(c, text, true);
  c.model.validate();
  return c.model;
}

std::string format_model_spec(const ModelSpec& spec) {
  RunConfig c;
  c.model = spec;
  std::string out;
  for (const auto& f : fields()) {
    if (f.key.rfind("model.", 0) == 0) out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> default_config_entries() {
  const RunConfig c;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(c));
  return out;
}

}  // namespace casdet
