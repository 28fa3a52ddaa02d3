#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "casdet/architectures.hpp"
#include "casdet/features.hpp"
#include "casdet/postprocess.hpp"
#include "casdet/training.hpp"

namespace casdet {

// Settings shared by the command-line stages. Text form is one `key = value`
// per line; `#` starts a comment; keys are `seed` or `<section>.<field>` with
// sections model, train, merge, features. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  ModelSpec model;
  TrainConfig train;
  MergeConfig merge;
  FeatureConfig features;
};

RunConfig parse_run_config(const std::string& text);  // throws DataError
// Overrides only the keys present in `text`.
void apply_run_config(RunConfig& config, const std::string& text);
std::string format_run_config(const RunConfig& config);
RunConfig read_run_config(const std::filesystem::path& path);

// Only the `model.*` keys; used inside checkpoints.
ModelSpec parse_model_spec(const std::string& text);
std::string format_model_spec(const ModelSpec& spec);

// Every accepted key with its default value, in file order.
std::vector<std::pair<std::string, std::string>> default_config_entries();

}  // namespace casdet
