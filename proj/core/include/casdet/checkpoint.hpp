#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "casdet/architectures.hpp"

namespace casdet {

// Binary container, little-endian:
//   magic "CASDETCK", u32 version (=1)
//   u32 spec length, ModelSpec as key=value text
//   u32 tensor count, then per tensor:
//     u32 name length, name, u8 trainable, u32 rank, u64 extents[rank],
//     f64 values[product(extents)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(Model& model);
Model deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace casdet
