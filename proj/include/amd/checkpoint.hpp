#pragma once

#include <string>

#include "amd/model.hpp"

namespace amd {

// Binary checkpoint, little-endian throughout:
//   magic "AMD1", u32 version,
//   u32 dim, u32 layers, u32 heads, u32 head_dim, u32 head_dim(v), u32 ff_dim,
//   f64 clip, u32 feature_flags, u32 tensor_count,
//   per tensor: u32 path_len, path bytes (UTF-8), u32 rank, u64 dims[rank],
//               f32 values in row-major order,
//   trailing u64 FNV-1a checksum of every preceding byte.
// Values are stored single precision; loading rounds parameters accordingly.

inline constexpr std::uint32_t kCheckpointVersion = 1;
// Input-feature conventions baked into a trained model.
inline constexpr std::uint32_t kFeatureDemandOverCapacity = 1u << 0;
inline constexpr std::uint32_t kFeatureRemainingOverCapacity = 1u << 1;

void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace amd
