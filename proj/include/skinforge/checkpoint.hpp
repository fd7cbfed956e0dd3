#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skinforge/generator.hpp"
#include "skinforge/latent.hpp"

namespace skinforge {

// Checkpoint layout (all integers little-endian):
//
//   magic[8]     "SKFGGEN\0"
//   u32          format version
//   u32 x 5      latent_dim, mapping_depth, level_count, channels_4, channels_8
//   u32          tensor count, then per tensor:
//                  u32 name length, name bytes, u64 element count, f32[count]
//   u8           has cached average; if 1, f64[1024]
//   u32          CRC-32 of every preceding byte
//
// Latent files reuse the scheme with magic "SKFGLAT\0", u32 rows, u32 dim and
// f64[rows * dim].
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kLatentFileVersion = 1;

std::vector<std::uint8_t> serialize_weights(const GeneratorWeights& weights);
GeneratorWeights deserialize_weights(std::span<const std::uint8_t> bytes);
void save_weights(const GeneratorWeights& weights, const std::filesystem::path& path);
// Throws FileNotFound, VersionMismatch (magic or version), ChecksumError.
GeneratorWeights load_weights(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_latent(const LatentWPlus& latent);
LatentWPlus deserialize_latent(std::span<const std::uint8_t> bytes);
void save_latent(const LatentWPlus& latent, const std::filesystem::path& path);
LatentWPlus load_latent(const std::filesystem::path& path);

}  // namespace skinforge
