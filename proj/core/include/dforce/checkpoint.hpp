#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dforce/denoiser.hpp"
#include "dforce/preference.hpp"

// Binary parameter checkpoints. Every field is explicitly little-endian
// regardless of host byte order:
//
//   bytes 0..3   magic "DFCP"
//   u32          format version (currently 1)
//   u32          record kind: 1 = denoiser, 2 = reward scorer
//   shape        denoiser: u32 dim, u32 hidden, u32 max_frames, u32 num_conds
//                reward:   u32 dim, u32 hidden, f64 theta_tie
//   u64          value count (must equal the layout implied by the shape)
//   f64 * count  parameter values (IEEE-754 bit patterns)
//
// Loaders validate the magic, version, kind, shape, count, and byte length,
// and reject non-finite values; a failed load never returns partial data.
// Saves go through a temp file and rename, so an interrupted write cannot
// leave a truncated checkpoint behind.
namespace dforce {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_denoiser(const DenoiserParams& params);
DenoiserParams deserialize_denoiser(const std::string& bytes);
void save_denoiser_checkpoint(const std::filesystem::path& path, const DenoiserParams& params);
DenoiserParams load_denoiser_checkpoint(const std::filesystem::path& path);

std::string serialize_reward(const RewardParams& params);
RewardParams deserialize_reward(const std::string& bytes);
void save_reward_checkpoint(const std::filesystem::path& path, const RewardParams& params);
RewardParams load_reward_checkpoint(const std::filesystem::path& path);

}  // namespace dforce
