#pragma once

#include <filesystem>
#include <memory>

#include "vton/diffusion/unet.hpp"

namespace vton::diffusion {

/// Binary layout (little-endian):
///   "VTONCKPT" | u32 version | u32 config_len | config JSON | u32 tensor_count
///   per tensor: u32 name_len | name | u32 rank | u32 dims[rank] | u8 dtype (1 = f64) | f64 payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelPair {
    std::unique_ptr<UNetToy> main;
    std::unique_ptr<UNetToy> reference;
};

/// Fresh main/reference pair; the reference is seeded from `seed + 1`.
ModelPair make_models(const UNetConfig& config, std::uint64_t seed);

void save_checkpoint(const std::filesystem::path& path, const UNetToy& main, const UNetToy& reference);
/// Throws CheckpointError on a bad magic, version, name or shape.
ModelPair load_checkpoint(const std::filesystem::path& path);

}  // namespace vton::diffusion
