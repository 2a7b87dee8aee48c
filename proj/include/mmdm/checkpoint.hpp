#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mmdm/trainer.hpp"

namespace mmdm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian): "MMCK", u32 version, u32 header bytes, JSON header
// (model config, skeleton, train config, step, RNG and epoch state), u32
// tensor count, then per tensor: u32 name bytes, name, u32 rows, u32 cols,
// rows·cols f64 values row-major. Adam moments are stored as "adam.m/<name>"
// and "adam.v/<name>".
void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config);

TrainState load_train_state(const std::filesystem::path& path);
Denoiser load_denoiser(const std::filesystem::path& path);
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace mmdm
