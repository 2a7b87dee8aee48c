#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmdm/motion.hpp"
#include "mmdm/synthetic.hpp"

namespace mmdm {

inline constexpr std::uint32_t kMotionFormatVersion = 1;

// .mmot layout (little-endian): "MMOT", u32 version, u32 N, u32 J, u32 D,
// f32 fps, u32 caption bytes, caption, N·J·D f32 frames (row-major).
std::vector<std::uint8_t> encode_motion(const MotionSequence& motion);
MotionSequence decode_motion(const std::vector<std::uint8_t>& bytes);

void write_motion(const std::filesystem::path& path, const MotionSequence& motion);
MotionSequence read_motion(const std::filesystem::path& path);

/// Skeleton sidecar: JSON with parents, offsets, parts, foot joints, mode.
std::string skeleton_to_json(const Skeleton& skeleton);
Skeleton skeleton_from_json(const std::string& text);
void write_skeleton(const std::filesystem::path& path, const Skeleton& skeleton);
Skeleton read_skeleton(const std::filesystem::path& path);

/// Loads every *.mmot in `dir` (sorted by name) plus its skeleton.json.
Dataset load_motion_dir(const std::filesystem::path& dir);
void save_motion_dir(const std::filesystem::path& dir, const Dataset& data);

}  // namespace mmdm
