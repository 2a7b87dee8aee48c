#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmdm/motion.hpp"

namespace mmdm {

struct GeneratorConfig {
  std::vector<std::string> archetypes{"walk", "wave_left_arm", "kick_right_leg", "crouch"};
  int samples_per_archetype = 50;
  int min_length = 16;
  int max_length = 64;
  float fps = 20.0f;
  Representation mode = Representation::Positions;
};

struct Dataset {
  Skeleton skeleton;
  std::vector<MotionSequence> motions;
  std::vector<int> labels;  // archetype index per motion, -1 when unknown
  std::vector<std::string> archetypes;

  std::size_t size() const { return motions.size(); }
};

const std::vector<std::string>& known_archetypes();

/// Every word the caption grammar can emit, sorted.
std::vector<std::string> caption_vocabulary();

/// Procedural motions on the toy skeleton. A pure function of (config, seed);
/// values are rounded to float precision so they survive the .mmot round trip.
Dataset generate_synthetic_dataset(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace mmdm
