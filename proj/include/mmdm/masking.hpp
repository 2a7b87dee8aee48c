#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mmdm/autodiff.hpp"
#include "mmdm/error.hpp"
#include "mmdm/motion.hpp"

namespace mmdm {

enum class MaskKind { TimeFrames, BodyParts };
const char* to_string(MaskKind kind);

struct MaskSpec {
  MaskKind kind = MaskKind::TimeFrames;
  double ratio = 0.0;
  std::vector<bool> mask;  // one slot per frame, or one per body part

  int popcount() const;
  int slot_count() const { return static_cast<int>(mask.size()); }
};

/// round(ratio · slots), halves rounded away from zero.
int mask_count(double ratio, int slot_count);

template <typename Rng>
MaskSpec sample_mask(MaskKind kind, int slot_count, double ratio, Rng& rng) {
  require(ratio >= 0.0 && ratio < 1.0, ErrorKind::InvalidConfig, "mask ratio must be in [0, 1)");
  require(slot_count >= 1, ErrorKind::InvalidConfig, "mask needs at least one slot");
  MaskSpec spec{kind, ratio, std::vector<bool>(slot_count, false)};
  const int count = mask_count(ratio, slot_count);
  if (count == 0) return spec;
  std::vector<int> order(slot_count);
  for (int i = 0; i < slot_count; ++i) order[i] = i;
  // Partial Fisher-Yates: the first `count` entries are a uniform subset.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, slot_count - 1);
    std::swap(order[i], order[pick(rng)]);
    spec.mask[order[i]] = true;
  }
  return spec;
}

MaskSpec sample_mask(MaskKind kind, int slot_count, double ratio, std::uint64_t seed);

/// Part-token mask for `frames` frames laid out frame-major (token f·5 + p).
std::vector<bool> expand_bodypart_mask(const MaskSpec& part_mask, int frames);

/// Joint-channel view of a part mask: channel c is set iff its part is masked.
std::vector<bool> expand_bodypart_mask(const MaskSpec& part_mask, const PartSets& part_sets, int channel_count);

/// Masked rows become mask_token + positional[row]; others are copied through.
Mat apply_mask(const Mat& tokens, const std::vector<bool>& token_mask, const RowVec& mask_token, const Mat& positional);

ad::Var apply_mask(ad::Var tokens, const std::vector<bool>& token_mask, ad::Var mask_token, ad::Var positional);

inline constexpr double kMaskTokenInitStd = 0.02;

template <typename Rng>
RowVec init_mask_token(int hidden, Rng& rng) {
  std::normal_distribution<double> normal(0.0, kMaskTokenInitStd);
  RowVec q(hidden);
  for (int i = 0; i < hidden; ++i) q(i) = normal(rng);
  return q;
}

}  // namespace mmdm
