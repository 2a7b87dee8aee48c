#include "mmdm/masking.hpp"

#include <cmath>

namespace mmdm {

const char* to_string(MaskKind kind) { return kind == MaskKind::TimeFrames ? "time_frames" : "body_parts"; }

int MaskSpec::popcount() const {
  int n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  return n;
}

int mask_count(double ratio, int slot_count) { return static_cast<int>(std::round(ratio * slot_count)); }

MaskSpec sample_mask(MaskKind kind, int slot_count, double ratio, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_mask(kind, slot_count, ratio, rng);
}

std::vector<bool> expand_bodypart_mask(const MaskSpec& part_mask, int frames) {
  require(part_mask.slot_count() == kPartCount, ErrorKind::InvalidInput, "body-part mask needs 5 slots");
  std::vector<bool> tokens(static_cast<std::size_t>(frames) * kPartCount);
  for (int f = 0; f < frames; ++f)
    for (int p = 0; p < kPartCount; ++p) tokens[f * kPartCount + p] = part_mask.mask[p];
  return tokens;
}

std::vector<bool> expand_bodypart_mask(const MaskSpec& part_mask, const PartSets& part_sets, int channel_count) {
  require(part_mask.slot_count() == kPartCount, ErrorKind::InvalidInput, "body-part mask needs 5 slots");
  std::vector<bool> channels(channel_count, false);
  for (int p = 0; p < kPartCount; ++p)
    for (int c : part_sets[p]) {
      require(c >= 0 && c < channel_count, ErrorKind::InvalidInput, "part set index out of range");
      channels[c] = part_mask.mask[p];
    }
  return channels;
}

Mat apply_mask(const Mat& tokens, const std::vector<bool>& token_mask, const RowVec& mask_token,
               const Mat& positional) {
  require(static_cast<Eigen::Index>(token_mask.size()) == tokens.rows(), ErrorKind::InvalidInput,
          "mask length does not match token count");
  require(positional.rows() == tokens.rows() && positional.cols() == tokens.cols() &&
              mask_token.cols() == tokens.cols(),
          ErrorKind::InvalidInput, "apply_mask: shape mismatch");
  Mat out = tokens;
  for (Eigen::Index i = 0; i < tokens.rows(); ++i)
    if (token_mask[i]) out.row(i) = mask_token + positional.row(i);
  return out;
}

ad::Var apply_mask(ad::Var tokens, const std::vector<bool>& token_mask, ad::Var mask_token, ad::Var positional) {
  require(positional.rows() == tokens.rows() && positional.cols() == tokens.cols() && mask_token.rows() == 1 &&
              mask_token.cols() == tokens.cols(),
          ErrorKind::InvalidInput, "apply_mask: shape mismatch");
  bool any = false;
  for (bool b : token_mask) any = any || b;
  if (!any) {
    require(static_cast<Eigen::Index>(token_mask.size()) == tokens.rows(), ErrorKind::InvalidInput,
            "mask length does not match token count");
    return tokens;
  }
  ad::Var filled = ad::add(ad::broadcast_row(mask_token, tokens.rows()), positional);
  return ad::select_rows(token_mask, filled, tokens);
}

}  // namespace mmdm
