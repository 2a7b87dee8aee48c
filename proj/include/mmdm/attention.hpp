#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "mmdm/autodiff.hpp"
#include "mmdm/motion.hpp"

namespace mmdm {

inline constexpr double kBlocked = -std::numeric_limits<double>::infinity();

/// Where the additive bias enters the softmax logits.
enum class BiasPlacement {
  AfterScale,   // softmax(QKᵀ/√d_k + B)   (relative positional bias)
  BeforeScale,  // softmax((QKᵀ + M)/√d_k) (body-part adjacency)
};

struct AttentionInputs {
  Mat q, k, v;
  Mat bias;  // tokens × tokens; empty means no bias
};

struct AttentionResult {
  Mat output;
  Mat weights;  // row-stochastic over non-blocked columns
};

/// Throws DegenerateSoftmax when a logit row is entirely −∞.
AttentionResult biased_attention(const AttentionInputs& inputs, BiasPlacement placement);

/// Differentiable attention. Rows are grouped into consecutive blocks of
/// `block` tokens that attend only within their block; `bias` is block × block
/// and shared by every block. `block` = 0 means a single block of all rows.
ad::Var attention(ad::Var q, ad::Var k, ad::Var v, std::optional<ad::Var> bias, BiasPlacement placement,
                  int block = 0);

/// 0 where two feature channels share a body part, −∞ otherwise.
Mat part_adjacency(const Skeleton& skeleton);

/// Relative-distance bias B[i][j] = table[clip(pos_i − pos_j) + L − 1] for a
/// table of 2L − 1 entries. A negative position (the condition token) gets 0.
Mat relative_bias(const RowVec& table, const std::vector<int>& positions, int max_length);
ad::Var relative_bias(ad::Var table, const std::vector<int>& positions, int max_length);

inline int relative_bias_width(int max_length) { return 2 * max_length - 1; }

}  // namespace mmdm
