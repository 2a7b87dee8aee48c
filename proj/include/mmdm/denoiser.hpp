#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mmdm/attention.hpp"
#include "mmdm/autodiff.hpp"
#include "mmdm/masking.hpp"
#include "mmdm/motion.hpp"
#include "mmdm/nn.hpp"
#include "mmdm/text.hpp"

namespace mmdm {

struct ModelConfig {
  MaskKind strategy = MaskKind::TimeFrames;
  int encoder_layers = 6;  // body-parts: BPST depth
  int decoder_layers = 2;
  int hidden_dim = 64;
  int heads = 4;
  int max_length = 64;
  int ff_mult = 2;

  void validate() const;
  /// "06 Encoder+2 Decoder" style label.
  std::string arch_label() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Intermediate tensors of one forward pass, for inspection in tests.
struct ForwardTrace {
  Mat encoder_input;  // masked tokens (time frames) / masked part tokens (body parts)
  Mat decoder_input;  // what the decoder stack receives, before its position embedding
  Mat part_tokens;    // BPST output before masking (body parts only)
};

/// x̂₀ predictor. Time-frames: asymmetric encoder/decoder over frame tokens
/// with relative positional bias. Body-parts: BPST joint attention under the
/// part adjacency, one token per part per frame, masked after encoding.
class Denoiser {
 public:
  Denoiser(ModelConfig config, Skeleton skeleton, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Skeleton& skeleton() const { return skeleton_; }
  ad::ParameterSet& params() { return *params_; }
  const ad::ParameterSet& params() const { return *params_; }
  const TextEncoder& text() const { return *text_; }

  /// Mask slots per sample: N frames, or 5 body parts.
  int mask_slots(int frames) const;
  std::vector<bool> token_mask(const MaskSpec& mask, int frames) const;

  ad::Var condition_token(ad::Graph& g, const TextCondition& text, int t);

  /// Frame tokens plus the encoder's learnable global position embedding.
  ad::Var embed_frames(ad::Graph& g, const Mat& x_t);
  ad::Var time_frames_encoder(ad::Graph& g, ad::Var masked_tokens, ad::Var condition);
  ad::Var time_frames_decoder(ad::Graph& g, ad::Var tokens, ad::Var condition);

  /// (N·5) × H part tokens, frame-major, before masking.
  ad::Var bpst_encode(ad::Graph& g, const Mat& x_t);
  /// Frame + part position embedding for N·5 part tokens.
  ad::Var part_positional(ad::Graph& g, int frames);
  ad::Var bodyparts_decoder(ad::Graph& g, ad::Var tokens, ad::Var condition, int frames);

  ad::Var forward(ad::Graph& g, const Mat& x_t, int t, const TextCondition& text, const MaskSpec* mask = nullptr,
                  ForwardTrace* trace = nullptr);

  /// Inference-only evaluation; safe to call concurrently.
  Mat predict(const Mat& x_t, int t, const TextCondition& text, const MaskSpec* mask = nullptr) const;

 private:
  nn::BlockShape block_shape() const;
  ad::Var run_stack(ad::Graph& g, const std::string& prefix, int layers, ad::Var x,
                    const std::vector<int>& positions);
  void check_frames(const Mat& x_t) const;

  ModelConfig config_;
  Skeleton skeleton_;
  PartSets channel_parts_;
  std::vector<int> part_column_order_;
  Mat adjacency_;
  std::unique_ptr<ad::ParameterSet> params_;
  std::unique_ptr<TextEncoder> text_;
};

}  // namespace mmdm
