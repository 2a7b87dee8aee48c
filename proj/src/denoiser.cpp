#include "mmdm/denoiser.hpp"

#include <cstdio>
#include <random>

namespace mmdm {

void ModelConfig::validate() const {
  require(encoder_layers >= 0 && decoder_layers >= 0, ErrorKind::InvalidConfig, "layer counts must be >= 0");
  require(hidden_dim >= 2 && heads >= 1 && hidden_dim % heads == 0, ErrorKind::InvalidConfig,
          "hidden_dim must be divisible by heads");
  require(max_length >= 2, ErrorKind::InvalidConfig, "max_length must be >= 2");
  require(ff_mult >= 1, ErrorKind::InvalidConfig, "ff_mult must be >= 1");
}

std::string ModelConfig::arch_label() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%02d Encoder+%d Decoder", encoder_layers, decoder_layers);
  return buf;
}

namespace {

std::string layer_name(const char* stack, int layer) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s.%02d", stack, layer);
  return buf;
}

std::string part_name(const char* prefix, int part) { return std::string(prefix) + std::to_string(part); }

}  // namespace

Denoiser::Denoiser(ModelConfig config, Skeleton skeleton, std::uint64_t seed)
    : config_(config), skeleton_(std::move(skeleton)), params_(std::make_unique<ad::ParameterSet>()) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int h = config_.hidden_dim;
  const int width = skeleton_.feature_width();
  const int rel = relative_bias_width(config_.max_length);
  ad::ParameterSet& p = *params_;

  text_ = std::make_unique<TextEncoder>(p, Vocabulary::captions(), h, rng);
  nn::add_linear(p, "time.fc1", h, h, rng);
  nn::add_linear(p, "time.fc2", h, h, rng);
  nn::add_linear(p, "cond.proj", h, h, rng);
  p.add("mask_token", init_mask_token(h, rng));
  p.add("dec.pos", nn::normal_init(config_.max_length, h, 0.02, rng));
  const auto shape = block_shape();
  for (int l = 0; l < config_.decoder_layers; ++l) {
    nn::add_block(p, layer_name("dec", l), shape, rng);
    p.add(layer_name("dec", l) + ".rel", nn::normal_init(config_.heads, rel, 0.02, rng));
  }
  nn::add_layer_norm(p, "dec.ln", h);

  if (config_.strategy == MaskKind::TimeFrames) {
    nn::add_linear(p, "in", width, h, rng);
    p.add("enc.pos", nn::normal_init(config_.max_length, h, 0.02, rng));
    for (int l = 0; l < config_.encoder_layers; ++l) {
      nn::add_block(p, layer_name("enc", l), shape, rng);
      p.add(layer_name("enc", l) + ".rel", nn::normal_init(config_.heads, rel, 0.02, rng));
    }
    nn::add_linear(p, "out", h, width, rng);
  } else {
    channel_parts_ = channel_part_sets(skeleton_);
    adjacency_ = part_adjacency(skeleton_);
    for (int part = 0; part < kPartCount; ++part)
      for (int c : channel_parts_[part])
        for (int d = 0; d < Skeleton::kFeatureDim; ++d) part_column_order_.push_back(c * Skeleton::kFeatureDim + d);
    nn::add_linear(p, "bpst.in", Skeleton::kFeatureDim, h, rng);
    p.add("bpst.joint", nn::normal_init(skeleton_.channel_count(), h, 0.02, rng));
    for (int l = 0; l < config_.encoder_layers; ++l) nn::add_block(p, layer_name("bpst", l), shape, rng);
    p.add("dec.part", nn::normal_init(kPartCount, h, 0.02, rng));
    for (int part = 0; part < kPartCount; ++part) {
      const int joints = static_cast<int>(channel_parts_[part].size());
      nn::add_linear(p, part_name("bpst.part", part), joints * h, h, rng);
      nn::add_linear(p, part_name("out.part", part), h, joints * Skeleton::kFeatureDim, rng);
    }
  }
}

nn::BlockShape Denoiser::block_shape() const {
  return {config_.hidden_dim, config_.heads, config_.hidden_dim * config_.ff_mult};
}

int Denoiser::mask_slots(int frames) const { return config_.strategy == MaskKind::TimeFrames ? frames : kPartCount; }

std::vector<bool> Denoiser::token_mask(const MaskSpec& mask, int frames) const {
  require(mask.slot_count() == mask_slots(frames), ErrorKind::InvalidInput, "mask slot count does not match model");
  if (config_.strategy == MaskKind::TimeFrames) return mask.mask;
  return expand_bodypart_mask(mask, frames);
}

void Denoiser::check_frames(const Mat& x_t) const {
  require(x_t.cols() == skeleton_.feature_width(), ErrorKind::InvalidInput, "frame width does not match skeleton");
  require(x_t.rows() >= 1 && x_t.rows() <= config_.max_length, ErrorKind::InvalidInput,
          "sequence length " + std::to_string(x_t.rows()) + " exceeds max_length " +
              std::to_string(config_.max_length));
}

ad::Var Denoiser::condition_token(ad::Graph& g, const TextCondition& text, int t) {
  ad::Var time = g.constant(timestep_embedding(t, config_.hidden_dim));
  time = nn::linear(g, *params_, "time.fc2", ad::gelu(nn::linear(g, *params_, "time.fc1", time)));
  return nn::linear(g, *params_, "cond.proj", ad::add(text_->encode(g, text), time));
}

ad::Var Denoiser::run_stack(ad::Graph& g, const std::string& prefix, int layers, ad::Var x,
                            const std::vector<int>& positions) {
  const auto shape = block_shape();
  for (int l = 0; l < layers; ++l) {
    const std::string name = layer_name(prefix.c_str(), l);
    ad::Var table = nn::param(g, *params_, name + ".rel");
    const int max_len = config_.max_length;
    nn::BiasFn bias = [&](int head) -> std::optional<ad::Var> {
      return relative_bias(ad::row_slice(table, head, 1), positions, max_len);
    };
    x = nn::block(g, *params_, name, shape, x, bias, BiasPlacement::AfterScale);
  }
  return x;
}

ad::Var Denoiser::embed_frames(ad::Graph& g, const Mat& x_t) {
  check_frames(x_t);
  ad::Var tokens = nn::linear(g, *params_, "in", g.constant(x_t));
  return ad::add(tokens, ad::row_slice(nn::param(g, *params_, "enc.pos"), 0, x_t.rows()));
}

ad::Var Denoiser::time_frames_encoder(ad::Graph& g, ad::Var masked_tokens, ad::Var condition) {
  const auto n = static_cast<int>(masked_tokens.rows());
  require(n <= config_.max_length, ErrorKind::InvalidInput, "sequence longer than max_length");
  std::vector<int> positions{-1};
  for (int i = 0; i < n; ++i) positions.push_back(i);
  ad::Var seq = ad::concat_rows({condition, masked_tokens});
  seq = run_stack(g, "enc", config_.encoder_layers, seq, positions);
  return ad::row_slice(seq, 1, n);
}

ad::Var Denoiser::time_frames_decoder(ad::Graph& g, ad::Var tokens, ad::Var condition) {
  const auto n = static_cast<int>(tokens.rows());
  require(n <= config_.max_length, ErrorKind::InvalidInput, "sequence longer than max_length");
  std::vector<int> positions{-1};
  for (int i = 0; i < n; ++i) positions.push_back(i);
  ad::Var x = ad::add(tokens, ad::row_slice(nn::param(g, *params_, "dec.pos"), 0, n));
  ad::Var seq = run_stack(g, "dec", config_.decoder_layers, ad::concat_rows({condition, x}), positions);
  seq = nn::layer_norm(g, *params_, "dec.ln", ad::row_slice(seq, 1, n));
  return nn::linear(g, *params_, "out", seq);
}

ad::Var Denoiser::bpst_encode(ad::Graph& g, const Mat& x_t) {
  check_frames(x_t);
  const int n = static_cast<int>(x_t.rows());
  const int channels = skeleton_.channel_count();
  const int h = config_.hidden_dim;
  ad::Var joints = nn::linear(g, *params_, "bpst.in",
                              g.constant(reshaped(x_t, static_cast<Eigen::Index>(n) * channels, Skeleton::kFeatureDim)));
  std::vector<int> joint_ids;
  joint_ids.reserve(static_cast<std::size_t>(n) * channels);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c) joint_ids.push_back(c);
  joints = ad::add(joints, ad::gather_rows(nn::param(g, *params_, "bpst.joint"), joint_ids));

  ad::Var adjacency = g.constant(adjacency_);
  const auto shape = block_shape();
  for (int l = 0; l < config_.encoder_layers; ++l) {
    nn::BiasFn bias = [&](int) -> std::optional<ad::Var> { return adjacency; };
    joints = nn::block(g, *params_, layer_name("bpst", l), shape, joints, bias, BiasPlacement::BeforeScale, channels);
  }

  ad::Var per_frame = ad::reshape(joints, n, static_cast<Eigen::Index>(channels) * h);
  std::vector<ad::Var> parts;
  for (int part = 0; part < kPartCount; ++part) {
    std::vector<ad::Var> cols;
    for (int c : channel_parts_[part]) cols.push_back(ad::col_slice(per_frame, static_cast<Eigen::Index>(c) * h, h));
    ad::Var joined = cols.size() == 1 ? cols.front() : ad::concat_cols(cols);
    parts.push_back(nn::linear(g, *params_, part_name("bpst.part", part), joined));
  }
  return ad::reshape(ad::concat_cols(parts), static_cast<Eigen::Index>(n) * kPartCount, h);
}

ad::Var Denoiser::part_positional(ad::Graph& g, int frames) {
  std::vector<int> frame_ids, part_ids;
  for (int i = 0; i < frames; ++i)
    for (int p = 0; p < kPartCount; ++p) {
      frame_ids.push_back(i);
      part_ids.push_back(p);
    }
  return ad::add(ad::gather_rows(nn::param(g, *params_, "dec.pos"), frame_ids),
                 ad::gather_rows(nn::param(g, *params_, "dec.part"), part_ids));
}

ad::Var Denoiser::bodyparts_decoder(ad::Graph& g, ad::Var tokens, ad::Var condition, int frames) {
  require(tokens.rows() == static_cast<Eigen::Index>(frames) * kPartCount, ErrorKind::InvalidInput,
          "body-parts decoder expects 5 tokens per frame");
  const int h = config_.hidden_dim;
  std::vector<int> positions{-1};
  for (int i = 0; i < frames; ++i)
    for (int p = 0; p < kPartCount; ++p) positions.push_back(i);
  ad::Var seq = run_stack(g, "dec", config_.decoder_layers, ad::concat_rows({condition, tokens}), positions);
  seq = nn::layer_norm(g, *params_, "dec.ln", ad::row_slice(seq, 1, tokens.rows()));
  ad::Var per_frame = ad::reshape(seq, frames, static_cast<Eigen::Index>(kPartCount) * h);
  std::vector<ad::Var> outs;
  for (int part = 0; part < kPartCount; ++part)
    outs.push_back(nn::linear(g, *params_, part_name("out.part", part), ad::col_slice(per_frame, part * h, h)));
  // Columns are grouped by part; restore channel order.
  std::vector<int> source(part_column_order_.size());
  for (std::size_t k = 0; k < part_column_order_.size(); ++k) source[part_column_order_[k]] = static_cast<int>(k);
  return ad::permute_cols(ad::concat_cols(outs), source);
}

ad::Var Denoiser::forward(ad::Graph& g, const Mat& x_t, int t, const TextCondition& text, const MaskSpec* mask,
                          ForwardTrace* trace) {
  check_frames(x_t);
  const int n = static_cast<int>(x_t.rows());
  const std::vector<bool> tmask = mask ? token_mask(*mask, n) : std::vector<bool>{};
  bool any = false;
  for (bool b : tmask) any = any || b;
  ad::Var cond = condition_token(g, text, t);
  ad::Var q = nn::param(g, *params_, "mask_token");

  if (config_.strategy == MaskKind::TimeFrames) {
    ad::Var tokens = embed_frames(g, x_t);
    ad::Var decoder_input = tokens;
    ad::Var encoder_input = tokens;
    if (any) {
      ad::Var pos = ad::row_slice(nn::param(g, *params_, "enc.pos"), 0, n);
      encoder_input = apply_mask(tokens, tmask, q, pos);
      ad::Var predicted = time_frames_encoder(g, encoder_input, cond);
      decoder_input = ad::select_rows(tmask, predicted, encoder_input);
    }
    if (trace) {
      trace->encoder_input = encoder_input.value();
      trace->decoder_input = decoder_input.value();
    }
    return time_frames_decoder(g, decoder_input, cond);
  }

  ad::Var parts = bpst_encode(g, x_t);
  ad::Var pos = part_positional(g, n);
  ad::Var tokens = ad::add(parts, pos);
  if (any) tokens = apply_mask(tokens, tmask, q, pos);
  if (trace) {
    trace->part_tokens = parts.value();
    trace->encoder_input = tokens.value();
    trace->decoder_input = tokens.value();
  }
  return bodyparts_decoder(g, tokens, cond, n);
}

Mat Denoiser::predict(const Mat& x_t, int t, const TextCondition& text, const MaskSpec* mask) const {
  // A non-recording graph only reads parameter values.
  ad::Graph g(false);
  return const_cast<Denoiser*>(this)->forward(g, x_t, t, text, mask).value();
}

}  // namespace mmdm
