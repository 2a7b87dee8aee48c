#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmdm/denoiser.hpp"
#include "mmdm/evaluation.hpp"
#include "mmdm/synthetic.hpp"
#include "mmdm/trainer.hpp"

namespace mmdm {

struct DataConfig {
  std::string dir;  // empty: synthesize from `generator`
  GeneratorConfig generator;
  std::uint64_t seed = 0;
};

/// Everything a CLI run needs. Sampling reuses train.diffusion_steps and the
/// training condition dropout.
struct RunConfig {
  std::string preset = "desk";
  ModelConfig model;
  TrainConfig train;
  double guidance_scale = 2.5;
  double infer_mask_ratio = 0.0;
  DataConfig data;
  EvalConfig eval;
  std::string out_dir = "mmdm_out";

  void validate() const;
  GuidanceConfig guidance() const { return {guidance_scale, train.condition_dropout_prob}; }
  SamplingConfig sampling() const { return {train.diffusion_steps, guidance(), infer_mask_ratio}; }
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

/// Named starting points: "desk", "micro", "large".
RunConfig preset_config(const std::string& name);

/// Builds a run config from the preset named in `user` (default "desk") with
/// `user` merged over it. Every unknown or ill-typed key is reported in one
/// InvalidConfig error.
RunConfig run_config_from_json(const nlohmann::json& user);

RunConfig load_run_config(const std::filesystem::path& path);

/// Applies a dotted-path override such as "train.total_steps=200". The value
/// is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& user, const std::string& assignment);

}  // namespace mmdm
