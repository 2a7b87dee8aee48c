#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmdm/denoiser.hpp"
#include "mmdm/diffusion.hpp"
#include "mmdm/losses.hpp"
#include "mmdm/optimizer.hpp"
#include "mmdm/synthetic.hpp"

namespace mmdm {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int total_steps = 5000;
  double mask_ratio = 0.2;
  std::uint64_t seed = 0;
  int checkpoint_interval = 1000;  // 0: final checkpoint only
  double condition_dropout_prob = 0.1;
  int diffusion_steps = 1000;
  double contact_threshold = 0.0;  // m/s; 0 selects 0.01·fps
  LossWeights weights;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

/// One example prepared for training: clean frames, caption tokens, ground-truth contacts.
struct TrainingSample {
  Mat x0;
  TextCondition text;
  FootContactLabels contacts;
};

std::vector<TrainingSample> prepare_samples(const Dataset& data, const Denoiser& model, const TrainConfig& config);

/// Everything needed to continue training bit-exactly.
struct TrainState {
  Denoiser model;
  AdamState adam;
  std::mt19937_64 rng;
  std::int64_t step = 0;
  std::vector<int> order;  // current epoch permutation
  std::size_t cursor = 0;  // next position in `order`
};

TrainState init_train_state(const ModelConfig& model, const Skeleton& skeleton, const TrainConfig& config);

/// Next batch of dataset indices from the shuffled epoch order.
std::vector<int> next_batch(TrainState& state, int dataset_size, int batch_size);

/// Samples t, noises, masks and drops conditions per example, then applies one
/// Adam update on the batch-mean loss.
LossBreakdown train_step(TrainState& state, const std::vector<const TrainingSample*>& batch,
                         const NoiseSchedule& schedule, const TrainConfig& config);

struct TrainOutputs {
  std::filesystem::path checkpoint;   // final checkpoint path (empty: none)
  std::filesystem::path periodic_dir; // where periodic checkpoints go (empty: none)
  std::filesystem::path log;          // line-delimited JSON loss log (empty: none)
};

struct TrainResult {
  TrainState state;
  std::vector<LossBreakdown> history;
};

using StepCallback = std::function<void(std::int64_t step, const LossBreakdown&)>;

/// Runs train_step until state.step == config.total_steps. With `resume`,
/// continues from a loaded state instead of a fresh initialisation.
TrainResult train(const Dataset& data, const TrainConfig& config, const ModelConfig& model,
                  const TrainOutputs& outputs = {}, std::optional<TrainState> resume = std::nullopt,
                  const StepCallback& on_step = {});

std::string loss_record(std::int64_t step, const LossBreakdown& b);

}  // namespace mmdm
