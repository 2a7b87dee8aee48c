#include "mmdm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mmdm/checkpoint.hpp"

namespace mmdm {

void TrainConfig::validate() const {
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidConfig,
          "learning_rate must be finite and >= 0");
  require(batch_size >= 1, ErrorKind::InvalidConfig, "batch_size must be >= 1");
  require(total_steps >= 0, ErrorKind::InvalidConfig, "total_steps must be >= 0");
  require(mask_ratio >= 0.0 && mask_ratio < 1.0, ErrorKind::InvalidConfig, "mask_ratio must be in [0, 1)");
  require(checkpoint_interval >= 0, ErrorKind::InvalidConfig, "checkpoint_interval must be >= 0");
  require(condition_dropout_prob >= 0.0 && condition_dropout_prob < 1.0, ErrorKind::InvalidConfig,
          "condition_dropout_prob must be in [0, 1)");
  require(diffusion_steps >= 2, ErrorKind::InvalidConfig, "diffusion_steps must be >= 2");
  require(contact_threshold >= 0.0, ErrorKind::InvalidConfig, "contact_threshold must be >= 0");
  weights.validate();
}

std::vector<TrainingSample> prepare_samples(const Dataset& data, const Denoiser& model, const TrainConfig& config) {
  require(!data.motions.empty(), ErrorKind::InvalidInput, "dataset is empty");
  std::vector<TrainingSample> samples;
  samples.reserve(data.size());
  for (const auto& m : data.motions) {
    m.validate_against(model.skeleton());
    require(m.length() <= model.config().max_length, ErrorKind::InvalidInput,
            "motion of length " + std::to_string(m.length()) + " exceeds model max_length");
    const double threshold = config.contact_threshold > 0 ? config.contact_threshold : default_contact_threshold(m.fps);
    samples.push_back({m.frames, model.text().tokenize(m.caption),
                       detect_foot_contact(model.skeleton(), forward_kinematics(model.skeleton(), m.frames), m.fps,
                                           threshold)});
  }
  return samples;
}

TrainState init_train_state(const ModelConfig& model, const Skeleton& skeleton, const TrainConfig& config) {
  return TrainState{Denoiser(model, skeleton, config.seed), AdamState{}, std::mt19937_64(config.seed ^ 0x5eedULL), 0,
                    {}, 0};
}

std::vector<int> next_batch(TrainState& state, int dataset_size, int batch_size) {
  require(dataset_size >= 1, ErrorKind::InvalidInput, "dataset is empty");
  std::vector<int> batch;
  batch.reserve(batch_size);
  while (static_cast<int>(batch.size()) < batch_size) {
    if (state.cursor >= state.order.size() || static_cast<int>(state.order.size()) != dataset_size) {
      state.order.resize(dataset_size);
      std::iota(state.order.begin(), state.order.end(), 0);
      std::shuffle(state.order.begin(), state.order.end(), state.rng);
      state.cursor = 0;
    }
    batch.push_back(state.order[state.cursor++]);
  }
  return batch;
}

LossBreakdown train_step(TrainState& state, const std::vector<const TrainingSample*>& batch,
                         const NoiseSchedule& schedule, const TrainConfig& config) {
  require(!batch.empty(), ErrorKind::InvalidInput, "empty batch");
  Denoiser& model = state.model;
  model.params().zero_grad();
  std::uniform_int_distribution<int> pick_t(0, schedule.steps() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  LossBreakdown mean;
  std::vector<int> timesteps;
  for (const TrainingSample* sample : batch) {
    const int t = pick_t(state.rng);
    timesteps.push_back(t);
    const Mat noise = gaussian(sample->x0.rows(), sample->x0.cols(), state.rng);
    const Mat x_t = q_sample(sample->x0, t, noise, schedule);
    std::optional<MaskSpec> mask;
    if (config.mask_ratio > 0.0)
      mask = sample_mask(model.config().strategy, model.mask_slots(static_cast<int>(x_t.rows())), config.mask_ratio,
                         state.rng);
    bool drop = false;
    if (config.condition_dropout_prob > 0.0) drop = unit(state.rng) < config.condition_dropout_prob;

    ad::Graph g;
    ad::Var out = model.forward(g, x_t, t, drop ? TextCondition::null() : sample->text, mask ? &*mask : nullptr);
    LossResult loss = compute_losses(sample->x0, out.value(), sample->contacts, model.skeleton(), config.weights);
    g.backward(out, loss.grad * inv_batch);
    mean.simple += loss.breakdown.simple * inv_batch;
    mean.pos += loss.breakdown.pos * inv_batch;
    mean.foot += loss.breakdown.foot * inv_batch;
    mean.vel += loss.breakdown.vel * inv_batch;
    mean.total += loss.breakdown.total * inv_batch;
  }
  if (!std::isfinite(mean.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << state.step << " (simple=" << mean.simple << " pos=" << mean.pos
        << " foot=" << mean.foot << " vel=" << mean.vel << ", timesteps:";
    for (int t : timesteps) msg << ' ' << t;
    msg << ')';
    throw Error(ErrorKind::TrainingFailure, msg.str());
  }
  adam_update(model.params(), state.adam, config.adam());
  ++state.step;
  return mean;
}

std::string loss_record(std::int64_t step, const LossBreakdown& b) {
  nlohmann::json j{{"step", step}, {"simple", b.simple}, {"pos", b.pos},
                   {"foot", b.foot}, {"vel", b.vel},       {"total", b.total}};
  return j.dump();
}

TrainResult train(const Dataset& data, const TrainConfig& config, const ModelConfig& model,
                  const TrainOutputs& outputs, std::optional<TrainState> resume, const StepCallback& on_step) {
  config.validate();
  TrainResult result{resume ? std::move(*resume) : init_train_state(model, data.skeleton, config), {}};
  TrainState& state = result.state;
  require(state.model.config() == model, ErrorKind::Incompatible, "resumed checkpoint has a different model config");
  require(state.model.skeleton() == data.skeleton, ErrorKind::Incompatible,
          "dataset skeleton does not match the model");
  const std::vector<TrainingSample> samples = prepare_samples(data, state.model, config);
  const NoiseSchedule schedule = make_cosine_schedule(config.diffusion_steps);

  std::ofstream log;
  if (!outputs.log.empty()) {
    log.open(outputs.log, state.step == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw Error(ErrorKind::Io, "cannot open training log " + outputs.log.string());
  }
  if (!outputs.periodic_dir.empty()) std::filesystem::create_directories(outputs.periodic_dir);

  while (state.step < config.total_steps) {
    const std::vector<int> idx = next_batch(state, static_cast<int>(samples.size()), config.batch_size);
    std::vector<const TrainingSample*> batch;
    for (int i : idx) batch.push_back(&samples[i]);
    const LossBreakdown b = train_step(state, batch, schedule, config);
    result.history.push_back(b);
    if (log.is_open()) {
      log << loss_record(state.step, b) << '\n';
      if (!log) throw Error(ErrorKind::Io, "write failed for training log at step " + std::to_string(state.step));
    }
    if (on_step) on_step(state.step, b);
    if (!outputs.periodic_dir.empty() && config.checkpoint_interval > 0 && state.step % config.checkpoint_interval == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "step_%08lld.ckpt", static_cast<long long>(state.step));
      try {
        save_checkpoint(outputs.periodic_dir / name, state, config);
      } catch (const Error& e) {
        throw Error(ErrorKind::Io, "checkpoint at step " + std::to_string(state.step) + ": " + e.what());
      }
    }
  }
  if (!outputs.checkpoint.empty()) save_checkpoint(outputs.checkpoint, state, config);
  return result;
}

}  // namespace mmdm
