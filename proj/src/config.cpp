#include "mmdm/config.hpp"

#include <fstream>
#include <sstream>

#include "mmdm/error.hpp"

namespace mmdm {

namespace {

MaskKind mask_kind_from_string(const std::string& name) {
  if (name == "time_frames") return MaskKind::TimeFrames;
  if (name == "body_parts") return MaskKind::BodyParts;
  throw Error(ErrorKind::InvalidConfig, "unknown masking strategy '" + name + "'");
}

// Collects every key of `user` that has no counterpart in `schema`.
void unknown_keys(const nlohmann::json& user, const nlohmann::json& schema, const std::string& prefix,
                  std::vector<std::string>& out) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) {
      out.push_back(path);
    } else if (it.value().is_object()) {
      if (schema.at(it.key()).is_object())
        unknown_keys(it.value(), schema.at(it.key()), path, out);
      else
        out.push_back(path + " (expected a value, got an object)");
    } else if (schema.at(it.key()).is_object()) {
      out.push_back(path + " (expected an object)");
    }
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& value, const std::string& section,
          std::vector<std::string>& bad) {
  if (!j.contains(key)) return;
  try {
    value = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad.push_back(section + "." + key + " (wrong type)");
  }
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
  return {{"strategy", to_string(c.strategy)}, {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers}, {"hidden_dim", c.hidden_dim},
          {"heads", c.heads},                   {"max_length", c.max_length},
          {"ff_mult", c.ff_mult}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  std::vector<std::string> bad;
  std::string strategy = to_string(c.strategy);
  read(j, "strategy", strategy, "model", bad);
  read(j, "encoder_layers", c.encoder_layers, "model", bad);
  read(j, "decoder_layers", c.decoder_layers, "model", bad);
  read(j, "hidden_dim", c.hidden_dim, "model", bad);
  read(j, "heads", c.heads, "model", bad);
  read(j, "max_length", c.max_length, "model", bad);
  read(j, "ff_mult", c.ff_mult, "model", bad);
  if (!bad.empty()) throw Error(ErrorKind::InvalidConfig, "invalid model keys: " + nlohmann::json(bad).dump());
  c.strategy = mask_kind_from_string(strategy);
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"mask_ratio", c.mask_ratio},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"condition_dropout_prob", c.condition_dropout_prob},
          {"diffusion_steps", c.diffusion_steps},
          {"contact_threshold", c.contact_threshold},
          {"lambda_pos", c.weights.pos},
          {"lambda_vel", c.weights.vel},
          {"lambda_foot", c.weights.foot},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  std::vector<std::string> bad;
  read(j, "learning_rate", c.learning_rate, "train", bad);
  read(j, "batch_size", c.batch_size, "train", bad);
  read(j, "total_steps", c.total_steps, "train", bad);
  read(j, "mask_ratio", c.mask_ratio, "train", bad);
  read(j, "seed", c.seed, "train", bad);
  read(j, "checkpoint_interval", c.checkpoint_interval, "train", bad);
  read(j, "condition_dropout_prob", c.condition_dropout_prob, "train", bad);
  read(j, "diffusion_steps", c.diffusion_steps, "train", bad);
  read(j, "contact_threshold", c.contact_threshold, "train", bad);
  read(j, "lambda_pos", c.weights.pos, "train", bad);
  read(j, "lambda_vel", c.weights.vel, "train", bad);
  read(j, "lambda_foot", c.weights.foot, "train", bad);
  read(j, "adam_beta1", c.adam_beta1, "train", bad);
  read(j, "adam_beta2", c.adam_beta2, "train", bad);
  read(j, "adam_eps", c.adam_eps, "train", bad);
  if (!bad.empty()) throw Error(ErrorKind::InvalidConfig, "invalid train keys: " + nlohmann::json(bad).dump());
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  const auto& g = c.data.generator;
  const auto& e = c.eval;
  return {{"preset", c.preset},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"guidance", {{"scale", c.guidance_scale}}},
          {"sampling", {{"infer_mask_ratio", c.infer_mask_ratio}}},
          {"data",
           {{"dir", c.data.dir},
            {"archetypes", g.archetypes},
            {"samples_per_archetype", g.samples_per_archetype},
            {"min_length", g.min_length},
            {"max_length", g.max_length},
            {"fps", g.fps},
            {"representation", to_string(g.mode)},
            {"seed", c.data.seed}}},
          {"eval",
           {{"repeats", e.repeats},
            {"pool_size", e.pool_size},
            {"diversity_subset", e.diversity_subset},
            {"mm_prompts", e.mm_prompts},
            {"mm_per_prompt", e.mm_per_prompt},
            {"samples", e.samples},
            {"seed", e.seed},
            {"evaluator_seed", e.evaluator_seed},
            {"evaluator",
             {{"embed_dim", e.evaluator.embed_dim},
              {"hidden", e.evaluator.hidden},
              {"steps", e.evaluator.steps},
              {"batch_size", e.evaluator.batch_size},
              {"learning_rate", e.evaluator.learning_rate},
              {"temperature", e.evaluator.temperature}}}}},
          {"output", {{"dir", c.out_dir}}}};
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") return c;
  if (name == "micro") {
    c.model.encoder_layers = 2;
    c.model.decoder_layers = 1;
    c.model.hidden_dim = 32;
    c.model.heads = 2;
    c.model.max_length = 32;
    c.train.learning_rate = 5e-3;
    c.train.adam_beta2 = 0.99;
    c.train.batch_size = 8;
    c.train.total_steps = 300;
    c.train.diffusion_steps = 100;
    c.train.checkpoint_interval = 0;
    c.data.generator.samples_per_archetype = 4;
    c.data.generator.min_length = 16;
    c.data.generator.max_length = 24;
    c.eval.repeats = 2;
    c.eval.pool_size = 4;
    c.eval.diversity_subset = 4;
    c.eval.mm_prompts = 2;
    c.eval.mm_per_prompt = 2;
    c.eval.evaluator.steps = 200;
    c.eval.evaluator.batch_size = 16;
    return c;
  }
  if (name == "large") {
    c.model.hidden_dim = 512;
    c.model.heads = 8;
    c.model.max_length = 196;
    c.data.generator.max_length = 196;
    return c;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown preset '" + name + "'");
}

RunConfig run_config_from_json(const nlohmann::json& user) {
  require(user.is_object(), ErrorKind::InvalidConfig, "config must be a JSON object");
  std::string preset = "desk";
  if (user.contains("preset")) {
    require(user.at("preset").is_string(), ErrorKind::InvalidConfig, "preset must be a string");
    preset = user.at("preset").get<std::string>();
  }
  nlohmann::json merged = to_json(preset_config(preset));
  std::vector<std::string> bad;
  std::vector<std::string> unknown;
  unknown_keys(user, merged, "", unknown);
  merged.merge_patch(user);

  RunConfig c;
  c.preset = preset;
  std::vector<std::string> errors;
  for (const auto& k : unknown) errors.push_back("unknown key " + k);
  auto section = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.push_back(e.detail());
    }
  };
  section([&] { c.model = model_config_from_json(merged.at("model")); });
  section([&] { c.train = train_config_from_json(merged.at("train")); });
  read(merged.at("guidance"), "scale", c.guidance_scale, "guidance", bad);
  read(merged.at("sampling"), "infer_mask_ratio", c.infer_mask_ratio, "sampling", bad);
  const auto& d = merged.at("data");
  auto& g = c.data.generator;
  std::string representation = "positions";
  read(d, "dir", c.data.dir, "data", bad);
  read(d, "archetypes", g.archetypes, "data", bad);
  read(d, "samples_per_archetype", g.samples_per_archetype, "data", bad);
  read(d, "min_length", g.min_length, "data", bad);
  read(d, "max_length", g.max_length, "data", bad);
  read(d, "fps", g.fps, "data", bad);
  read(d, "representation", representation, "data", bad);
  read(d, "seed", c.data.seed, "data", bad);
  section([&] { g.mode = representation_from_string(representation); });
  const auto& e = merged.at("eval");
  read(e, "repeats", c.eval.repeats, "eval", bad);
  read(e, "pool_size", c.eval.pool_size, "eval", bad);
  read(e, "diversity_subset", c.eval.diversity_subset, "eval", bad);
  read(e, "mm_prompts", c.eval.mm_prompts, "eval", bad);
  read(e, "mm_per_prompt", c.eval.mm_per_prompt, "eval", bad);
  read(e, "samples", c.eval.samples, "eval", bad);
  read(e, "seed", c.eval.seed, "eval", bad);
  read(e, "evaluator_seed", c.eval.evaluator_seed, "eval", bad);
  const auto& ev = e.at("evaluator");
  read(ev, "embed_dim", c.eval.evaluator.embed_dim, "eval.evaluator", bad);
  read(ev, "hidden", c.eval.evaluator.hidden, "eval.evaluator", bad);
  read(ev, "steps", c.eval.evaluator.steps, "eval.evaluator", bad);
  read(ev, "batch_size", c.eval.evaluator.batch_size, "eval.evaluator", bad);
  read(ev, "learning_rate", c.eval.evaluator.learning_rate, "eval.evaluator", bad);
  read(ev, "temperature", c.eval.evaluator.temperature, "eval.evaluator", bad);
  read(merged.at("output"), "dir", c.out_dir, "output", bad);
  for (auto& b : bad) errors.push_back(b);
  if (!errors.empty()) {
    std::string msg = "config has errors:";
    for (const auto& m : errors) msg += "\n  " + m;
    throw Error(ErrorKind::InvalidConfig, msg);
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.push_back(e.detail());
    }
  };
  check([&] { model.validate(); });
  check([&] { train.validate(); });
  check([&] { guidance().validate(); });
  if (infer_mask_ratio < 0.0 || infer_mask_ratio >= 1.0) errors.push_back("sampling.infer_mask_ratio must be in [0,1)");
  const auto& g = data.generator;
  if (g.min_length < 2 || g.max_length < g.min_length) errors.push_back("data lengths must satisfy 2 <= min <= max");
  if (g.max_length > model.max_length) errors.push_back("data.max_length exceeds model.max_length");
  if (g.samples_per_archetype < 1) errors.push_back("data.samples_per_archetype must be >= 1");
  if (!(g.fps > 0.0f)) errors.push_back("data.fps must be positive");
  if (eval.repeats < 1) errors.push_back("eval.repeats must be >= 1");
  if (eval.pool_size < 1) errors.push_back("eval.pool_size must be >= 1");
  if (eval.diversity_subset < 1) errors.push_back("eval.diversity_subset must be >= 1");
  if (eval.evaluator.steps < 0 || eval.evaluator.batch_size < 2) errors.push_back("eval.evaluator needs batch_size >= 2");
  if (!errors.empty()) {
    std::string msg = "config has errors:";
    for (const auto& m : errors) msg += "\n  " + m;
    throw Error(ErrorKind::InvalidConfig, msg);
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config file " + path.string());
  nlohmann::json user;
  try {
    user = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(user);
}

void apply_override(nlohmann::json& user, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::InvalidConfig,
          "override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &user;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    nlohmann::json& next = (*node)[parts[i]];
    if (!next.is_object()) next = nlohmann::json::object();
    node = &next;
  }
  (*node)[parts.back()] = value;
}

}  // namespace mmdm
