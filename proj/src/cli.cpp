#include "mmdm/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "mmdm/checkpoint.hpp"
#include "mmdm/motion_io.hpp"
#include "mmdm/render.hpp"

namespace mmdm {

namespace fs = std::filesystem;

Dataset load_run_dataset(const RunConfig& config) {
  std::string dir = config.data.dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("MMDM_DATA_DIR"); env && *env) dir = env;
  }
  if (!dir.empty()) return load_motion_dir(dir);
  return generate_synthetic_dataset(config.data.generator, config.data.seed);
}

TrainResult run_training(const RunConfig& config, const Dataset& data, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream cfg(out_dir / "config.json");
    cfg << to_json(config).dump(2) << '\n';
  }
  TrainOutputs outputs;
  outputs.checkpoint = out_dir / "model.ckpt";
  outputs.log = out_dir / "train_log.jsonl";
  if (config.train.checkpoint_interval > 0) outputs.periodic_dir = out_dir / "checkpoints";
  return train(data, config.train, config.model, outputs);
}

MetricsReport run_evaluation(const Denoiser* model, const RunConfig& config, const Dataset& data,
                             int diffusion_steps) {
  if (model && !(model->skeleton() == data.skeleton))
    throw Error(ErrorKind::Incompatible, "checkpoint skeleton does not match the dataset skeleton");
  const EvaluatorEmbedder evaluator = train_evaluator(data, config.eval.evaluator_seed, config.eval.evaluator);
  SamplingConfig sampling = config.sampling();
  sampling.diffusion_steps = diffusion_steps;
  return evaluate(model, data, evaluator, sampling, config.eval);
}

std::pair<int, int> parse_arch(const std::string& text) {
  const auto plus = text.find('+');
  try {
    if (plus != std::string::npos) {
      std::size_t a = 0, b = 0;
      const int enc = std::stoi(text.substr(0, plus), &a);
      const int dec = std::stoi(text.substr(plus + 1), &b);
      if (a == plus && b == text.size() - plus - 1) return {enc, dec};
    }
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidConfig, "architecture '" + text + "' is not of the form E+D");
}

std::vector<AblationRow> run_ablation(const RunConfig& base, Sweep sweep, const std::vector<std::string>& values,
                                      const fs::path& out_dir) {
  std::vector<std::string> grid = values;
  if (grid.empty()) {
    if (sweep == Sweep::MaskRatio)
      grid = {"0.1", "0.2", "0.3", "0.4"};
    else
      grid = {"4+2", "6+2", "8+4", "12+4"};
  }
  // Parse every variant up front so a malformed grid is a usage error.
  std::vector<RunConfig> variants;
  std::vector<std::string> labels;
  for (const auto& v : grid) {
    RunConfig c = base;
    if (sweep == Sweep::MaskRatio) {
      std::size_t used = 0;
      double ratio = 0.0;
      try {
        ratio = std::stod(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != v.size()) throw Error(ErrorKind::InvalidConfig, "mask ratio '" + v + "' is not a number");
      c.train.mask_ratio = ratio;
      labels.push_back(v);
    } else {
      const auto [enc, dec] = parse_arch(v);
      c.model.encoder_layers = enc;
      c.model.decoder_layers = dec;
      labels.push_back(c.model.arch_label());
    }
    variants.push_back(std::move(c));
  }

  const Dataset data = load_run_dataset(base);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    AblationRow row{labels[i], std::nullopt, {}};
    char name[32];
    std::snprintf(name, sizeof name, "variant_%02zu", i);
    try {
      variants[i].validate();
      const TrainResult trained = run_training(variants[i], data, out_dir / name);
      row.report = run_evaluation(&trained.state.model, variants[i], data, variants[i].train.diffusion_steps);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(Sweep sweep, const std::vector<AblationRow>& rows) {
  std::ostringstream s;
  auto cell = [&](const MetricStat& m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f±%.3f", m.mean, m.ci95);
    return std::string(buf);
  };
  s << "| " << (sweep == Sweep::MaskRatio ? "Ratio" : "Arch")
    << " | FID | Top-3 R-Precision | MM-D | Div | MM |\n";
  s << "|---|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    s << "| " << row.label << " | ";
    if (!row.report) {
      s << "failed: " << row.error << " | | | | |\n";
      continue;
    }
    const MetricsReport& r = *row.report;
    s << cell(r.fid) << " | " << cell(r.r_precision_top3) << " | " << cell(r.mm_dist) << " | " << cell(r.diversity)
      << " | " << (r.multimodality ? cell(*r.multimodality) : std::string("-")) << " |\n";
  }
  return s.str();
}

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "Seed for training and evaluation");
  cmd->add_option("--out", c.out, "Output location");
  cmd->add_option("--set", c.sets, "Override a config key, e.g. train.total_steps=200");
}

RunConfig resolve(const Common& c) {
  nlohmann::json user = nlohmann::json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config file " + c.config);
    try {
      user = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidConfig, "config file " + c.config + ": " + e.what());
    }
  }
  for (const auto& s : c.sets) apply_override(user, s);
  if (c.seed) {
    apply_override(user, "train.seed=" + std::to_string(*c.seed));
    apply_override(user, "eval.seed=" + std::to_string(*c.seed));
  }
  RunConfig config = run_config_from_json(user);
  if (!c.out.empty()) config.out_dir = c.out;
  return config;
}

void print_breakdown(std::ostream& out, std::int64_t step, const LossBreakdown& b) {
  out << loss_record(step, b) << '\n';
}

int cmd_train(const Common& c, std::ostream& out) {
  const RunConfig config = resolve(c);
  const Dataset data = load_run_dataset(config);
  const TrainResult result = run_training(config, data, config.out_dir);
  if (!result.history.empty()) print_breakdown(out, result.state.step, result.history.back());
  out << "checkpoint: " << (fs::path(config.out_dir) / "model.ckpt").string() << '\n';
  return 0;
}

struct SampleArgs {
  std::string checkpoint;
  std::string caption;
  int length = 0;
  std::uint64_t seed = 0;
  double guidance_scale = 2.5;
  double infer_mask_ratio = 0.0;
  std::string config;
  std::string out = "sample.mmot";
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const nlohmann::json header = read_checkpoint_header(a.checkpoint);
  const Denoiser model = load_denoiser(a.checkpoint);
  if (!a.config.empty()) {
    const RunConfig config = load_run_config(a.config);
    if (!(config.model == model.config()))
      throw Error(ErrorKind::Incompatible, "model section of " + a.config + " does not match checkpoint " +
                                               a.checkpoint + " (" + to_json(config.model).dump() + " vs " +
                                               to_json(model.config()).dump() + ")");
  }
  if (a.length < 1 || a.length > model.config().max_length)
    throw Error(ErrorKind::InvalidConfig, "--length must be in [1, " + std::to_string(model.config().max_length) +
                                              "], got " + std::to_string(a.length));
  const TrainConfig train = train_config_from_json(header.at("train"));
  SamplingConfig sampling;
  sampling.diffusion_steps = train.diffusion_steps;
  sampling.guidance = {a.guidance_scale, train.condition_dropout_prob};
  sampling.guidance.validate();
  sampling.infer_mask_ratio = a.infer_mask_ratio;
  const NoiseSchedule schedule = make_cosine_schedule(sampling.diffusion_steps);
  MotionSequence motion;
  motion.frames = generate_motion(model, a.caption, a.length, schedule, sampling, a.seed);
  motion.channels = model.skeleton().channel_count();
  motion.dim = Skeleton::kFeatureDim;
  motion.caption = a.caption;
  const fs::path path(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_motion(path, motion);
  write_skeleton(path.parent_path() / "skeleton.json", model.skeleton());
  out << nlohmann::json{{"file", path.string()},
                        {"caption", a.caption},
                        {"frames", a.length},
                        {"seed", a.seed},
                        {"guidance_scale", a.guidance_scale},
                        {"diffusion_steps", sampling.diffusion_steps}}
             .dump()
      << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint, std::optional<int> repeats, std::ostream& out) {
  RunConfig config = resolve(c);
  if (repeats) {
    config.eval.repeats = *repeats;
    config.validate();
  }
  const Dataset data = load_run_dataset(config);
  MetricsReport report;
  if (checkpoint.empty()) {
    report = run_evaluation(nullptr, config, data, config.train.diffusion_steps);
  } else {
    const Denoiser model = load_denoiser(checkpoint);
    const TrainConfig train = train_config_from_json(read_checkpoint_header(checkpoint).at("train"));
    report = run_evaluation(&model, config, data, train.diffusion_steps);
  }
  fs::path path = c.out.empty() ? fs::path(config.out_dir) / "metrics.json" : fs::path(c.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path);
  if (!file) throw Error(ErrorKind::Io, "cannot write " + path.string());
  file << report.to_json().dump(2) << '\n';
  out << report.to_json().dump() << '\n';
  return 0;
}

int cmd_ablate(const Common& c, const std::string& sweep_name, const std::vector<std::string>& values,
               std::ostream& out) {
  const RunConfig config = resolve(c);
  Sweep sweep;
  if (sweep_name == "ratio")
    sweep = Sweep::MaskRatio;
  else if (sweep_name == "arch")
    sweep = Sweep::Architecture;
  else
    throw Error(ErrorKind::InvalidConfig, "--sweep must be 'ratio' or 'arch'");
  const fs::path dir = fs::path(config.out_dir) / ("ablation_" + sweep_name);
  const auto rows = run_ablation(config, sweep, values, dir);
  const std::string table = format_ablation_table(sweep, rows);
  std::ofstream(dir / "table.md") << table;
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"label", r.label},
                         {"metrics", r.report ? r.report->to_json() : nlohmann::json(nullptr)},
                         {"error", r.error}});
  std::ofstream(dir / "table.json") << rows_json.dump(2) << '\n';
  out << table;
  return 0;
}

int cmd_render(const std::string& input, const std::string& skeleton_path, const std::string& out_dir,
               const std::string& format, std::ostream& out) {
  if (format != "ppm") throw Error(ErrorKind::InvalidConfig, "unsupported image format '" + format + "'");
  const MotionSequence motion = read_motion(input);
  const fs::path sk = skeleton_path.empty() ? fs::path(input).parent_path() / "skeleton.json" : fs::path(skeleton_path);
  const Skeleton skeleton = read_skeleton(sk);
  motion.validate_against(skeleton);
  const auto paths = render_to_dir(skeleton, motion.frames, out_dir);
  out << "wrote " << paths.size() << " images to " << out_dir << '\n';
  return 0;
}

int exit_code(ErrorKind kind) {
  return kind == ErrorKind::InvalidConfig || kind == ErrorKind::Incompatible ? 2 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked motion diffusion: train, sample, evaluate, ablate, render", "mmdm"};
  app.require_subcommand(1);

  Common train_c, eval_c, ablate_c;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a denoiser");
  add_common(train_cmd, train_c);

  SampleArgs sample;
  std::optional<std::uint64_t> sample_seed;
  CLI::App* sample_cmd = app.add_subcommand("sample", "Generate one motion from a caption");
  sample_cmd->add_option("--checkpoint", sample.checkpoint)->required();
  sample_cmd->add_option("--caption", sample.caption)->required();
  sample_cmd->add_option("--length", sample.length)->required();
  sample_cmd->add_option("--seed", sample_seed);
  sample_cmd->add_option("--guidance-scale", sample.guidance_scale);
  sample_cmd->add_option("--infer-mask-ratio", sample.infer_mask_ratio);
  sample_cmd->add_option("--config", sample.config, "Run config whose model section must match the checkpoint");
  sample_cmd->add_option("--out", sample.out, "Output .mmot path");

  std::string eval_checkpoint;
  std::optional<int> repeats;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint, or the ground truth without one");
  add_common(eval_cmd, eval_c);
  eval_cmd->add_option("--checkpoint", eval_checkpoint);
  eval_cmd->add_option("--repeats", repeats);

  std::string sweep = "ratio";
  std::vector<std::string> values;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate a grid of variants");
  add_common(ablate_cmd, ablate_c);
  ablate_cmd->add_option("--sweep", sweep, "ratio or arch");
  ablate_cmd->add_option("--values", values, "Grid override, e.g. 0.1 0.3 or 6+2");

  std::string render_in, render_skeleton, render_out = "frames", render_format = "ppm";
  CLI::App* render_cmd = app.add_subcommand("render", "Draw a motion file as stick-figure images");
  render_cmd->add_option("--input", render_in)->required();
  render_cmd->add_option("--skeleton", render_skeleton, "Defaults to skeleton.json next to the input");
  render_cmd->add_option("--out", render_out);
  render_cmd->add_option("--format", render_format);

  std::vector<std::string> argv_store{"mmdm"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_c, out);
    if (*sample_cmd) {
      if (sample_seed) sample.seed = *sample_seed;
      return cmd_sample(sample, out);
    }
    if (*eval_cmd) return cmd_evaluate(eval_c, eval_checkpoint, repeats, out);
    if (*ablate_cmd) return cmd_ablate(ablate_c, sweep, values, out);
    if (*render_cmd) return cmd_render(render_in, render_skeleton, render_out, render_format, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace mmdm
