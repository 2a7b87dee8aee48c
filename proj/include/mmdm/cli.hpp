#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mmdm/config.hpp"
#include "mmdm/evaluation.hpp"

namespace mmdm {

/// Dataset for a run: data.dir, else $MMDM_DATA_DIR, else the synthetic generator.
Dataset load_run_dataset(const RunConfig& config);

/// Trains per `config` and writes model.ckpt, train_log.jsonl and
/// config.json under `out_dir`.
TrainResult run_training(const RunConfig& config, const Dataset& data, const std::filesystem::path& out_dir);

/// Trains the evaluator and scores `model` (null: the ground truth).
MetricsReport run_evaluation(const Denoiser* model, const RunConfig& config, const Dataset& data,
                             int diffusion_steps);

enum class Sweep { MaskRatio, Architecture };

struct AblationRow {
  std::string label;
  std::optional<MetricsReport> report;
  std::string error;  // set when the variant failed
};

std::vector<AblationRow> run_ablation(const RunConfig& base, Sweep sweep, const std::vector<std::string>& values,
                                      const std::filesystem::path& out_dir);
std::string format_ablation_table(Sweep sweep, const std::vector<AblationRow>& rows);

/// Parses "6+2" into encoder and decoder depths.
std::pair<int, int> parse_arch(const std::string& text);

/// Entry point shared by the executable and the tests. Exit codes: 0 success,
/// 2 usage or configuration error, 1 runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmdm
