#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmdm/autodiff.hpp"
#include "mmdm/denoiser.hpp"
#include "mmdm/diffusion.hpp"
#include "mmdm/synthetic.hpp"
#include "mmdm/text.hpp"

namespace mmdm {

struct EvaluatorConfig {
  int embed_dim = 32;
  int hidden = 64;
  int steps = 400;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double temperature = 1.0;
};

/// Shared text/motion embedding space used by every metric. Motions enter as
/// fixed kinematic statistics (per-coordinate mean, spread and speed of FK
/// positions) followed by an MLP; captions as mean-pooled word embeddings.
class EvaluatorEmbedder {
 public:
  EvaluatorEmbedder(Skeleton skeleton, const EvaluatorConfig& config, std::uint64_t seed);

  int embed_dim() const { return config_.embed_dim; }
  const Skeleton& skeleton() const { return skeleton_; }
  const ad::ParameterSet& params() const { return *params_; }
  ad::ParameterSet& params() { return *params_; }

  /// Kinematic statistics fed to the motion encoder (unnormalized).
  RowVec motion_statistics(const Mat& frames) const;
  void set_normalization(RowVec mean, RowVec scale);

  Mat embed_motions(const std::vector<Mat>& motions) const;
  Mat embed_texts(const std::vector<std::string>& captions) const;

  ad::Var motion_graph(ad::Graph& g, const Mat& stats) const;
  ad::Var text_graph(ad::Graph& g, const std::vector<std::string>& captions) const;

 private:
  Skeleton skeleton_;
  EvaluatorConfig config_;
  Vocabulary vocab_;
  RowVec stat_mean_;
  RowVec stat_scale_;
  std::unique_ptr<ad::ParameterSet> params_;
};

/// Contrastive training on matched (caption, motion) pairs; deterministic per
/// seed. Throws TrainingFailure if the motion embeddings collapse.
EvaluatorEmbedder train_evaluator(const Dataset& data, std::uint64_t seed, const EvaluatorConfig& config = {});

struct FidDiagnostics {
  double clamped_eigenvalue_mass = 0.0;  // |negative eigenvalues| beyond tolerance that were clamped
};

/// Fréchet distance between Gaussian fits of two feature sets (rows = samples).
double compute_fid(const Mat& features_a, const Mat& features_b, FidDiagnostics* diagnostics = nullptr);

struct RPrecision {
  double top1 = 0.0;
  double top2 = 0.0;
  double top3 = 0.0;
};

/// Distractors are drawn uniformly from the other samples, or, when `groups`
/// is given, one from each of pool_size − 1 other groups.
RPrecision r_precision(const Mat& text_embs, const Mat& motion_embs, int pool_size, std::uint64_t seed,
                       const std::vector<int>* groups = nullptr);

double diversity(const Mat& features, int subset_size, std::uint64_t seed, int repeats = 1);
double multimodality(const std::vector<Mat>& groups);
double mm_dist(const Mat& text_embs, const Mat& motion_embs);

struct MetricStat {
  double mean = 0.0;
  double ci95 = 0.0;  // half-width; 0 for a single repeat
};

struct MetricsReport {
  int repeats = 0;
  MetricStat fid;
  MetricStat r_precision_top1;
  MetricStat r_precision_top2;
  MetricStat r_precision_top3;
  MetricStat mm_dist;
  MetricStat diversity;
  std::optional<MetricStat> multimodality;  // absent for the ground-truth row

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Mean and normal-approximation 95% half-width over repeat values.
MetricStat summarize(const std::vector<double>& values);

struct EvalConfig {
  int repeats = 20;
  int pool_size = 32;
  int diversity_subset = 30;
  int mm_prompts = 10;
  int mm_per_prompt = 4;
  int samples = 0;  // motions generated per repeat; 0 = whole dataset
  std::uint64_t seed = 0;
  std::uint64_t evaluator_seed = 0;
  EvaluatorConfig evaluator;
};

struct SamplingConfig {
  int diffusion_steps = 1000;
  GuidanceConfig guidance;
  double infer_mask_ratio = 0.0;
};

/// Runs the reverse process for one caption. With infer_mask_ratio > 0 a
/// single mask is drawn up front and reused at every step.
Mat generate_motion(const Denoiser& model, const std::string& caption, int length, const NoiseSchedule& schedule,
                    const SamplingConfig& sampling, std::uint64_t seed);

/// Generates motions for dataset captions and scores them against the ground
/// truth. A null model evaluates the ground-truth motions themselves.
MetricsReport evaluate(const Denoiser* model, const Dataset& data, const EvaluatorEmbedder& evaluator,
                       const SamplingConfig& sampling, const EvalConfig& config);

}  // namespace mmdm
