#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "mmdm/tensor.hpp"

namespace mmdm {

/// Per-step α_t, β_t = 1 − α_t and ᾱ_t = ∏ α. Step indices run 0..T−1.
struct NoiseSchedule {
  Vec alphas;
  Vec betas;
  Vec alpha_bars;

  int steps() const { return static_cast<int>(alphas.size()); }
  double alpha_bar_prev(int t) const { return t == 0 ? 1.0 : alpha_bars(t - 1); }

  /// Builds betas and cumulative products from explicit α values in (0, 1].
  static NoiseSchedule from_alphas(Vec alphas);
};

inline constexpr double kCosineOffset = 0.008;
inline constexpr double kMinAlpha = 1e-4;
inline constexpr double kMaxAlpha = 0.9999;

/// f(t) = cos²(((t/T + s)/(1 + s))·π/2); step k targets ᾱ = f(k+1)/f(0), with
/// per-step α clipped to [kMinAlpha, kMaxAlpha] before accumulation.
NoiseSchedule make_cosine_schedule(int steps);

/// x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·noise.
Mat q_sample(const Mat& x0, int t, const Mat& noise, const NoiseSchedule& schedule);

struct GuidanceConfig {
  double scale = 2.5;
  double condition_dropout_prob = 0.1;

  void validate() const;
};

/// u + s·(c − u); s = 0 and s = 1 return the branch outputs exactly.
Mat guided_x0(const Mat& unconditional, const Mat& conditional, double scale);

/// Clean-sequence predictor: (x_t, step, conditional?) -> x̂₀.
using DenoiseFn = std::function<Mat(const Mat& x_t, int t, bool conditional)>;

Mat guided_x0(const DenoiseFn& denoiser, const Mat& x_t, int t, const GuidanceConfig& guidance);

/// Posterior q(x_{t−1} | x_t, x̂₀) parameters.
struct Posterior {
  Mat mean;
  double variance;
};
Posterior posterior(const Mat& x_t, const Mat& x0_hat, int t, const NoiseSchedule& schedule);

/// Ancestral sampling from x_T ~ N(0, I); the final step returns x̂₀ with no
/// noise. `trace`, when given, receives x_T followed by each x_{t−1}.
Mat p_sample_loop(const DenoiseFn& denoiser, Eigen::Index length, Eigen::Index width, const NoiseSchedule& schedule,
                  const GuidanceConfig& guidance, std::uint64_t seed, std::vector<Mat>* trace = nullptr);

/// Fills a matrix with unit-Gaussian draws from `rng`.
template <typename Rng>
Mat gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace mmdm
