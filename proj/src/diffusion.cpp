#include "mmdm/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mmdm/error.hpp"

namespace mmdm {

NoiseSchedule NoiseSchedule::from_alphas(Vec alphas) {
  require(alphas.size() >= 1, ErrorKind::InvalidConfig, "schedule needs at least one step");
  for (Eigen::Index t = 0; t < alphas.size(); ++t)
    require(alphas(t) > 0.0 && alphas(t) <= 1.0, ErrorKind::InvalidConfig, "alpha outside (0, 1]");
  NoiseSchedule s;
  s.betas = Vec::Ones(alphas.size()) - alphas;
  s.alpha_bars.resize(alphas.size());
  double prod = 1.0;
  for (Eigen::Index t = 0; t < alphas.size(); ++t) {
    prod *= alphas(t);
    s.alpha_bars(t) = prod;
  }
  s.alphas = std::move(alphas);
  return s;
}

NoiseSchedule make_cosine_schedule(int steps) {
  require(steps >= 2, ErrorKind::InvalidConfig, "diffusion needs at least 2 steps");
  const auto f = [steps](double t) {
    const double c = std::cos((t / steps + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0);
    return c * c;
  };
  Vec alphas(steps);
  const double f0 = f(0.0);
  double prev = 1.0;
  for (int k = 0; k < steps; ++k) {
    const double target = f(k + 1.0) / f0;
    alphas(k) = std::clamp(target / prev, kMinAlpha, kMaxAlpha);
    prev = target;
  }
  return NoiseSchedule::from_alphas(std::move(alphas));
}

Mat q_sample(const Mat& x0, int t, const Mat& noise, const NoiseSchedule& schedule) {
  require(t >= 0 && t < schedule.steps(), ErrorKind::InvalidInput, "timestep out of range");
  require(x0.rows() == noise.rows() && x0.cols() == noise.cols(), ErrorKind::InvalidInput,
          "q_sample: noise shape mismatch");
  const double ab = schedule.alpha_bars(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

void GuidanceConfig::validate() const {
  require(std::isfinite(scale) && scale >= 0.0, ErrorKind::InvalidConfig, "guidance scale must be >= 0");
  require(condition_dropout_prob >= 0.0 && condition_dropout_prob < 1.0, ErrorKind::InvalidConfig,
          "condition_dropout_prob must be in [0, 1)");
}

Mat guided_x0(const Mat& unconditional, const Mat& conditional, double scale) {
  if (scale == 0.0) return unconditional;
  if (scale == 1.0) return conditional;
  return unconditional + scale * (conditional - unconditional);
}

Mat guided_x0(const DenoiseFn& denoiser, const Mat& x_t, int t, const GuidanceConfig& guidance) {
  if (guidance.scale == 1.0) return denoiser(x_t, t, true);
  if (guidance.scale == 0.0) return denoiser(x_t, t, false);
  return guided_x0(denoiser(x_t, t, false), denoiser(x_t, t, true), guidance.scale);
}

Posterior posterior(const Mat& x_t, const Mat& x0_hat, int t, const NoiseSchedule& schedule) {
  const double ab = schedule.alpha_bars(t);
  const double ab_prev = schedule.alpha_bar_prev(t);
  const double beta = schedule.betas(t);
  const double c0 = beta * std::sqrt(ab_prev) / (1.0 - ab);
  const double ct = (1.0 - ab_prev) * std::sqrt(schedule.alphas(t)) / (1.0 - ab);
  return {c0 * x0_hat + ct * x_t, beta * (1.0 - ab_prev) / (1.0 - ab)};
}

Mat p_sample_loop(const DenoiseFn& denoiser, Eigen::Index length, Eigen::Index width, const NoiseSchedule& schedule,
                  const GuidanceConfig& guidance, std::uint64_t seed, std::vector<Mat>* trace) {
  guidance.validate();
  require(length >= 1 && width >= 1, ErrorKind::InvalidInput, "sample shape must be positive");
  std::mt19937_64 rng(seed);
  Mat x = gaussian(length, width, rng);
  if (trace) trace->push_back(x);
  for (int t = schedule.steps() - 1; t >= 0; --t) {
    Mat x0_hat = guided_x0(denoiser, x, t, guidance);
    if (!x0_hat.allFinite()) throw NumericFailure(t, "denoiser produced non-finite values");
    require(x0_hat.rows() == length && x0_hat.cols() == width, ErrorKind::InvalidInput,
            "denoiser returned the wrong shape");
    if (t == 0) {
      x = std::move(x0_hat);
    } else {
      Posterior post = posterior(x, x0_hat, t, schedule);
      x = post.mean + std::sqrt(post.variance) * gaussian(length, width, rng);
    }
    if (!x.allFinite()) throw NumericFailure(t, "sample became non-finite");
    if (trace) trace->push_back(x);
  }
  return x;
}

}  // namespace mmdm
