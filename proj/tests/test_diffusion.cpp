#include <doctest.h>

#include <cmath>
#include <random>

#include "mmdm/diffusion.hpp"
#include "mmdm/error.hpp"

using namespace mmdm;

namespace {

// Spreadsheet-style re-evaluation in long double: per-step ratio of the
// squared-cosine curve, clipped, then multiplied out.
std::vector<long double> cosine_alpha_bars(int steps) {
  const long double s = 0.008L, half_pi = 1.5707963267948966192313216916397514L;
  auto f = [&](long double t) {
    const long double c = std::cos((t / steps + s) / (1.0L + s) * half_pi);
    return c * c;
  };
  std::vector<long double> out;
  long double bar = 1.0L;
  for (int k = 0; k < steps; ++k) {
    long double a = f(k + 1.0L) / f(static_cast<long double>(k));
    a = std::min(std::max(a, 1e-4L), 0.9999L);
    bar *= a;
    out.push_back(bar);
  }
  return out;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gaussian(r, c, rng);
}

}  // namespace

TEST_CASE("cosine schedule matches an independent evaluation") {
  for (int steps : {10, 100, 1000}) {
    const NoiseSchedule s = make_cosine_schedule(steps);
    REQUIRE(s.steps() == steps);
    const auto oracle = cosine_alpha_bars(steps);
    double worst = 0.0;
    for (int t = 0; t < steps; ++t) worst = std::max(worst, std::abs(s.alpha_bars(t) - static_cast<double>(oracle[t])));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("schedule invariants") {
  for (int steps : {2, 7, 100, 1000}) {
    const NoiseSchedule s = make_cosine_schedule(steps);
    for (int t = 0; t < steps; ++t) {
      CHECK(s.alpha_bars(t) > 0.0);
      CHECK(s.alpha_bars(t) < 1.0);
      CHECK(s.alphas(t) >= kMinAlpha);
      CHECK(s.alphas(t) <= kMaxAlpha);
      CHECK(s.betas(t) == doctest::Approx(1.0 - s.alphas(t)).epsilon(1e-15));
      if (t > 0) CHECK(s.alpha_bars(t) < s.alpha_bars(t - 1));
    }
  }
}

TEST_CASE("schedule needs at least two steps") {
  for (int steps : {-1, 0, 1}) {
    try {
      make_cosine_schedule(steps);
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidConfig);
    }
  }
}

TEST_CASE("q_sample closed form") {
  const Mat x0 = random_mat(4, 6, 1);
  const Mat noise = random_mat(4, 6, 2);
  Vec alphas(3);
  alphas << 1.0, 0.64, 0.5;
  const NoiseSchedule s = NoiseSchedule::from_alphas(alphas);
  CHECK(q_sample(x0, 0, noise, s) == x0);
  const Mat zero = Mat::Zero(4, 6);
  CHECK((q_sample(x0, 1, zero, s) - 0.8 * x0).norm() < 1e-15);
  CHECK((q_sample(x0, 2, noise, s) - (std::sqrt(0.32) * x0 + std::sqrt(0.68) * noise)).norm() < 1e-12);
  CHECK_THROWS_AS(q_sample(x0, 3, noise, s), Error);
  CHECK_THROWS_AS(q_sample(x0, 0, Mat::Zero(4, 5), s), Error);
}

TEST_CASE("q_sample variance at alpha bar 0.64") {
  Vec alphas(1);
  alphas << 0.64;
  const NoiseSchedule s = NoiseSchedule::from_alphas(alphas);
  std::mt19937_64 rng(5);
  const Mat x0 = Mat::Zero(1, 1);
  const int draws = 100000;
  double sum = 0, sq = 0;
  for (int i = 0; i < draws; ++i) {
    const double v = q_sample(x0, 0, gaussian(1, 1, rng), s)(0, 0);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / draws;
  const double var = sq / draws - mean * mean;
  CHECK(std::abs(var - 0.36) < 0.01 * 0.36);
}

TEST_CASE("guidance extrapolation") {
  const Mat u = random_mat(3, 3, 8), c = random_mat(3, 3, 9);
  CHECK(guided_x0(u, c, 0.0) == u);
  CHECK(guided_x0(u, c, 1.0) == c);
  CHECK(guided_x0(Mat::Zero(2, 4), Mat::Ones(2, 4), 2.5) == Mat::Constant(2, 4, 2.5));
  // Affine in s.
  const Mat a = guided_x0(u, c, 0.7), b = guided_x0(u, c, 1.9), m = guided_x0(u, c, 1.3);
  CHECK((0.5 * (a + b) - m).norm() < 1e-12);

  int uncond = 0, cond = 0;
  const DenoiseFn fn = [&](const Mat& x, int, bool conditional) {
    (conditional ? cond : uncond)++;
    return Mat(conditional ? Mat(x + Mat::Ones(x.rows(), x.cols())) : x);
  };
  const Mat x = random_mat(2, 2, 3);
  CHECK(guided_x0(fn, x, 0, {0.0, 0.1}) == x);
  CHECK(guided_x0(fn, x, 0, {1.0, 0.1}) == Mat(x + Mat::Ones(2, 2)));
  CHECK(guided_x0(fn, x, 0, {2.5, 0.1}).isApprox(x + Mat::Constant(2, 2, 2.5)));
  CHECK(uncond == 2);
  CHECK(cond == 2);
}

TEST_CASE("guidance config validation") {
  CHECK_THROWS_AS((GuidanceConfig{-1.0, 0.1}.validate()), Error);
  CHECK_THROWS_AS((GuidanceConfig{2.5, 1.0}.validate()), Error);
  CHECK_NOTHROW((GuidanceConfig{0.0, 0.0}.validate()));
}

TEST_CASE("posterior equals the gaussian product") {
  const NoiseSchedule s = make_cosine_schedule(50);
  const Mat xt = random_mat(3, 4, 1), x0 = random_mat(3, 4, 2);
  for (int t : {1, 10, 25, 49}) {
    // q(x_{t-1}|x0) = N(√ᾱ' x0, 1−ᾱ') times q(x_t|x_{t-1}) = N(√α x_{t-1}, β).
    const double ab_prev = s.alpha_bars(t - 1), a = s.alphas(t), b = s.betas(t);
    const double precision = 1.0 / (1.0 - ab_prev) + a / b;
    const double var = 1.0 / precision;
    const Mat mean = var * (std::sqrt(ab_prev) / (1.0 - ab_prev) * x0 + std::sqrt(a) / b * xt);
    const Posterior p = posterior(xt, x0, t, s);
    CHECK(std::abs(p.variance - var) < 1e-12);
    CHECK((p.mean - mean).norm() < 1e-10);
  }
  // Step 0 has ᾱ_prev = 1: the mean is x̂₀ and the variance vanishes.
  const Posterior p0 = posterior(xt, x0, 0, s);
  CHECK(p0.variance == 0.0);
  CHECK((p0.mean - x0).norm() < 1e-12);
}

TEST_CASE("sampling with a constant denoiser returns it") {
  const Mat target = random_mat(5, 3, 4);
  const DenoiseFn fn = [&](const Mat&, int, bool) { return target; };
  const NoiseSchedule s = make_cosine_schedule(20);
  for (std::uint64_t seed : {0, 1, 99}) CHECK(p_sample_loop(fn, 5, 3, s, {}, seed) == target);
}

TEST_CASE("sampling is deterministic per seed") {
  const DenoiseFn fn = [](const Mat& x, int t, bool c) { return Mat(0.5 * x + Mat::Constant(x.rows(), x.cols(), c ? 0.1 * t : 0.0)); };
  const NoiseSchedule s = make_cosine_schedule(30);
  std::vector<Mat> ta, tb;
  const Mat a = p_sample_loop(fn, 4, 6, s, {}, 7, &ta);
  const Mat b = p_sample_loop(fn, 4, 6, s, {}, 7, &tb);
  CHECK(a == b);
  CHECK(ta.size() == 31);
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
  CHECK_FALSE(p_sample_loop(fn, 4, 6, s, {}, 8) == a);
}

TEST_CASE("five step chain replays by hand") {
  const NoiseSchedule s = make_cosine_schedule(5);
  const DenoiseFn fn = [](const Mat& x, int, bool c) { return Mat(c ? Mat(0.9 * x) : Mat(0.5 * x)); };
  const GuidanceConfig g{2.0, 0.1};
  std::vector<Mat> trace;
  const Mat out = p_sample_loop(fn, 2, 3, s, g, 42, &trace);

  std::mt19937_64 rng(42);
  std::normal_distribution<double> normal;
  Mat x(2, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  CHECK(trace[0] == x);
  for (int t = 4; t >= 0; --t) {
    const Mat x0 = 0.5 * x + 2.0 * (0.9 * x - 0.5 * x);
    if (t == 0) {
      x = x0;
    } else {
      const double ab_prev = s.alpha_bars(t - 1), a = s.alphas(t), b = s.betas(t);
      const double var = 1.0 / (1.0 / (1.0 - ab_prev) + a / b);
      Mat mean = var * (std::sqrt(ab_prev) / (1.0 - ab_prev) * x0 + std::sqrt(a) / b * x);
      std::normal_distribution<double> fresh;
      Mat z(2, 3);
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = fresh(rng);
      x = mean + std::sqrt(var) * z;
    }
    CHECK((trace[5 - t] - x).norm() < 1e-10);
  }
  CHECK((out - x).norm() < 1e-10);
}

TEST_CASE("non-finite denoiser output reports the step") {
  const NoiseSchedule s = make_cosine_schedule(10);
  const DenoiseFn fn = [](const Mat& x, int t, bool) {
    Mat y = x;
    if (t == 6) y(0, 0) = std::nan("");
    return y;
  };
  try {
    p_sample_loop(fn, 2, 2, s, {1.0, 0.1}, 0);
    FAIL("expected a numeric failure");
  } catch (const NumericFailure& e) {
    CHECK(e.step() == 6);
    CHECK(e.kind() == ErrorKind::NumericFailure);
  }
}
