#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "mmdm/autodiff.hpp"
#include "mmdm/diffusion.hpp"
#include "mmdm/error.hpp"
#include "mmdm/optimizer.hpp"

using namespace mmdm;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gaussian(r, c, rng);
}

using Build = std::function<ad::Var(ad::Graph&, std::vector<ad::Var>&)>;

// Compares reverse-mode gradients of sum(out ⊙ W) with central differences.
double max_grad_error(std::vector<Mat> inputs, const Build& build) {
  ad::ParameterSet params;
  for (std::size_t i = 0; i < inputs.size(); ++i) params.add("p" + std::to_string(i), inputs[i]);
  auto evaluate = [&](bool backprop, Mat* weights) {
    ad::Graph g(backprop);
    std::vector<ad::Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.param(params.at("p" + std::to_string(i))));
    ad::Var out = build(g, vars);
    if (weights->size() == 0) *weights = random_mat(out.rows(), out.cols(), 1234);
    const double value = (out.value().array() * weights->array()).sum();
    if (backprop) g.backward(out, *weights);
    return value;
  };
  Mat w;
  params.zero_grad();
  evaluate(true, &w);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ad::Parameter& p = params.at("p" + std::to_string(i));
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double keep = p.value.data()[k];
      p.value.data()[k] = keep + h;
      const double up = evaluate(false, &w);
      p.value.data()[k] = keep - h;
      const double down = evaluate(false, &w);
      p.value.data()[k] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - p.grad.data()[k]) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and matrix op gradients") {
  CHECK(max_grad_error({random_mat(3, 4, 1), random_mat(4, 2, 2)},
                       [](ad::Graph&, std::vector<ad::Var>& v) { return ad::matmul(v[0], v[1]); }) < 1e-7);
  CHECK(max_grad_error({random_mat(3, 4, 1), random_mat(3, 4, 2)},
                       [](ad::Graph&, std::vector<ad::Var>& v) { return ad::mul(ad::add(v[0], v[1]), ad::sub(v[0], v[1])); }) < 1e-7);
  CHECK(max_grad_error({random_mat(3, 4, 1)}, [](ad::Graph&, std::vector<ad::Var>& v) { return ad::scale(v[0], -2.5); }) < 1e-7);
  CHECK(max_grad_error({random_mat(3, 4, 1), random_mat(1, 4, 2)},
                       [](ad::Graph&, std::vector<ad::Var>& v) { return ad::add_row(v[0], v[1]); }) < 1e-7);
  CHECK(max_grad_error({random_mat(1, 4, 2)}, [](ad::Graph&, std::vector<ad::Var>& v) { return ad::broadcast_row(v[0], 5); }) < 1e-7);
  CHECK(max_grad_error({random_mat(3, 5, 3)}, [](ad::Graph&, std::vector<ad::Var>& v) { return ad::gelu(v[0]); }) < 1e-7);
  CHECK(max_grad_error({random_mat(4, 6, 4), random_mat(1, 6, 5), random_mat(1, 6, 6)},
                       [](ad::Graph&, std::vector<ad::Var>& v) { return ad::layer_norm(v[0], v[1], v[2]); }) < 1e-6);
  CHECK(max_grad_error({random_mat(4, 3, 7)}, [](ad::Graph&, std::vector<ad::Var>& v) { return ad::mean_rows(v[0]); }) < 1e-7);
}

TEST_CASE("shape op gradients") {
  CHECK(max_grad_error({random_mat(4, 6, 1)}, [](ad::Graph&, std::vector<ad::Var>& v) { return ad::reshape(v[0], 8, 3); }) < 1e-7);
  CHECK(max_grad_error({random_mat(5, 3, 1)}, [](ad::Graph&, std::vector<ad::Var>& v) { return ad::row_slice(v[0], 1, 3); }) < 1e-7);
  CHECK(max_grad_error({random_mat(3, 5, 1)}, [](ad::Graph&, std::vector<ad::Var>& v) { return ad::col_slice(v[0], 2, 2); }) < 1e-7);
  CHECK(max_grad_error({random_mat(2, 3, 1), random_mat(4, 3, 2)},
                       [](ad::Graph&, std::vector<ad::Var>& v) { return ad::concat_rows({v[0], v[1], v[0]}); }) < 1e-7);
  CHECK(max_grad_error({random_mat(3, 2, 1), random_mat(3, 4, 2)},
                       [](ad::Graph&, std::vector<ad::Var>& v) { return ad::concat_cols({v[1], v[0]}); }) < 1e-7);
  CHECK(max_grad_error({random_mat(3, 4, 1)},
                       [](ad::Graph&, std::vector<ad::Var>& v) { return ad::permute_cols(v[0], {3, 0, 0, 2}); }) < 1e-7);
  CHECK(max_grad_error({random_mat(5, 3, 1)},
                       [](ad::Graph&, std::vector<ad::Var>& v) { return ad::gather_rows(v[0], {4, 1, 1, 0}); }) < 1e-7);
  CHECK(max_grad_error({random_mat(4, 3, 1), random_mat(4, 3, 2)}, [](ad::Graph&, std::vector<ad::Var>& v) {
          return ad::select_rows({true, false, false, true}, v[0], v[1]);
        }) < 1e-7);
}

TEST_CASE("forward values of shape ops") {
  ad::Graph g;
  const Mat a = random_mat(2, 3, 1);
  ad::Var x = g.constant(a);
  CHECK(ad::reshape(x, 3, 2).value() == reshaped(a, 3, 2));
  CHECK(ad::reshape(x, 1, 6).value()(0, 3) == a(1, 0));
  CHECK(ad::permute_cols(x, {2, 1, 0}).value().col(0) == a.col(2));
  CHECK(ad::gather_rows(x, {1}).value() == a.row(1));
  CHECK(g.needs_grad(x) == false);
}

TEST_CASE("parameters used twice accumulate gradients") {
  ad::ParameterSet params;
  params.add("w", Mat::Constant(1, 1, 3.0));
  ad::Graph g;
  ad::Var w = g.param(params.at("w"));
  ad::Var y = ad::mul(w, w);
  g.backward(y, Mat::Ones(1, 1));
  CHECK(params.at("w").grad(0, 0) == 6.0);
}

TEST_CASE("a non-recording graph leaves gradients alone") {
  ad::ParameterSet params;
  params.add("w", Mat::Constant(2, 2, 1.0));
  params.zero_grad();
  ad::Graph g(false);
  ad::Var w = g.param(params.at("w"));
  CHECK_FALSE(g.needs_grad(w));
  CHECK(ad::matmul(w, w).value() == Mat::Constant(2, 2, 2.0));
}

TEST_CASE("parameter set bookkeeping") {
  ad::ParameterSet params;
  params.add("b", Mat::Zero(2, 3));
  params.add("a", Mat::Zero(1, 4));
  CHECK(params.size() == 2);
  CHECK(params.scalar_count() == 10);
  CHECK(params.begin()->first == "a");
  CHECK_THROWS_AS(params.add("a", Mat::Zero(1, 1)), Error);
  CHECK_THROWS_AS(params.at("missing"), Error);
}

TEST_CASE("adam takes the textbook first step") {
  ad::ParameterSet params;
  params.add("w", Mat::Constant(1, 2, 1.0));
  params.at("w").grad = (Mat(1, 2) << 0.5, -2.0).finished();
  AdamState state;
  adam_update(params, state, {0.1, 0.9, 0.999, 1e-8});
  // Bias-corrected first step moves each weight by lr·g/(|g| + eps').
  CHECK(params.at("w").value(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(params.at("w").value(0, 1) == doctest::Approx(1.1).epsilon(1e-6));
  CHECK(state.step == 1);

  ad::ParameterSet frozen;
  frozen.add("w", Mat::Constant(1, 2, 1.0));
  frozen.at("w").grad = Mat::Ones(1, 2);
  AdamState s2;
  adam_update(frozen, s2, {0.0, 0.9, 0.999, 1e-8});
  CHECK(frozen.at("w").value == Mat::Constant(1, 2, 1.0));
}

TEST_CASE("seed mixing is stable and spreads") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(0, 0) != mix_seed(0, 1));
}
