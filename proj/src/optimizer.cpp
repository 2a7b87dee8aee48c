#include "mmdm/optimizer.hpp"

#include <cmath>

namespace mmdm {

void adam_update(ad::ParameterSet& params, AdamState& state, const AdamConfig& config) {
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    Mat& m = state.m[name];
    Mat& v = state.v[name];
    if (m.size() == 0) m = Mat::Zero(p.value.rows(), p.value.cols());
    if (v.size() == 0) v = Mat::Zero(p.value.rows(), p.value.cols());
    m = config.beta1 * m + (1.0 - config.beta1) * p.grad;
    v = config.beta2 * v + (1.0 - config.beta2) * p.grad.cwiseAbs2();
    if (config.learning_rate == 0.0) continue;
    p.value.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.eps);
  }
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mmdm
