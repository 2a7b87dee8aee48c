#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mmdm/autodiff.hpp"

namespace mmdm {

/// First/second moment estimates of the adaptive-moment update.
struct AdamState {
  std::map<std::string, Mat> m;
  std::map<std::string, Mat> v;
  std::int64_t step = 0;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step using the gradients stored in `params`.
void adam_update(ad::ParameterSet& params, AdamState& state, const AdamConfig& config);

/// Stateless seed derivation (SplitMix64 finalizer over a ⊕ mixed b).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace mmdm
