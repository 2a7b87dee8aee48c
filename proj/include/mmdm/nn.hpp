#pragma once

// Small layer helpers shared by the denoiser, text encoder and evaluator.

#include <optional>
#include <random>
#include <string>

#include "mmdm/attention.hpp"
#include "mmdm/autodiff.hpp"

namespace mmdm::nn {

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double std, std::mt19937_64& rng);
Mat xavier_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Leaf for a named parameter. Only a recording graph links gradients back.
ad::Var param(ad::Graph& g, ad::ParameterSet& params, const std::string& name);

void add_linear(ad::ParameterSet& params, const std::string& prefix, int in, int out, std::mt19937_64& rng);
ad::Var linear(ad::Graph& g, ad::ParameterSet& params, const std::string& prefix, ad::Var x);

void add_layer_norm(ad::ParameterSet& params, const std::string& prefix, int dim);
ad::Var layer_norm(ad::Graph& g, ad::ParameterSet& params, const std::string& prefix, ad::Var x);

/// Per-head additive bias for one attention call, or nullopt for none.
using BiasFn = std::function<std::optional<ad::Var>(int head)>;

/// Pre-norm transformer block: x + MHA(LN(x)), then x + MLP(LN(x)).
struct BlockShape {
  int hidden;
  int heads;
  int ff_hidden;
};
void add_block(ad::ParameterSet& params, const std::string& prefix, const BlockShape& shape, std::mt19937_64& rng);
ad::Var block(ad::Graph& g, ad::ParameterSet& params, const std::string& prefix, const BlockShape& shape, ad::Var x,
              const BiasFn& bias, BiasPlacement placement, int attention_block = 0);

}  // namespace mmdm::nn
