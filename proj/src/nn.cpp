#include "mmdm/nn.hpp"

#include <cmath>

namespace mmdm::nn {

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Mat xavier_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng);
  return m;
}

ad::Var param(ad::Graph& g, ad::ParameterSet& params, const std::string& name) { return g.param(params.at(name)); }

void add_linear(ad::ParameterSet& params, const std::string& prefix, int in, int out, std::mt19937_64& rng) {
  params.add(prefix + ".w", xavier_init(in, out, rng));
  params.add(prefix + ".b", Mat::Zero(1, out));
}

ad::Var linear(ad::Graph& g, ad::ParameterSet& params, const std::string& prefix, ad::Var x) {
  return ad::add_row(ad::matmul(x, param(g, params, prefix + ".w")), param(g, params, prefix + ".b"));
}

void add_layer_norm(ad::ParameterSet& params, const std::string& prefix, int dim) {
  params.add(prefix + ".g", Mat::Ones(1, dim));
  params.add(prefix + ".b", Mat::Zero(1, dim));
}

ad::Var layer_norm(ad::Graph& g, ad::ParameterSet& params, const std::string& prefix, ad::Var x) {
  return ad::layer_norm(x, param(g, params, prefix + ".g"), param(g, params, prefix + ".b"));
}

void add_block(ad::ParameterSet& params, const std::string& prefix, const BlockShape& shape, std::mt19937_64& rng) {
  add_layer_norm(params, prefix + ".ln1", shape.hidden);
  params.add(prefix + ".attn.wq", xavier_init(shape.hidden, shape.hidden, rng));
  params.add(prefix + ".attn.wk", xavier_init(shape.hidden, shape.hidden, rng));
  params.add(prefix + ".attn.wv", xavier_init(shape.hidden, shape.hidden, rng));
  add_linear(params, prefix + ".attn.out", shape.hidden, shape.hidden, rng);
  add_layer_norm(params, prefix + ".ln2", shape.hidden);
  add_linear(params, prefix + ".ff1", shape.hidden, shape.ff_hidden, rng);
  add_linear(params, prefix + ".ff2", shape.ff_hidden, shape.hidden, rng);
}

ad::Var block(ad::Graph& g, ad::ParameterSet& params, const std::string& prefix, const BlockShape& shape, ad::Var x,
              const BiasFn& bias, BiasPlacement placement, int attention_block) {
  ad::Var h = layer_norm(g, params, prefix + ".ln1", x);
  ad::Var q = ad::matmul(h, param(g, params, prefix + ".attn.wq"));
  ad::Var k = ad::matmul(h, param(g, params, prefix + ".attn.wk"));
  ad::Var v = ad::matmul(h, param(g, params, prefix + ".attn.wv"));
  const int head_dim = shape.hidden / shape.heads;
  std::vector<ad::Var> heads;
  for (int hd = 0; hd < shape.heads; ++hd) {
    heads.push_back(attention(ad::col_slice(q, hd * head_dim, head_dim), ad::col_slice(k, hd * head_dim, head_dim),
                              ad::col_slice(v, hd * head_dim, head_dim), bias ? bias(hd) : std::nullopt, placement,
                              attention_block));
  }
  ad::Var attn = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  x = ad::add(x, linear(g, params, prefix + ".attn.out", attn));
  ad::Var f = ad::gelu(linear(g, params, prefix + ".ff1", layer_norm(g, params, prefix + ".ln2", x)));
  return ad::add(x, linear(g, params, prefix + ".ff2", f));
}

}  // namespace mmdm::nn
