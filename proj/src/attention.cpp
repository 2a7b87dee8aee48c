#include "mmdm/attention.hpp"

#include <algorithm>
#include <cmath>

#include "mmdm/error.hpp"

namespace mmdm {

namespace {

Mat logits(const Mat& q, const Mat& k, const Mat& bias, BiasPlacement placement) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  Mat z = q * k.transpose();
  if (bias.size() == 0) return z * scale;
  if (placement == BiasPlacement::AfterScale) return z * scale + bias;
  return (z + bias) * scale;
}

Mat row_softmax(const Mat& z) {
  Mat p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    if (!std::isfinite(m))
      throw Error(ErrorKind::DegenerateSoftmax, "attention row " + std::to_string(i) + " has no finite logit");
    // Eigen's vectorized exp maps −∞ to a denormal, not 0.
    p.row(i) = (z.row(i).array() == kBlocked).select(0.0, (z.row(i).array() - m).exp());
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

AttentionResult biased_attention(const AttentionInputs& in, BiasPlacement placement) {
  require(in.q.cols() == in.k.cols() && in.k.rows() == in.v.rows() && in.q.cols() > 0, ErrorKind::InvalidInput,
          "attention: q/k/v shapes disagree");
  require(in.bias.size() == 0 || (in.bias.rows() == in.q.rows() && in.bias.cols() == in.k.rows()),
          ErrorKind::InvalidInput, "attention: bias shape mismatch");
  AttentionResult r;
  r.weights = row_softmax(logits(in.q, in.k, in.bias, placement));
  r.output = r.weights * in.v;
  return r;
}

ad::Var attention(ad::Var q, ad::Var k, ad::Var v, std::optional<ad::Var> bias, BiasPlacement placement,
                  int block) {
  ad::Graph& g = *q.graph;
  const Eigen::Index n = q.rows();
  const Eigen::Index b = block == 0 ? n : block;
  require(b > 0 && n % b == 0 && k.rows() == n && v.rows() == n, ErrorKind::InvalidInput,
          "attention: token count not divisible by block");
  const Mat empty;
  const Mat& bias_value = bias ? bias->value() : empty;
  require(!bias || (bias_value.rows() == b && bias_value.cols() == b), ErrorKind::InvalidInput,
          "attention: bias must be block × block");

  const Eigen::Index blocks = n / b;
  std::vector<Mat> weights(blocks);
  Mat out(n, v.cols());
  for (Eigen::Index s = 0; s < blocks; ++s) {
    AttentionInputs in{q.value().middleRows(s * b, b), k.value().middleRows(s * b, b),
                       v.value().middleRows(s * b, b), bias_value};
    AttentionResult r = biased_attention(in, placement);
    out.middleRows(s * b, b) = r.output;
    weights[s] = std::move(r.weights);
  }

  std::vector<ad::Var> inputs{q, k, v};
  if (bias) inputs.push_back(*bias);
  return g.emplace(std::move(out), inputs, [&g, q, k, v, bias, placement, b, blocks, weights](const Mat& d) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols()));
    Mat dq = Mat::Zero(q.rows(), q.cols());
    Mat dk = Mat::Zero(k.rows(), k.cols());
    Mat dv = Mat::Zero(v.rows(), v.cols());
    Mat dbias;
    if (bias) dbias = Mat::Zero(b, b);
    for (Eigen::Index s = 0; s < blocks; ++s) {
      const Mat& p = weights[s];
      const auto qs = q.value().middleRows(s * b, b);
      const auto ks = k.value().middleRows(s * b, b);
      const auto vs = v.value().middleRows(s * b, b);
      const auto ds = d.middleRows(s * b, b);
      dv.middleRows(s * b, b) = p.transpose() * ds;
      const Mat dp = ds * vs.transpose();
      Mat dz = p.cwiseProduct(dp);
      const Vec row_dot = dz.rowwise().sum();
      dz -= row_dot.asDiagonal() * p;
      const Mat dscore = dz * scale;
      dq.middleRows(s * b, b) = dscore * ks;
      dk.middleRows(s * b, b) = dscore.transpose() * qs;
      if (bias) dbias += placement == BiasPlacement::AfterScale ? dz : dscore;
    }
    g.accumulate(q, dq);
    g.accumulate(k, dk);
    g.accumulate(v, dv);
    if (bias && g.needs_grad(*bias)) g.accumulate(*bias, dbias);
  });
}

Mat part_adjacency(const Skeleton& skeleton) {
  const int c = skeleton.channel_count();
  Mat m(c, c);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = skeleton.channel_part(i) == skeleton.channel_part(j) ? 0.0 : kBlocked;
  return m;
}

namespace {

int offset_index(int pi, int pj, int max_length) {
  const int d = std::clamp(pi - pj, -(max_length - 1), max_length - 1);
  return d + max_length - 1;
}

}  // namespace

Mat relative_bias(const RowVec& table, const std::vector<int>& positions, int max_length) {
  require(max_length >= 1 && table.size() == relative_bias_width(max_length), ErrorKind::InvalidInput,
          "relative bias table has the wrong width");
  const auto n = static_cast<Eigen::Index>(positions.size());
  Mat b = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (positions[i] >= 0 && positions[j] >= 0) b(i, j) = table(offset_index(positions[i], positions[j], max_length));
  return b;
}

ad::Var relative_bias(ad::Var table, const std::vector<int>& positions, int max_length) {
  ad::Graph& g = *table.graph;
  require(table.rows() == 1, ErrorKind::InvalidInput, "relative bias table must be a row");
  Mat b = relative_bias(RowVec(table.value().row(0)), positions, max_length);
  return g.emplace(std::move(b), {table}, [&g, table, positions, max_length](const Mat& d) {
    Mat back = Mat::Zero(1, table.cols());
    const auto n = static_cast<Eigen::Index>(positions.size());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (positions[i] >= 0 && positions[j] >= 0) back(0, offset_index(positions[i], positions[j], max_length)) += d(i, j);
    g.accumulate(table, back);
  });
}

}  // namespace mmdm
