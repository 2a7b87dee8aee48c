#include "mmdm/losses.hpp"

#include <cmath>

namespace mmdm {

namespace {

void check_pair(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::InvalidInput, "loss: shape mismatch");
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {pos, vel, foot})
    require(std::isfinite(w) && w >= 0.0, ErrorKind::InvalidConfig, "loss weights must be finite and >= 0");
}

LossValue loss_simple(const Mat& x0, const Mat& prediction) {
  check_pair(x0, prediction);
  require(x0.size() > 0, ErrorKind::InvalidInput, "loss: empty input");
  const Mat diff = prediction - x0;
  const double n = static_cast<double>(diff.size());
  return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

LossValue loss_pos(const Mat& x0, const Mat& prediction, const Skeleton& skeleton) {
  check_pair(x0, prediction);
  const Mat diff = forward_kinematics(skeleton, prediction) - forward_kinematics(skeleton, x0);
  const double n = static_cast<double>(x0.rows());
  return {diff.squaredNorm() / n, forward_kinematics_vjp(skeleton, prediction, (2.0 / n) * diff)};
}

LossValue loss_foot(const Mat& prediction, const FootContactLabels& contacts, const Skeleton& skeleton) {
  const Eigen::Index n = prediction.rows();
  require(n >= 2, ErrorKind::InvalidInput, "foot loss needs at least 2 frames");
  const auto& feet = skeleton.foot_joints();
  require(contacts.contacts.rows() == n - 1 && contacts.contacts.cols() == static_cast<Eigen::Index>(feet.size()),
          ErrorKind::InvalidInput, "foot contact labels do not match prediction");
  const Mat pos = forward_kinematics(skeleton, prediction);
  Mat grad_pos = Mat::Zero(pos.rows(), pos.cols());
  const double scale = 1.0 / static_cast<double>(n - 1);
  double value = 0.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    for (std::size_t k = 0; k < feet.size(); ++k) {
      const double f = contacts.contacts(i, static_cast<Eigen::Index>(k));
      if (f == 0.0) continue;
      const int j = feet[k];
      const Eigen::RowVector3d step = pos.row(i + 1).segment<3>(3 * j) - pos.row(i).segment<3>(3 * j);
      value += scale * f * f * step.squaredNorm();
      const Eigen::RowVector3d g = 2.0 * scale * f * f * step;
      grad_pos.row(i + 1).segment<3>(3 * j) += g;
      grad_pos.row(i).segment<3>(3 * j) -= g;
    }
  return {value, forward_kinematics_vjp(skeleton, prediction, grad_pos)};
}

LossValue loss_vel(const Mat& x0, const Mat& prediction) {
  check_pair(x0, prediction);
  const Eigen::Index n = x0.rows();
  require(n >= 2, ErrorKind::InvalidInput, "velocity loss needs at least 2 frames");
  const Mat residual = (x0.bottomRows(n - 1) - x0.topRows(n - 1)) -
                       (prediction.bottomRows(n - 1) - prediction.topRows(n - 1));
  const double scale = 1.0 / static_cast<double>(n - 1);
  Mat grad = Mat::Zero(x0.rows(), x0.cols());
  grad.bottomRows(n - 1) -= 2.0 * scale * residual;
  grad.topRows(n - 1) += 2.0 * scale * residual;
  return {scale * residual.squaredNorm(), grad};
}

LossBreakdown total_loss(double simple, double pos, double foot, double vel, const LossWeights& weights) {
  LossBreakdown b{simple, pos, foot, vel, 0.0};
  b.total = simple + weights.pos * pos + weights.vel * vel + weights.foot * foot;
  return b;
}

LossResult compute_losses(const Mat& x0, const Mat& prediction, const FootContactLabels& contacts,
                          const Skeleton& skeleton, const LossWeights& weights) {
  const LossValue simple = loss_simple(x0, prediction);
  const LossValue pos = loss_pos(x0, prediction, skeleton);
  const LossValue foot = loss_foot(prediction, contacts, skeleton);
  const LossValue vel = loss_vel(x0, prediction);
  LossResult r;
  r.grad = simple.grad + weights.pos * pos.grad + weights.foot * foot.grad + weights.vel * vel.grad;
  r.breakdown = total_loss(simple.value, pos.value, foot.value, vel.value, weights);
  return r;
}

}  // namespace mmdm
