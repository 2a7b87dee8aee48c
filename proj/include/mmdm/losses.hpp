#pragma once

#include "mmdm/motion.hpp"

namespace mmdm {

struct LossWeights {
  double pos = 1.0;
  double vel = 1.0;
  double foot = 1.0;

  void validate() const;
};

struct LossBreakdown {
  double simple = 0.0;
  double pos = 0.0;
  double foot = 0.0;
  double vel = 0.0;
  double total = 0.0;
};

/// A scalar loss and its gradient with respect to the prediction.
struct LossValue {
  double value = 0.0;
  Mat grad;
};

/// Mean squared error over every element.
LossValue loss_simple(const Mat& x0, const Mat& prediction);

/// (1/N)·Σ_i ‖FK(x0ⁱ) − FK(x̂0ⁱ)‖².
LossValue loss_pos(const Mat& x0, const Mat& prediction, const Skeleton& skeleton);

/// (1/(N−1))·Σ_i Σ_k f_ik·‖FK(x̂0ⁱ⁺¹)_k − FK(x̂0ⁱ)_k‖² over foot joints k.
LossValue loss_foot(const Mat& prediction, const FootContactLabels& contacts, const Skeleton& skeleton);

/// (1/(N−1))·Σ_i ‖(x0ⁱ⁺¹ − x0ⁱ) − (x̂0ⁱ⁺¹ − x̂0ⁱ)‖².
LossValue loss_vel(const Mat& x0, const Mat& prediction);

/// simple + λ_pos·pos + λ_vel·vel + λ_foot·foot.
LossBreakdown total_loss(double simple, double pos, double foot, double vel, const LossWeights& weights);

struct LossResult {
  LossBreakdown breakdown;
  Mat grad;  // d(total)/d(prediction)
};

LossResult compute_losses(const Mat& x0, const Mat& prediction, const FootContactLabels& contacts,
                          const Skeleton& skeleton, const LossWeights& weights);

}  // namespace mmdm
