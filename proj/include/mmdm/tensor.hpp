#pragma once

#include <Eigen/Dense>

namespace mmdm {

/// Row-major so that per-frame rows reshape into (channel, dim) blocks without copies.
template <typename Scalar>
using MatrixR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = MatrixR<double>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

/// Reinterpret a row-major matrix with a new shape of equal size.
inline Mat reshaped(const Mat& m, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Mat>(m.data(), rows, cols);
}

}  // namespace mmdm
