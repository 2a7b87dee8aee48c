#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmdm/error.hpp"
#include "mmdm/tensor.hpp"

namespace mmdm {

enum class BodyPart { Torso = 0, LeftArm, RightArm, LeftLeg, RightLeg };
inline constexpr int kPartCount = 5;
const char* to_string(BodyPart part);
BodyPart body_part_from_string(const std::string& name);

enum class Representation { Positions, Rotations };
const char* to_string(Representation mode);
Representation representation_from_string(const std::string& name);

/// Joint hierarchy plus the five-part partition used by the body-parts model.
///
/// Feature channels: one per joint in `Positions` mode; in `Rotations` mode an
/// extra trailing channel carries the root translation. Every channel holds
/// kFeatureDim values.
class Skeleton {
 public:
  static constexpr int kFeatureDim = 3;

  Skeleton(std::vector<int> parents, std::vector<Eigen::Vector3d> offsets, std::vector<BodyPart> part_of,
           std::vector<int> foot_joints, Representation mode = Representation::Positions,
           std::vector<std::string> names = {});

  /// 9 joints: pelvis/spine/head, one joint per arm, hip+foot per leg.
  static Skeleton toy(Representation mode = Representation::Positions);

  int joint_count() const { return static_cast<int>(parents_.size()); }
  int channel_count() const { return joint_count() + (mode_ == Representation::Rotations ? 1 : 0); }
  int feature_width() const { return channel_count() * kFeatureDim; }
  int root_channel() const { return mode_ == Representation::Rotations ? joint_count() : -1; }

  const std::vector<int>& parents() const { return parents_; }
  const std::vector<Eigen::Vector3d>& offsets() const { return offsets_; }
  const std::vector<BodyPart>& part_of() const { return part_of_; }
  const std::vector<int>& foot_joints() const { return foot_joints_; }
  const std::vector<std::string>& names() const { return names_; }
  Representation mode() const { return mode_; }

  /// Part owning a feature channel; the root-translation channel is Torso.
  BodyPart channel_part(int channel) const;

  Skeleton with_mode(Representation mode) const;
  Skeleton with_offsets(std::vector<Eigen::Vector3d> offsets) const;

  bool operator==(const Skeleton& other) const;

 private:
  std::vector<int> parents_;
  std::vector<Eigen::Vector3d> offsets_;
  std::vector<BodyPart> part_of_;
  std::vector<int> foot_joints_;
  std::vector<std::string> names_;
  Representation mode_;
};

/// N frames of per-channel features, stored N × (channels·dim), channel-major within a row.
struct MotionSequence {
  Mat frames;
  int channels = 0;
  int dim = Skeleton::kFeatureDim;
  std::string caption;
  float fps = 20.0f;

  int length() const { return static_cast<int>(frames.rows()); }

  /// Throws InvalidInput unless N ≥ 2, entries are finite and the shape matches.
  void validate_against(const Skeleton& skeleton) const;
};

using PartSets = std::array<std::vector<int>, kPartCount>;

/// Joint indices per part in declaration order. Throws InvalidSkeleton on an empty part.
PartSets part_index_sets(const Skeleton& skeleton);

/// Same partition over feature channels (root-translation channel joins Torso).
PartSets channel_part_sets(const Skeleton& skeleton);

/// (N−1) × |foot_joints| indicators, 1 where the foot is planted.
struct FootContactLabels {
  Mat contacts;
};

/// Global joint positions, N × (J·3). Identity in `Positions` mode.
Mat forward_kinematics(const Skeleton& skeleton, const Mat& frames);
Mat forward_kinematics(const Skeleton& skeleton, const MotionSequence& motion);

/// Vector-Jacobian product of forward_kinematics: maps d/d(positions) to d/d(frames).
Mat forward_kinematics_vjp(const Skeleton& skeleton, const Mat& frames, const Mat& grad_positions);

/// Default speed threshold (m/s) for contact labelling at a given frame rate.
inline double default_contact_threshold(double fps) { return 0.01 * fps; }

FootContactLabels detect_foot_contact(const Skeleton& skeleton, const Mat& positions, double fps,
                                      double speed_threshold);

// FK building blocks, templated so derivatives can flow through them.

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> axis_angle_to_matrix(const Eigen::Matrix<Scalar, 3, 1>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  Eigen::Matrix<Scalar, 3, 3> k;
  k << Scalar(0), -w.z(), w.y(), w.z(), Scalar(0), -w.x(), -w.y(), w.x(), Scalar(0);
  const Scalar theta2 = w.squaredNorm();
  Scalar a, b;
  if (theta2 < 1e-8) {
    a = Scalar(1) - theta2 / Scalar(6);
    b = Scalar(0.5) - theta2 / Scalar(24);
  } else {
    const Scalar theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (Scalar(1) - cos(theta)) / theta2;
  }
  Eigen::Matrix<Scalar, 3, 3> r = Eigen::Matrix<Scalar, 3, 3>::Identity();
  r += a * k + b * (k * k);
  return r;
}

/// Positions for one frame of rotation features: channel j holds joint j's
/// axis-angle; channel J holds the root translation. A joint's rotation
/// orients the bone from its parent to itself: G_j = G_parent·R_j and
/// p_j = p_parent + G_j·offset_j.
template <typename Scalar>
MatrixR<Scalar> fk_frame(const Skeleton& skeleton, const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& row) {
  const int joints = skeleton.joint_count();
  MatrixR<Scalar> pos(joints, 3);
  std::vector<Eigen::Matrix<Scalar, 3, 3>> global(joints);
  const Eigen::Matrix<Scalar, 3, 1> root(row(3 * joints), row(3 * joints + 1), row(3 * joints + 2));
  for (int j = 0; j < joints; ++j) {
    const Eigen::Matrix<Scalar, 3, 1> w(row(3 * j), row(3 * j + 1), row(3 * j + 2));
    const Eigen::Matrix<Scalar, 3, 3> local = axis_angle_to_matrix<Scalar>(w);
    const int parent = skeleton.parents()[j];
    const Eigen::Matrix<Scalar, 3, 1> offset = skeleton.offsets()[j].template cast<Scalar>();
    if (parent < 0) {
      global[j] = local;
      pos.row(j) = (root + local * offset).transpose();
    } else {
      global[j] = global[parent] * local;
      pos.row(j) = pos.row(parent) + (global[j] * offset).transpose();
    }
  }
  return pos;
}

}  // namespace mmdm
