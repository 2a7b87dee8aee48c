#include "mmdm/motion.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <unsupported/Eigen/AutoDiff>

namespace mmdm {

const char* to_string(BodyPart part) {
  switch (part) {
    case BodyPart::Torso: return "torso";
    case BodyPart::LeftArm: return "left_arm";
    case BodyPart::RightArm: return "right_arm";
    case BodyPart::LeftLeg: return "left_leg";
    case BodyPart::RightLeg: return "right_leg";
  }
  return "?";
}

BodyPart body_part_from_string(const std::string& name) {
  for (int p = 0; p < kPartCount; ++p)
    if (name == to_string(static_cast<BodyPart>(p))) return static_cast<BodyPart>(p);
  throw Error(ErrorKind::InvalidSkeleton, "unknown body part '" + name + "'");
}

const char* to_string(Representation mode) {
  return mode == Representation::Positions ? "positions" : "rotations";
}

Representation representation_from_string(const std::string& name) {
  if (name == "positions") return Representation::Positions;
  if (name == "rotations") return Representation::Rotations;
  throw Error(ErrorKind::InvalidConfig, "unknown representation '" + name + "'");
}

Skeleton::Skeleton(std::vector<int> parents, std::vector<Eigen::Vector3d> offsets, std::vector<BodyPart> part_of,
                   std::vector<int> foot_joints, Representation mode, std::vector<std::string> names)
    : parents_(std::move(parents)),
      offsets_(std::move(offsets)),
      part_of_(std::move(part_of)),
      foot_joints_(std::move(foot_joints)),
      names_(std::move(names)),
      mode_(mode) {
  const int j = joint_count();
  require(j >= 1, ErrorKind::InvalidSkeleton, "skeleton has no joints");
  require(static_cast<int>(offsets_.size()) == j, ErrorKind::InvalidSkeleton, "offsets/parents length mismatch");
  require(static_cast<int>(part_of_.size()) == j, ErrorKind::InvalidSkeleton, "part_of must cover every joint");
  require(parents_[0] == -1, ErrorKind::InvalidSkeleton, "joint 0 must be the root (parent -1)");
  for (int k = 1; k < j; ++k) {
    // Parent-before-child order makes the tree acyclic with a single root.
    require(parents_[k] >= 0 && parents_[k] < k, ErrorKind::InvalidSkeleton,
            "joint " + std::to_string(k) + " must have a parent with a smaller index");
  }
  std::set<int> seen;
  for (int f : foot_joints_) {
    require(f >= 0 && f < j, ErrorKind::InvalidSkeleton, "foot joint out of range");
    require(seen.insert(f).second, ErrorKind::InvalidSkeleton, "duplicate foot joint");
  }
  for (const auto& o : offsets_) require(o.allFinite(), ErrorKind::InvalidSkeleton, "non-finite offset");
  if (names_.empty())
    for (int k = 0; k < j; ++k) names_.push_back("joint" + std::to_string(k));
  require(static_cast<int>(names_.size()) == j, ErrorKind::InvalidSkeleton, "names length mismatch");
}

Skeleton Skeleton::toy(Representation mode) {
  using P = BodyPart;
  return Skeleton({-1, 0, 1, 1, 1, 0, 5, 0, 7},
                  {{0, 0, 0},
                   {0, 0.3, 0},
                   {0, 0.3, 0},
                   {0.45, 0, 0},
                   {-0.45, 0, 0},
                   {0.1, 0, 0},
                   {0, -0.9, 0},
                   {-0.1, 0, 0},
                   {0, -0.9, 0}},
                  {P::Torso, P::Torso, P::Torso, P::LeftArm, P::RightArm, P::LeftLeg, P::LeftLeg, P::RightLeg,
                   P::RightLeg},
                  {6, 8}, mode,
                  {"pelvis", "spine", "head", "left_hand", "right_hand", "left_hip", "left_foot", "right_hip",
                   "right_foot"});
}

BodyPart Skeleton::channel_part(int channel) const {
  require(channel >= 0 && channel < channel_count(), ErrorKind::InvalidInput, "channel out of range");
  if (channel == joint_count()) return BodyPart::Torso;
  return part_of_[channel];
}

Skeleton Skeleton::with_mode(Representation mode) const {
  return Skeleton(parents_, offsets_, part_of_, foot_joints_, mode, names_);
}

Skeleton Skeleton::with_offsets(std::vector<Eigen::Vector3d> offsets) const {
  return Skeleton(parents_, std::move(offsets), part_of_, foot_joints_, mode_, names_);
}

bool Skeleton::operator==(const Skeleton& other) const {
  return parents_ == other.parents_ && offsets_ == other.offsets_ && part_of_ == other.part_of_ &&
         foot_joints_ == other.foot_joints_ && names_ == other.names_ && mode_ == other.mode_;
}

void MotionSequence::validate_against(const Skeleton& skeleton) const {
  require(frames.rows() >= 2, ErrorKind::InvalidInput, "motion needs at least 2 frames");
  require(channels == skeleton.channel_count() && dim == Skeleton::kFeatureDim &&
              frames.cols() == static_cast<Eigen::Index>(channels) * dim,
          ErrorKind::InvalidInput,
          "motion shape (" + std::to_string(frames.rows()) + ", " + std::to_string(channels) + ", " +
              std::to_string(dim) + ") does not match skeleton with " + std::to_string(skeleton.channel_count()) +
              " channels");
  require(frames.allFinite(), ErrorKind::InvalidInput, "motion contains non-finite values");
}

namespace {

PartSets partition(const Skeleton& skeleton, int count, bool by_channel) {
  PartSets sets;
  for (int c = 0; c < count; ++c) {
    const BodyPart part = by_channel ? skeleton.channel_part(c) : skeleton.part_of()[c];
    sets[static_cast<int>(part)].push_back(c);
  }
  for (int p = 0; p < kPartCount; ++p)
    require(!sets[p].empty(), ErrorKind::InvalidSkeleton,
            std::string("body part ") + to_string(static_cast<BodyPart>(p)) + " has no joints");
  return sets;
}

void check_frames(const Skeleton& skeleton, const Mat& frames) {
  require(frames.cols() == skeleton.feature_width(), ErrorKind::InvalidInput,
          "frame width " + std::to_string(frames.cols()) + " does not match skeleton width " +
              std::to_string(skeleton.feature_width()));
}

}  // namespace

PartSets part_index_sets(const Skeleton& skeleton) { return partition(skeleton, skeleton.joint_count(), false); }

PartSets channel_part_sets(const Skeleton& skeleton) { return partition(skeleton, skeleton.channel_count(), true); }

Mat forward_kinematics(const Skeleton& skeleton, const Mat& frames) {
  check_frames(skeleton, frames);
  if (skeleton.mode() == Representation::Positions) return frames;
  const int joints = skeleton.joint_count();
  Mat out(frames.rows(), joints * 3);
  for (Eigen::Index i = 0; i < frames.rows(); ++i) {
    Eigen::RowVectorXd row = frames.row(i);
    MatrixR<double> pos = fk_frame<double>(skeleton, row);
    out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(pos.data(), joints * 3);
  }
  return out;
}

Mat forward_kinematics(const Skeleton& skeleton, const MotionSequence& motion) {
  motion.validate_against(skeleton);
  return forward_kinematics(skeleton, motion.frames);
}

Mat forward_kinematics_vjp(const Skeleton& skeleton, const Mat& frames, const Mat& grad_positions) {
  check_frames(skeleton, frames);
  const int joints = skeleton.joint_count();
  require(grad_positions.rows() == frames.rows() && grad_positions.cols() == joints * 3, ErrorKind::InvalidInput,
          "fk vjp: gradient shape mismatch");
  if (skeleton.mode() == Representation::Positions) return grad_positions;

  using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;
  const int width = skeleton.feature_width();
  Mat out(frames.rows(), width);
  for (Eigen::Index i = 0; i < frames.rows(); ++i) {
    Eigen::Matrix<AD, 1, Eigen::Dynamic> row(width);
    for (int k = 0; k < width; ++k) row(k) = AD(frames(i, k), width, k);
    MatrixR<AD> pos = fk_frame<AD>(skeleton, row);
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(width);
    for (int j = 0; j < joints; ++j)
      for (int a = 0; a < 3; ++a) {
        const double w = grad_positions(i, 3 * j + a);
        if (w != 0.0 && pos(j, a).derivatives().size() == width) g += w * pos(j, a).derivatives().transpose();
      }
    out.row(i) = g;
  }
  return out;
}

FootContactLabels detect_foot_contact(const Skeleton& skeleton, const Mat& positions, double fps,
                                      double speed_threshold) {
  const int joints = skeleton.joint_count();
  require(positions.rows() >= 2, ErrorKind::InvalidInput, "foot contact needs at least 2 frames");
  require(positions.cols() == joints * 3, ErrorKind::InvalidInput, "positions width mismatch");
  require(speed_threshold > 0 && fps > 0, ErrorKind::InvalidInput, "threshold and fps must be positive");
  const auto& feet = skeleton.foot_joints();
  FootContactLabels labels;
  labels.contacts = Mat::Zero(positions.rows() - 1, static_cast<Eigen::Index>(feet.size()));
  for (Eigen::Index i = 0; i + 1 < positions.rows(); ++i)
    for (std::size_t k = 0; k < feet.size(); ++k) {
      const int j = feet[k];
      const double step = (positions.row(i + 1).segment<3>(3 * j) - positions.row(i).segment<3>(3 * j)).norm();
      labels.contacts(i, static_cast<Eigen::Index>(k)) = step * fps < speed_threshold ? 1.0 : 0.0;
    }
  return labels;
}

}  // namespace mmdm
