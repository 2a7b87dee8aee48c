#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "mmdm/motion.hpp"
#include "mmdm/motion_io.hpp"
#include "mmdm/synthetic.hpp"

using namespace mmdm;

namespace {

// Root plus two unit links along x, all in the torso.
Skeleton chain(Representation mode = Representation::Rotations) {
  using P = BodyPart;
  return Skeleton({-1, 0, 1}, {{0, 0, 0}, {1, 0, 0}, {1, 0, 0}}, {P::Torso, P::Torso, P::Torso}, {}, mode);
}

// Rotations frame for the chain: z-rotations per joint, zero root translation.
Mat chain_frame(double a0, double a1, double a2) {
  Mat f = Mat::Zero(1, 12);
  f(0, 2) = a0;
  f(0, 5) = a1;
  f(0, 8) = a2;
  return f;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mmdm_test_motion_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("fk of an unrotated chain accumulates offsets") {
  const Mat pos = forward_kinematics(chain(), chain_frame(0, 0, 0));
  CHECK(pos.row(0).segment<3>(0).norm() == 0.0);
  CHECK((pos.row(0).segment<3>(3) - RowVec::Unit(3, 0)).norm() < 1e-12);
  CHECK((pos.row(0).segment<3>(6) - 2 * RowVec::Unit(3, 0)).norm() < 1e-12);
}

TEST_CASE("fk quarter turn at the root lifts the chain onto y") {
  const Mat pos = forward_kinematics(chain(), chain_frame(M_PI / 2, 0, 0));
  CHECK((pos.row(0).segment<3>(3) - RowVec::Unit(3, 1)).norm() < 1e-12);
  CHECK((pos.row(0).segment<3>(6) - 2 * RowVec::Unit(3, 1)).norm() < 1e-12);
}

TEST_CASE("fk matches planar two-link trigonometry") {
  // A joint's rotation orients the bone reaching it, so joint 1 sits at
  // R(a0 + a1)·e_x and joint 2 adds R(a0 + a1 + a2)·e_x.
  const double angles[][3] = {{0.3, -0.7, 0.0},  {1.2, 0.4, 0.9},  {-2.0, 1.1, 0.2}, {3.0, -3.0, 1.5},
                              {0.0, 0.0, -1.0},  {0.5, 0.5, 0.5},  {-0.1, 2.5, -2.5}, {1.0, 1e-5, -1e-5}};
  for (const auto& a : angles) {
    const Mat pos = forward_kinematics(chain(), chain_frame(a[0], a[1], a[2]));
    const double x1 = std::cos(a[0] + a[1]), y1 = std::sin(a[0] + a[1]);
    const double x2 = x1 + std::cos(a[0] + a[1] + a[2]), y2 = y1 + std::sin(a[0] + a[1] + a[2]);
    CHECK(std::abs(pos(0, 3) - x1) < 1e-9);
    CHECK(std::abs(pos(0, 4) - y1) < 1e-9);
    CHECK(std::abs(pos(0, 6) - x2) < 1e-9);
    CHECK(std::abs(pos(0, 7) - y2) < 1e-9);
    CHECK(std::abs(pos(0, 8)) < 1e-12);
  }
}

TEST_CASE("fk root translation shifts every joint") {
  Mat f = chain_frame(0.4, 0.2, 0);
  const Mat base = forward_kinematics(chain(), f);
  f.row(0).tail<3>() << 1.0, -2.0, 0.5;
  const Mat moved = forward_kinematics(chain(), f);
  RowVec shift(3);
  shift << 1.0, -2.0, 0.5;
  for (int j = 0; j < 3; ++j)
    CHECK((moved.row(0).segment<3>(3 * j) - base.row(0).segment<3>(3 * j) - shift).norm() < 1e-12);
}

TEST_CASE("fk is the identity in positions mode") {
  const Skeleton sk = Skeleton::toy();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Mat frames(5, sk.feature_width());
  for (Eigen::Index i = 0; i < frames.size(); ++i) frames.data()[i] = n(rng);
  CHECK(forward_kinematics(sk, frames) == frames);
}

TEST_CASE("fk is linear in offsets under identity rotations") {
  const Skeleton sk = Skeleton::toy(Representation::Rotations);
  std::vector<Eigen::Vector3d> doubled;
  for (const auto& o : sk.offsets()) doubled.push_back(2.0 * o);
  const Mat zero = Mat::Zero(2, sk.feature_width());
  const Mat a = forward_kinematics(sk, zero);
  const Mat b = forward_kinematics(sk.with_offsets(doubled), zero);
  CHECK((b - 2.0 * a).norm() < 1e-12);
}

TEST_CASE("fk vjp agrees with central differences") {
  const Skeleton sk = Skeleton::toy(Representation::Rotations);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.6);
  Mat frames(3, sk.feature_width());
  for (Eigen::Index i = 0; i < frames.size(); ++i) frames.data()[i] = n(rng);
  Mat w(3, 3 * sk.joint_count());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  const Mat grad = forward_kinematics_vjp(sk, frames, w);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < frames.size(); ++i) {
    Mat p = frames, m = frames;
    p.data()[i] += h;
    m.data()[i] -= h;
    const double fd =
        ((forward_kinematics(sk, p).array() * w.array()).sum() - (forward_kinematics(sk, m).array() * w.array()).sum()) /
        (2 * h);
    CHECK(std::abs(fd - grad.data()[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("fk vjp at a zero rotation stays finite") {
  const Skeleton sk = Skeleton::toy(Representation::Rotations);
  const Mat frames = Mat::Zero(2, sk.feature_width());
  const Mat g = forward_kinematics_vjp(sk, frames, Mat::Ones(2, 3 * sk.joint_count()));
  CHECK(g.allFinite());
}

TEST_CASE("skeleton validation") {
  using P = BodyPart;
  CHECK_THROWS_AS(Skeleton({0}, {{0, 0, 0}}, {P::Torso}, {}), Error);
  CHECK_THROWS_AS(Skeleton({-1, 2, 0}, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}, {P::Torso, P::Torso, P::Torso}, {}), Error);
  CHECK_THROWS_AS(Skeleton({-1, 0}, {{0, 0, 0}}, {P::Torso, P::Torso}, {}), Error);
  CHECK_THROWS_AS(Skeleton({-1, 0}, {{0, 0, 0}, {1, 0, 0}}, {P::Torso, P::Torso}, {2}), Error);
  try {
    Skeleton({-1, 0}, {{0, 0, 0}, {1, 0, 0}}, {P::Torso}, {});
    FAIL("expected a skeleton error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidSkeleton);
  }
}

TEST_CASE("toy skeleton part sets") {
  const Skeleton sk = Skeleton::toy();
  const PartSets sets = part_index_sets(sk);
  const int sizes[] = {3, 1, 1, 2, 2};
  std::set<int> all;
  for (int p = 0; p < kPartCount; ++p) {
    CHECK(static_cast<int>(sets[p].size()) == sizes[p]);
    CHECK(std::is_sorted(sets[p].begin(), sets[p].end()));
    for (int j : sets[p]) {
      CHECK(sk.part_of()[j] == static_cast<BodyPart>(p));
      CHECK(all.insert(j).second);
    }
  }
  CHECK(static_cast<int>(all.size()) == sk.joint_count());
}

TEST_CASE("rotation mode puts the root channel in the torso") {
  const Skeleton sk = Skeleton::toy(Representation::Rotations);
  const PartSets sets = channel_part_sets(sk);
  CHECK(sets[0].back() == sk.joint_count());
  CHECK(sk.channel_part(sk.root_channel()) == BodyPart::Torso);
}

TEST_CASE("part sets reject a skeleton missing a part") {
  CHECK_THROWS_AS(part_index_sets(chain()), Error);
}

TEST_CASE("foot contact on static and fast feet") {
  const Skeleton sk = Skeleton::toy();
  const double fps = 20.0, threshold = default_contact_threshold(fps);
  Mat still = Mat::Constant(6, sk.feature_width(), 0.25);
  CHECK(detect_foot_contact(sk, still, fps, threshold).contacts == Mat::Ones(5, 2));

  Mat moving = still;
  for (int i = 0; i < 6; ++i)
    for (int f : sk.foot_joints()) moving(i, 3 * f) += i * 2.0 * threshold / fps;
  CHECK(detect_foot_contact(sk, moving, fps, threshold).contacts == Mat::Zero(5, 2));
}

TEST_CASE("foot contact on a generated walk matches a displacement loop") {
  GeneratorConfig cfg;
  cfg.archetypes = {"walk"};
  cfg.samples_per_archetype = 3;
  const Dataset data = generate_synthetic_dataset(cfg, 7);
  const Skeleton& sk = data.skeleton;
  const double threshold = default_contact_threshold(cfg.fps);
  int planted = 0, lifted = 0;
  for (const auto& m : data.motions) {
    const Mat pos = forward_kinematics(sk, m.frames);
    const Mat c = detect_foot_contact(sk, pos, cfg.fps, threshold).contacts;
    for (int i = 0; i + 1 < m.length(); ++i)
      for (int k = 0; k < 2; ++k) {
        const int j = sk.foot_joints()[k];
        double d2 = 0;
        for (int a = 0; a < 3; ++a) d2 += std::pow(pos(i + 1, 3 * j + a) - pos(i, 3 * j + a), 2);
        const double expected = std::sqrt(d2) * cfg.fps < threshold ? 1.0 : 0.0;
        CHECK(c(i, k) == expected);
        (expected > 0 ? planted : lifted)++;
      }
  }
  CHECK(planted > 0);
  CHECK(lifted > 0);
}

TEST_CASE("synthetic dataset counts and determinism") {
  const Dataset a = generate_synthetic_dataset({}, 0);
  const Dataset b = generate_synthetic_dataset({}, 0);
  REQUIRE(a.size() == 200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.motions[i].frames == b.motions[i].frames);
    CHECK(a.motions[i].caption == b.motions[i].caption);
    CHECK(a.labels[i] == b.labels[i]);
    a.motions[i].validate_against(a.skeleton);
    CHECK(a.motions[i].length() >= 16);
    CHECK(a.motions[i].length() <= 64);
  }
  const Dataset c = generate_synthetic_dataset({}, 1);
  CHECK_FALSE(c.motions[0].frames.isApprox(a.motions[0].frames));
  std::set<std::string> captions;
  for (const auto& m : a.motions) captions.insert(m.caption);
  CHECK(captions.size() > 8);
}

TEST_CASE("unknown archetype is a config error") {
  GeneratorConfig cfg;
  cfg.archetypes = {"moonwalk"};
  try {
    generate_synthetic_dataset(cfg, 0);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
  }
}

TEST_CASE("waving the left arm moves the left arm more than the right leg") {
  GeneratorConfig cfg;
  cfg.archetypes = {"wave_left_arm"};
  cfg.samples_per_archetype = 20;
  const Dataset data = generate_synthetic_dataset(cfg, 0);
  const PartSets parts = part_index_sets(data.skeleton);
  auto part_variance = [&](BodyPart p) {
    double total = 0.0;
    for (const auto& m : data.motions) {
      const Mat pos = forward_kinematics(data.skeleton, m.frames);
      for (int j : parts[static_cast<int>(p)]) {
        const Mat block = pos.middleCols(3 * j, 3);
        total += (block.rowwise() - block.colwise().mean()).squaredNorm() / block.rows();
      }
    }
    return total / parts[static_cast<int>(p)].size();
  };
  CHECK(part_variance(BodyPart::LeftArm) > part_variance(BodyPart::RightLeg));
}

TEST_CASE("rotation datasets decode to the same archetypes") {
  GeneratorConfig cfg;
  cfg.mode = Representation::Rotations;
  cfg.samples_per_archetype = 2;
  const Dataset data = generate_synthetic_dataset(cfg, 5);
  CHECK(data.skeleton.mode() == Representation::Rotations);
  for (const auto& m : data.motions) m.validate_against(data.skeleton);
}

TEST_CASE("motion files round trip bit-exactly") {
  const Dataset data = generate_synthetic_dataset({{"kick_right_leg"}, 2, 16, 20}, 4);
  const auto dir = temp_dir("roundtrip");
  for (const auto& m : data.motions) {
    write_motion(dir / "m.mmot", m);
    const MotionSequence back = read_motion(dir / "m.mmot");
    CHECK(back.frames == m.frames);
    CHECK(back.caption == m.caption);
    CHECK(back.fps == m.fps);
    CHECK(back.channels == m.channels);
  }
}

TEST_CASE("motion decoding rejects bad magic, versions and truncation") {
  MotionSequence m;
  m.frames = Mat::Constant(3, 6, 0.5);
  m.channels = 2;
  m.caption = "a person waves";
  auto bytes = encode_motion(m);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_motion(bad);
    FAIL("expected a magic error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BadMagic);
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
  }

  bad = bytes;
  bad[4] = 9;
  try {
    decode_motion(bad);
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::VersionMismatch);
  }

  bad = bytes;
  bad.resize(bad.size() - 4);
  try {
    decode_motion(bad);
    FAIL("expected a truncation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Truncated);
  }

  bad = bytes;
  bad.push_back(0);
  try {
    decode_motion(bad);
    FAIL("expected a truncation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Truncated);
  }
}

TEST_CASE("motion header layout") {
  MotionSequence m;
  m.frames = Mat::Zero(2, 3);
  m.channels = 1;
  m.caption = "ab";
  m.fps = 30.0f;
  const auto b = encode_motion(m);
  CHECK(std::string(b.begin(), b.begin() + 4) == "MMOT");
  CHECK(b[4] == 1);
  CHECK(b[8] == 2);
  CHECK(b[12] == 1);
  CHECK(b[16] == 3);
  CHECK(b.size() == 4 + 4 * 4 + 4 + 4 + 2 + 2 * 3 * 4);
}

TEST_CASE("skeleton sidecar and dataset directory round trip") {
  GeneratorConfig cfg;
  cfg.samples_per_archetype = 2;
  cfg.mode = Representation::Rotations;
  const Dataset data = generate_synthetic_dataset(cfg, 2);
  const auto dir = temp_dir("dir");
  save_motion_dir(dir, data);
  const Dataset back = load_motion_dir(dir);
  CHECK(back.skeleton == data.skeleton);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(back.motions[i].frames == data.motions[i].frames);
  CHECK(skeleton_from_json(skeleton_to_json(Skeleton::toy())) == Skeleton::toy());
}
