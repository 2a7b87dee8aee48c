#include "mmdm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace mmdm {

namespace {

struct CaptionTemplate {
  std::vector<std::string> phrases;
};

const std::vector<std::string>& subjects() {
  static const std::vector<std::string> s{"a person", "someone", "the person", "a man", "a woman"};
  return s;
}

const std::map<std::string, CaptionTemplate>& templates() {
  static const std::map<std::string, CaptionTemplate> t{
      {"walk", {{"walks forward", "is walking forward", "strides ahead", "walks straight ahead"}}},
      {"wave_left_arm",
       {{"waves the left arm", "waves with the left hand", "raises the left arm and waves",
         "is waving the left hand"}}},
      {"wave_right_arm",
       {{"waves the right arm", "waves with the right hand", "raises the right arm and waves",
         "is waving the right hand"}}},
      {"kick_right_leg",
       {{"kicks with the right leg", "kicks the right foot forward", "does a kick with the right leg"}}},
      {"kick_left_leg",
       {{"kicks with the left leg", "kicks the left foot forward", "does a kick with the left leg"}}},
      {"crouch", {{"crouches down", "squats down and stands up", "bends the knees and crouches"}}},
      {"jump", {{"jumps up", "jumps in place", "hops up and down"}}},
  };
  return t;
}

// Joint indices of the toy skeleton.
enum ToyJoint { kPelvis = 0, kSpine, kHead, kLeftHand, kRightHand, kLeftHip, kLeftFoot, kRightHip, kRightFoot };

struct Params {
  double amplitude;
  double frequency;
  double phase;
};

void set_rot(Eigen::RowVectorXd& row, int joint, double x, double y, double z) {
  row(3 * joint) = x;
  row(3 * joint + 1) = y;
  row(3 * joint + 2) = z;
}

Eigen::RowVectorXd pose_at(const std::string& archetype, const Params& p, double t, int joints) {
  using std::numbers::pi;
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(3 * (joints + 1));
  Eigen::Vector3d root(0.0, 0.9, 0.0);
  const double a = p.amplitude;
  const double w = 2.0 * pi * p.frequency;
  const double s = std::sin(w * t + p.phase);
  if (archetype == "walk") {
    root.z() = 0.4 * p.frequency * t * a;
    root.y() += 0.02 * std::sin(2.0 * w * t + 2.0 * p.phase);
    set_rot(row, kLeftFoot, 0.5 * a * s, 0, 0);
    set_rot(row, kRightFoot, -0.5 * a * s, 0, 0);
    set_rot(row, kLeftHand, 0, 0.15 * s, 0);
    set_rot(row, kRightHand, 0, 0.15 * s, 0);
  } else if (archetype == "wave_left_arm") {
    set_rot(row, kLeftHand, 0, 0, 0.8 + 0.5 * a * std::sin(1.5 * w * t + p.phase));
  } else if (archetype == "wave_right_arm") {
    set_rot(row, kRightHand, 0, 0, -0.8 - 0.5 * a * std::sin(1.5 * w * t + p.phase));
  } else if (archetype == "kick_right_leg") {
    set_rot(row, kRightFoot, -1.0 * a * std::max(0.0, s), 0, 0);
  } else if (archetype == "kick_left_leg") {
    set_rot(row, kLeftFoot, -1.0 * a * std::max(0.0, s), 0, 0);
  } else if (archetype == "crouch") {
    const double depth = 0.5 - 0.5 * std::cos(w * t + p.phase);
    root.y() -= 0.3 * a * depth;
    set_rot(row, kSpine, 0.4 * a * depth, 0, 0);
  } else if (archetype == "jump") {
    const double lift = std::max(0.0, s);
    root.y() += 0.3 * a * lift;
    set_rot(row, kLeftHand, 0, 0, 0.6 * lift);
    set_rot(row, kRightHand, 0, 0, -0.6 * lift);
  }
  row.tail<3>() = root.transpose();
  return row;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

}  // namespace

const std::vector<std::string>& known_archetypes() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : templates()) n.push_back(k);
    return n;
  }();
  return names;
}

std::vector<std::string> caption_vocabulary() {
  std::set<std::string> words;
  for (const auto& s : subjects())
    for (const auto& w : split_words(s)) words.insert(w);
  for (const auto& [name, tpl] : templates())
    for (const auto& phrase : tpl.phrases)
      for (const auto& w : split_words(phrase)) words.insert(w);
  return {words.begin(), words.end()};
}

Dataset generate_synthetic_dataset(const GeneratorConfig& config, std::uint64_t seed) {
  require(config.archetypes.size() >= 1, ErrorKind::InvalidConfig, "generator needs at least one archetype");
  for (const auto& name : config.archetypes)
    require(templates().count(name) != 0, ErrorKind::InvalidConfig, "unknown archetype '" + name + "'");
  require(config.samples_per_archetype >= 0, ErrorKind::InvalidConfig, "samples_per_archetype must be >= 0");
  require(config.min_length >= 2 && config.min_length <= config.max_length, ErrorKind::InvalidConfig,
          "invalid length range");
  require(config.fps > 0, ErrorKind::InvalidConfig, "fps must be positive");

  const Skeleton rot_skeleton = Skeleton::toy(Representation::Rotations);
  Dataset data{Skeleton::toy(config.mode), {}, {}, config.archetypes};
  const int joints = rot_skeleton.joint_count();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> length_dist(config.min_length, config.max_length);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t a = 0; a < config.archetypes.size(); ++a) {
    const std::string& name = config.archetypes[a];
    const auto& phrases = templates().at(name).phrases;
    for (int s = 0; s < config.samples_per_archetype; ++s) {
      const int n = length_dist(rng);
      Params p{0.8 + 0.4 * unit(rng), 0.8 + 0.4 * unit(rng), 2.0 * std::numbers::pi * unit(rng)};
      const std::size_t subj = static_cast<std::size_t>(unit(rng) * subjects().size()) % subjects().size();
      const std::size_t phr = static_cast<std::size_t>(unit(rng) * phrases.size()) % phrases.size();

      Mat rotations(n, 3 * (joints + 1));
      for (int i = 0; i < n; ++i) rotations.row(i) = pose_at(name, p, i / static_cast<double>(config.fps), joints);

      MotionSequence m;
      m.frames = config.mode == Representation::Positions ? forward_kinematics(rot_skeleton, rotations) : rotations;
      m.frames = m.frames.cast<float>().cast<double>();
      m.channels = data.skeleton.channel_count();
      m.caption = subjects()[subj] + " " + phrases[phr];
      m.fps = config.fps;
      data.motions.push_back(std::move(m));
      data.labels.push_back(static_cast<int>(a));
    }
  }
  return data;
}

}  // namespace mmdm
