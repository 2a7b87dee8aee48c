#include "mmdm/motion_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace mmdm {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'O', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  std::string text(std::size_t n, const char* field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) {
    if (remaining() < n) throw Error(ErrorKind::Truncated, std::string("file ends inside ") + field);
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_motion(const MotionSequence& motion) {
  require(motion.frames.cols() == static_cast<Eigen::Index>(motion.channels) * motion.dim, ErrorKind::InvalidInput,
          "motion frames do not match channels·dim");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kMotionFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(motion.frames.rows()));
  put_u32(out, static_cast<std::uint32_t>(motion.channels));
  put_u32(out, static_cast<std::uint32_t>(motion.dim));
  put_f32(out, motion.fps);
  put_u32(out, static_cast<std::uint32_t>(motion.caption.size()));
  out.insert(out.end(), motion.caption.begin(), motion.caption.end());
  for (Eigen::Index i = 0; i < motion.frames.rows(); ++i)
    for (Eigen::Index k = 0; k < motion.frames.cols(); ++k) put_f32(out, static_cast<float>(motion.frames(i, k)));
  return out;
}

MotionSequence decode_motion(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::BadMagic, "magic check failed: expected \"MMOT\"");
  Reader r(bytes);
  r.text(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kMotionFormatVersion)
    throw Error(ErrorKind::VersionMismatch, "unsupported .mmot version " + std::to_string(version));
  const std::uint32_t n = r.u32("header");
  const std::uint32_t j = r.u32("header");
  const std::uint32_t d = r.u32("header");
  MotionSequence m;
  m.fps = r.f32("header");
  const std::uint32_t caption_len = r.u32("header");
  m.caption = r.text(caption_len, "caption");
  const std::uint64_t count = static_cast<std::uint64_t>(n) * j * d;
  if (r.remaining() != count * 4)
    throw Error(ErrorKind::Truncated, "header declares " + std::to_string(count) + " values but payload holds " +
                                          std::to_string(r.remaining()) + " bytes");
  m.channels = static_cast<int>(j);
  m.dim = static_cast<int>(d);
  m.frames.resize(n, static_cast<Eigen::Index>(j) * d);
  for (std::uint32_t i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < m.frames.cols(); ++k) m.frames(i, k) = r.f32("frames");
  return m;
}

void write_motion(const std::filesystem::path& path, const MotionSequence& motion) {
  const auto bytes = encode_motion(motion);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

MotionSequence read_motion(const std::filesystem::path& path) { return decode_motion(slurp(path)); }

std::string skeleton_to_json(const Skeleton& skeleton) {
  nlohmann::json j;
  j["format"] = "mmdm-skeleton";
  j["version"] = 1;
  j["representation"] = to_string(skeleton.mode());
  j["names"] = skeleton.names();
  j["parents"] = skeleton.parents();
  nlohmann::json offsets = nlohmann::json::array();
  for (const auto& o : skeleton.offsets()) offsets.push_back({o.x(), o.y(), o.z()});
  j["offsets"] = offsets;
  std::vector<std::string> parts;
  for (BodyPart p : skeleton.part_of()) parts.emplace_back(to_string(p));
  j["parts"] = parts;
  j["foot_joints"] = skeleton.foot_joints();
  return j.dump(2);
}

Skeleton skeleton_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    std::vector<Eigen::Vector3d> offsets;
    for (const auto& o : j.at("offsets")) offsets.emplace_back(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
    std::vector<BodyPart> parts;
    for (const auto& p : j.at("parts")) parts.push_back(body_part_from_string(p.get<std::string>()));
    return Skeleton(j.at("parents").get<std::vector<int>>(), std::move(offsets), std::move(parts),
                    j.at("foot_joints").get<std::vector<int>>(),
                    representation_from_string(j.value("representation", "positions")),
                    j.value("names", std::vector<std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidSkeleton, std::string("skeleton file: ") + e.what());
  }
}

void write_skeleton(const std::filesystem::path& path, const Skeleton& skeleton) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << skeleton_to_json(skeleton) << '\n';
}

Skeleton read_skeleton(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  return skeleton_from_json(std::string(bytes.begin(), bytes.end()));
}

Dataset load_motion_dir(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::Io, "not a directory: " + dir.string());
  Dataset data{read_skeleton(dir / "skeleton.json"), {}, {}, {}};
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".mmot") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    MotionSequence m = read_motion(f);
    m.validate_against(data.skeleton);
    data.motions.push_back(std::move(m));
    data.labels.push_back(-1);
  }
  return data;
}

void save_motion_dir(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  write_skeleton(dir / "skeleton.json", data.skeleton);
  for (std::size_t i = 0; i < data.motions.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.mmot", i);
    write_motion(dir / name, data.motions[i]);
  }
}

}  // namespace mmdm
