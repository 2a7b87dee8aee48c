#include "mmdm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mmdm/config.hpp"
#include "mmdm/motion_io.hpp"

namespace mmdm {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

void put_tensor(std::string& out, const std::string& name, const Mat& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::Truncated, "checkpoint ends unexpectedly");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

struct RawCheckpoint {
  nlohmann::json header;
  std::map<std::string, Mat> tensors;
};

RawCheckpoint read_raw(const std::filesystem::path& path, bool header_only) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::BadMagic, path.string() + " is not a checkpoint (magic check failed)");
  Cursor c(bytes);
  c.text(4);
  const std::uint32_t version = c.u32();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::VersionMismatch, "unsupported checkpoint version " + std::to_string(version));
  RawCheckpoint raw;
  try {
    raw.header = nlohmann::json::parse(c.text(c.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Incompatible, std::string("checkpoint header: ") + e.what());
  }
  if (header_only) return raw;
  const std::uint32_t count = c.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = c.text(c.u32());
    const std::uint32_t rows = c.u32();
    const std::uint32_t cols = c.u32();
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = c.f64();
    raw.tensors.emplace(std::move(name), std::move(m));
  }
  if (!c.done()) throw Error(ErrorKind::Truncated, "trailing bytes after checkpoint tensors");
  return raw;
}

Denoiser rebuild_model(const RawCheckpoint& raw) {
  ModelConfig model;
  Skeleton skeleton = Skeleton::toy();
  try {
    model = model_config_from_json(raw.header.at("model"));
    skeleton = skeleton_from_json(raw.header.at("skeleton").dump());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Incompatible, std::string("checkpoint header: ") + e.what());
  }
  Denoiser d(model, skeleton, 0);
  for (auto& [name, p] : d.params()) {
    auto it = raw.tensors.find(name);
    require(it != raw.tensors.end(), ErrorKind::Incompatible, "checkpoint lacks parameter " + name);
    require(it->second.rows() == p.value.rows() && it->second.cols() == p.value.cols(), ErrorKind::Incompatible,
            "parameter " + name + " has a different shape in the checkpoint");
    p.value = it->second;
  }
  return d;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config) {
  std::ostringstream rng;
  rng << state.rng;
  nlohmann::json header{{"format", "mmdm-checkpoint"},
                        {"dtype", "f64"},
                        {"model", to_json(state.model.config())},
                        {"skeleton", nlohmann::json::parse(skeleton_to_json(state.model.skeleton()))},
                        {"train", to_json(config)},
                        {"step", state.step},
                        {"adam_step", state.adam.step},
                        {"rng", rng.str()},
                        {"order", state.order},
                        {"cursor", state.cursor}};
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string text = header.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;

  std::uint32_t count = static_cast<std::uint32_t>(state.model.params().size() + state.adam.m.size() +
                                                   state.adam.v.size());
  put_u32(out, count);
  for (const auto& [name, p] : state.model.params()) put_tensor(out, name, p.value);
  for (const auto& [name, m] : state.adam.m) put_tensor(out, "adam.m/" + name, m);
  for (const auto& [name, v] : state.adam.v) put_tensor(out, "adam.v/" + name, v);

  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorKind::Io, "write failed for checkpoint " + path.string());
}

TrainState load_train_state(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path, false);
  TrainState state{rebuild_model(raw), AdamState{}, std::mt19937_64(), 0, {}, 0};
  try {
    state.step = raw.header.at("step").get<std::int64_t>();
    state.adam.step = raw.header.at("adam_step").get<std::int64_t>();
    std::istringstream rng(raw.header.at("rng").get<std::string>());
    rng >> state.rng;
    if (!rng) throw Error(ErrorKind::Incompatible, "checkpoint RNG state is unreadable");
    state.order = raw.header.at("order").get<std::vector<int>>();
    state.cursor = raw.header.at("cursor").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Incompatible, std::string("checkpoint header: ") + e.what());
  }
  for (auto& [name, m] : raw.tensors) {
    if (name.rfind("adam.m/", 0) == 0) state.adam.m[name.substr(7)] = m;
    if (name.rfind("adam.v/", 0) == 0) state.adam.v[name.substr(7)] = m;
  }
  return state;
}

Denoiser load_denoiser(const std::filesystem::path& path) { return rebuild_model(read_raw(path, false)); }

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) { return read_raw(path, true).header; }

}  // namespace mmdm
