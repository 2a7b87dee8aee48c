#include "mmdm/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "mmdm/error.hpp"

namespace mmdm {

namespace {

using Color = std::array<std::uint8_t, 3>;

constexpr Color kBackground{255, 255, 255};
constexpr std::array<Color, kPartCount> kPartColors{{
    {60, 60, 60},    // torso
    {200, 40, 40},   // left arm
    {40, 90, 210},   // right arm
    {230, 140, 20},  // left leg
    {30, 160, 70},   // right leg
}};

void draw_line(Image& img, std::array<int, 2> a, std::array<int, 2> b, const Color& color) {
  int x0 = a[0], y0 = a[1];
  const int x1 = b[0], y1 = b[1];
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

Image::Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 255) {}

std::array<std::uint8_t, 3> Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void Image::set(int x, int y, const std::array<std::uint8_t, 3>& color) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  std::copy(color.begin(), color.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
}

Projection::Projection(const Mat& positions, const RenderConfig& config)
    : margin_(config.margin), height_(config.height) {
  require(config.width > 2 * config.margin && config.height > 2 * config.margin, ErrorKind::InvalidConfig,
          "render size too small for margin");
  double max_x = -INFINITY, max_y = -INFINITY;
  min_x_ = INFINITY;
  min_y_ = INFINITY;
  for (Eigen::Index r = 0; r < positions.rows(); ++r)
    for (Eigen::Index j = 0; j + 2 < positions.cols(); j += 3) {
      min_x_ = std::min(min_x_, positions(r, j));
      max_x = std::max(max_x, positions(r, j));
      min_y_ = std::min(min_y_, positions(r, j + 1));
      max_y = std::max(max_y, positions(r, j + 1));
    }
  const double span = std::max({max_x - min_x_, max_y - min_y_, 1e-9});
  const int usable = std::min(config.width, config.height) - 2 * config.margin - 1;
  scale_ = usable / span;
}

std::array<int, 2> Projection::operator()(double x, double y) const {
  const int px = margin_ + static_cast<int>(std::lround((x - min_x_) * scale_));
  const int py = height_ - 1 - margin_ - static_cast<int>(std::lround((y - min_y_) * scale_));
  return {px, py};
}

std::vector<std::vector<std::array<int, 2>>> project_motion(const Skeleton& skeleton, const Mat& frames,
                                                           const RenderConfig& config) {
  const Mat pos = forward_kinematics(skeleton, frames);
  const Projection proj(pos, config);
  std::vector<std::vector<std::array<int, 2>>> out(pos.rows());
  for (Eigen::Index r = 0; r < pos.rows(); ++r)
    for (int j = 0; j < skeleton.joint_count(); ++j) out[r].push_back(proj(pos(r, 3 * j), pos(r, 3 * j + 1)));
  return out;
}

std::vector<Image> render_motion(const Skeleton& skeleton, const Mat& frames, const RenderConfig& config) {
  const auto points = project_motion(skeleton, frames, config);
  std::vector<Image> images;
  for (const auto& joints : points) {
    Image img(config.width, config.height);
    for (int j = 1; j < skeleton.joint_count(); ++j) {
      const Color c = kPartColors[static_cast<int>(skeleton.part_of()[j])];
      draw_line(img, joints[skeleton.parents()[j]], joints[j], c);
    }
    for (int j = 0; j < skeleton.joint_count(); ++j) {
      const Color c = kPartColors[static_cast<int>(skeleton.part_of()[j])];
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) img.set(joints[j][0] + dx, joints[j][1] + dy, c);
    }
    images.push_back(std::move(img));
  }
  return images;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0) throw Error(ErrorKind::BadMagic, "not a P6 image: " + path.string());
  in.get();
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
    throw Error(ErrorKind::Truncated, "short image payload: " + path.string());
  return img;
}

std::vector<std::filesystem::path> render_to_dir(const Skeleton& skeleton, const Mat& frames,
                                                 const std::filesystem::path& dir, const RenderConfig& config) {
  std::filesystem::create_directories(dir);
  const auto images = render_motion(skeleton, frames, config);
  std::vector<std::filesystem::path> paths;
  char name[32];
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::snprintf(name, sizeof name, "frame_%06zu.ppm", i);
    paths.push_back(dir / name);
    write_ppm(paths.back(), images[i]);
  }
  return paths;
}

}  // namespace mmdm
