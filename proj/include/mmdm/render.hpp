#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmdm/motion.hpp"

namespace mmdm {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image(int w, int h);
  std::array<std::uint8_t, 3> at(int x, int y) const;
  void set(int x, int y, const std::array<std::uint8_t, 3>& color);
  bool operator==(const Image&) const = default;
};

struct RenderConfig {
  int width = 200;
  int height = 200;
  int margin = 12;
};

/// Maps world x-y (front view) into pixels with one bounding box shared by
/// every frame, so a joint keeps its pixel when it does not move.
class Projection {
 public:
  Projection(const Mat& positions, const RenderConfig& config);
  std::array<int, 2> operator()(double x, double y) const;

 private:
  double min_x_, min_y_, scale_;
  int margin_, height_;
};

/// Pixel coordinates of every joint in every frame: N rows of (x0, y0, x1, y1, ...).
std::vector<std::vector<std::array<int, 2>>> project_motion(const Skeleton& skeleton, const Mat& frames,
                                                           const RenderConfig& config = {});

std::vector<Image> render_motion(const Skeleton& skeleton, const Mat& frames, const RenderConfig& config = {});

void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// Writes frame_000000.ppm, frame_000001.ppm, ... and returns the paths in order.
std::vector<std::filesystem::path> render_to_dir(const Skeleton& skeleton, const Mat& frames,
                                                 const std::filesystem::path& dir, const RenderConfig& config = {});

}  // namespace mmdm
