#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace mcd {

/// 8-bit RGB raster, row-major from the top-left corner.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::array<std::uint8_t, 3> fill = {255, 255, 255});
  void set(int x, int y, std::array<std::uint8_t, 3> color);
};

std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

/// Blue-white-red map symmetric about zero, scaled by `limit` (max |value| if <= 0).
Image render_relevance(const Eigen::MatrixXd& map, int cell = 16, double limit = 0.0);

/// Sequential map of values in [0, 1] with contour lines at the given levels
/// (white at 0.5, grey at 0.4 by default).
Image render_activation(const Eigen::MatrixXd& map, int cell = 16, std::vector<double> contours = {0.4, 0.5});

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

/// Polyline chart of the series on a shared axis box with x in [0, 1].
Image render_lines(const std::vector<Series>& series, int width = 480, int height = 320);

}  // namespace mcd
