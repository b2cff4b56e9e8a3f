#include "mcd/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <zlib.h>

#include "mcd/decomposer.hpp"
#include "mcd/error.hpp"

namespace mcd {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

Rgb mix(Rgb a, Rgb b, double t) {
  t = std::clamp(t, 0.0, 1.0);
  Rgb c;
  for (int i = 0; i < 3; ++i) c[i] = static_cast<std::uint8_t>(std::lround(a[i] + (b[i] - a[i]) * t));
  return c;
}

Rgb ramp(const std::vector<Rgb>& stops, double t) {
  t = std::clamp(t, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  return mix(stops[i], stops[i + 1], t - static_cast<double>(i));
}

// Upsampled copy with `cell` output pixels per map entry.
Eigen::MatrixXd enlarge(const Eigen::MatrixXd& map, int cell) {
  return upsample(map, map.rows() * cell, map.cols() * cell);
}

void line(Image& img, double x0, double y0, double x1, double y1, Rgb color) {
  const int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    img.set(static_cast<int>(std::lround(x0 + (x1 - x0) * t)), static_cast<int>(std::lround(y0 + (y1 - y0) * t)), color);
  }
}

}  // namespace

Image::Image(int w, int h, Rgb fill) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < rgb.size(); i += 3) std::copy(fill.begin(), fill.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
}

void Image::set(int x, int y, Rgb color) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const auto at = (static_cast<std::size_t>(y) * width + x) * 3;
  std::copy(color.begin(), color.end(), rgb.begin() + static_cast<std::ptrdiff_t>(at));
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (img.width * 3 + 1));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    const auto row = img.rgb.begin() + static_cast<std::ptrdiff_t>(y) * img.width * 3;
    raw.insert(raw.end(), row, row + img.width * 3);
  }
  uLongf size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(size);
  if (compress2(packed.data(), &size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw Error(ErrorCode::IoError, "png compression failed");
  packed.resize(size);

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> header;
  put_u32(header, static_cast<std::uint32_t>(img.width));
  put_u32(header, static_cast<std::uint32_t>(img.height));
  header.insert(header.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  chunk(out, "IHDR", header);
  chunk(out, "IDAT", packed);
  chunk(out, "IEND", {});
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

Image render_relevance(const Eigen::MatrixXd& map, int cell, double limit) {
  if (limit <= 0.0) limit = map.cwiseAbs().maxCoeff();
  if (limit <= 0.0) limit = 1.0;
  const Eigen::MatrixXd big = enlarge(map, cell);
  const Rgb blue{33, 102, 172}, white{247, 247, 247}, red{178, 24, 43};
  Image img(static_cast<int>(big.cols()), static_cast<int>(big.rows()));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = big(y, x) / limit;
      img.set(x, y, v >= 0 ? mix(white, red, v) : mix(white, blue, -v));
    }
  return img;
}

Image render_activation(const Eigen::MatrixXd& map, int cell, std::vector<double> contours) {
  const Eigen::MatrixXd big = enlarge(map, cell);
  const std::vector<Rgb> stops{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  Image img(static_cast<int>(big.cols()), static_cast<int>(big.rows()));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) img.set(x, y, ramp(stops, big(y, x)));
  // A pixel is on a contour when it is above the level and a 4-neighbour is not.
  for (const double level : contours) {
    const Rgb color = level >= 0.5 ? Rgb{255, 255, 255} : Rgb{160, 160, 160};
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        if (big(y, x) < level) continue;
        const bool edge = (x > 0 && big(y, x - 1) < level) || (x + 1 < img.width && big(y, x + 1) < level) ||
                          (y > 0 && big(y - 1, x) < level) || (y + 1 < img.height && big(y + 1, x) < level);
        if (edge) img.set(x, y, color);
      }
  }
  return img;
}

Image render_lines(const std::vector<Series>& series, int width, int height) {
  Image img(width, height);
  const int left = 40, right = 12, top = 12, bottom = 28;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& s : series)
    for (const double v : s.y) {
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  if (!any || hi - lo <= 0.0) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const auto px = [&](double x) { return left + x * (width - left - right); };
  const auto py = [&](double y) { return top + (hi - y) / (hi - lo) * (height - top - bottom); };
  const Rgb axis{90, 90, 90}, grid{225, 225, 225};
  for (int i = 0; i <= 4; ++i) {
    line(img, px(i / 4.0), top, px(i / 4.0), height - bottom, grid);
    const double y = lo + (hi - lo) * i / 4.0;
    line(img, left, py(y), width - right, py(y), grid);
  }
  if (lo < 0.0 && hi > 0.0) line(img, left, py(0.0), width - right, py(0.0), axis);
  line(img, left, top, left, height - bottom, axis);
  line(img, left, height - bottom, width - right, height - bottom, axis);
  for (const auto& s : series)
    for (std::size_t i = 1; i < s.x.size() && i < s.y.size(); ++i)
      line(img, px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), s.color);
  return img;
}

}  // namespace mcd
