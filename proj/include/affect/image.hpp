#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace affect {

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// 8-bit RGB image, row-major, interleaved channels.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool empty() const { return width <= 0 || height <= 0; }
};

/// Throws LoadError when the file is missing or cannot be decoded.
RgbImage read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

Rect clamp_rect(const Rect& r, int width, int height);
/// Copies the pixels inside `r` (clamped to the image).
RgbImage crop(const RgbImage& image, const Rect& r);
/// Bilinear resampling with half-pixel centers.
RgbImage resize_bilinear(const RgbImage& image, int width, int height);

}  // namespace affect
