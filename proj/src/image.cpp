#include "affect/image.hpp"

#include <algorithm>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "affect/error.hpp"

namespace affect {

namespace {

cv::Mat as_mat(const RgbImage& image) {
  return cv::Mat(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
}

RgbImage from_mat(const cv::Mat& rgb) {
  RgbImage out(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return out;
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw LoadError("cannot decode " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw LoadError("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb);
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.empty()) throw InvalidInputError("refusing to write an empty image to " + path.string());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  cv::Mat bgr;
  cv::cvtColor(as_mat(image), bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write " + path.string());
}

Rect clamp_rect(const Rect& r, int width, int height) {
  const int x0 = std::clamp(r.x, 0, width);
  const int y0 = std::clamp(r.y, 0, height);
  const int x1 = std::clamp(r.x + r.w, 0, width);
  const int y1 = std::clamp(r.y + r.h, 0, height);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

RgbImage crop(const RgbImage& image, const Rect& r) {
  const Rect c = clamp_rect(r, image.width, image.height);
  if (c.w == 0 || c.h == 0) throw InvalidInputError("crop rectangle lies outside the image");
  RgbImage out(c.w, c.h);
  for (int y = 0; y < c.h; ++y) {
    const auto* src = &image.pixels[(static_cast<std::size_t>(c.y + y) * image.width + c.x) * 3];
    std::copy_n(src, static_cast<std::size_t>(c.w) * 3, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * c.w * 3);
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& image, int width, int height) {
  if (image.empty()) throw InvalidInputError("cannot resize an empty image");
  cv::Mat dst;
  cv::resize(as_mat(image), dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_mat(dst);
}

}  // namespace affect
