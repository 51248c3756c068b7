#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "freshcast/core/error.hpp"

namespace freshcast {

// 8-bit RGB raster, row-major HWC.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const RgbImage&) const = default;
};

// Model input: size x size x 3 RGB, values in [0, 1]. Backbones apply their
// own mean/std normalization on top of this.
struct PreprocessedImage {
  int size = 0;
  std::vector<float> pixels;
  std::filesystem::path source;

  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * size + x) * 3 + c]; }
};

namespace detail {

inline RgbImage from_bgr_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage img(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + rgb.cols * 3, img.pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return img;
}

inline cv::Mat to_bgr_mat(const RgbImage& img) {
  cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace detail

inline bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

inline RgbImage read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageError("cannot decode image: " + path.string());
  return detail::from_bgr_mat(bgr);
}

inline RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw ImageError("empty image payload");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageError("payload is not a decodable image");
  return detail::from_bgr_mat(bgr);
}

// Format follows the extension. JPEG quality is pinned so re-encoding is reproducible.
inline void write_image(const std::filesystem::path& path, const RgbImage& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::vector<int> params{cv::IMWRITE_JPEG_QUALITY, 95, cv::IMWRITE_PNG_COMPRESSION, 3};
  if (!cv::imwrite(path.string(), detail::to_bgr_mat(img), params))
    throw ImageError("cannot encode image: " + path.string());
}

inline std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", detail::to_bgr_mat(img), out)) throw ImageError("png encode failed");
  return out;
}

// Bilinear resize to size x size, scaled to [0, 1].
inline PreprocessedImage preprocess(const RgbImage& img, int size) {
  if (size <= 0) throw ImageError("preprocess size must be positive");
  if (img.height <= 0 || img.width <= 0) throw ImageError("empty image");
  cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat f32;
  rgb.convertTo(f32, CV_32FC3, 1.0 / 255.0);
  cv::Mat resized;
  if (img.height == size && img.width == size) {
    resized = f32;
  } else {
    cv::resize(f32, resized, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  }
  PreprocessedImage out;
  out.size = size;
  out.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    const float* row = resized.ptr<float>(y);
    for (int i = 0; i < size * 3; ++i) out.pixels[static_cast<std::size_t>(y) * size * 3 + i] = std::clamp(row[i], 0.0f, 1.0f);
  }
  return out;
}

inline PreprocessedImage preprocess(const std::filesystem::path& path, int size) {
  PreprocessedImage out;
  try {
    out = preprocess(read_image(path), size);
  } catch (const ImageError& e) {
    throw ImageError(std::string(e.what()) + " [" + path.string() + "]");
  }
  out.source = path;
  return out;
}

inline RgbImage to_rgb8(const PreprocessedImage& img) {
  RgbImage out(img.size, img.size);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

}  // namespace freshcast
