#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "leakscope/error.hpp"

namespace leakscope {

// One 8-bit channel, row-major.
class ImagePlane {
 public:
  ImagePlane() = default;

  ImagePlane(std::size_t width, std::size_t height, std::uint8_t fill = 0)
      : width_(width), height_(height), pixels_(checked_area(width, height), fill) {}

  ImagePlane(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != checked_area(width, height)) {
      throw InvalidArgument("pixel buffer holds " + std::to_string(pixels_.size()) +
                            " samples, expected " + std::to_string(width * height));
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t area() const noexcept { return pixels_.size(); }

  std::uint8_t operator()(std::size_t row, std::size_t col) const {
    return pixels_[row * width_ + col];
  }
  std::uint8_t& operator()(std::size_t row, std::size_t col) {
    return pixels_[row * width_ + col];
  }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  friend bool operator==(const ImagePlane&, const ImagePlane&) = default;

 private:
  static std::size_t checked_area(std::size_t width, std::size_t height) {
    if (width < 1 || height < 1) {
      throw InvalidArgument("image must be at least 1x1, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
    return width * height;
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Decoded raster before validation. Samples are interleaved; 16-bit samples
// are stored big-endian, two bytes each, as they come out of the codecs.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<std::uint8_t> samples;
};

inline void require_8bit(const RawImage& img) {
  if (img.bit_depth != 8) {
    throw FormatError("unsupported bit depth: " + std::to_string(img.bit_depth) +
                      " (only 8 bits per channel)");
  }
  if (img.channels != 1 && img.channels != 3) {
    throw FormatError("unsupported channel count: " + std::to_string(img.channels) +
                      " (expected 1 or 3)");
  }
  if (img.width < 1 || img.height < 1) {
    throw FormatError("image must be at least 1x1");
  }
  if (img.samples.size() != img.width * img.height * static_cast<std::size_t>(img.channels)) {
    throw FormatError("sample buffer does not match image dimensions");
  }
}

inline std::vector<ImagePlane> split_channels(const RawImage& img) {
  require_8bit(img);
  const auto channels = static_cast<std::size_t>(img.channels);
  const std::size_t area = img.width * img.height;
  std::vector<ImagePlane> planes;
  planes.reserve(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<std::uint8_t> px(area);
    for (std::size_t i = 0; i < area; ++i) px[i] = img.samples[i * channels + c];
    planes.emplace_back(img.width, img.height, std::move(px));
  }
  return planes;
}

inline RawImage merge_channels(std::span<const ImagePlane> planes) {
  if (planes.size() != 1 && planes.size() != 3) {
    throw InvalidArgument("expected 1 or 3 planes, got " + std::to_string(planes.size()));
  }
  RawImage out;
  out.width = planes[0].width();
  out.height = planes[0].height();
  out.channels = static_cast<int>(planes.size());
  out.samples.resize(out.width * out.height * planes.size());
  for (std::size_t c = 0; c < planes.size(); ++c) {
    if (planes[c].width() != out.width || planes[c].height() != out.height) {
      throw InvalidArgument("planes differ in size");
    }
    const auto px = planes[c].pixels();
    for (std::size_t i = 0; i < px.size(); ++i) out.samples[i * planes.size() + c] = px[i];
  }
  return out;
}

// round(0.299 R + 0.587 G + 0.114 B) in integer arithmetic; gray passes through.
inline ImagePlane to_grayscale(const RawImage& img) {
  auto planes = split_channels(img);
  if (planes.size() == 1) return std::move(planes[0]);
  ImagePlane gray(img.width, img.height);
  const auto r = planes[0].pixels();
  const auto g = planes[1].pixels();
  const auto b = planes[2].pixels();
  auto out = gray.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const unsigned weighted = 299u * r[i] + 587u * g[i] + 114u * b[i];
    out[i] = static_cast<std::uint8_t>((weighted + 500u) / 1000u);
  }
  return gray;
}

inline ImagePlane crop(const ImagePlane& img, std::size_t row, std::size_t col,
                       std::size_t width, std::size_t height) {
  if (row + height > img.height() || col + width > img.width()) {
    throw InvalidArgument("crop window exceeds image bounds");
  }
  ImagePlane out(width, height);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) out(r, c) = img(row + r, col + c);
  }
  return out;
}

}  // namespace leakscope
