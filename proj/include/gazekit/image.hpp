#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gazekit/error.hpp"

namespace gazekit {

inline constexpr int kEyeHeight = 36;
inline constexpr int kEyeWidth = 60;

/// Single-channel row-major image with float pixels, nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, float fill = 0.0f)
      : height_(height), width_(width), data_(checked_size(height, width), fill) {}
  Image(int height, int width, std::vector<float> data) : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != checked_size(height, width)) throw InvalidArgument("image buffer size mismatch");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  /// Edge-replicating access.
  float clamped(int y, int x) const {
    return at(std::clamp(y, 0, height_ - 1), std::clamp(x, 0, width_ - 1));
  }

  std::span<float> pixels() { return data_; }
  std::span<const float> pixels() const { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool same_shape(const Image& o) const { return height_ == o.height_ && width_ == o.width_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static std::size_t checked_size(int h, int w) {
    if (h < 0 || w < 0) throw InvalidArgument("negative image dimension");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Interleaved 8-bit image with 1, 3 or 4 channels, as decoded from disk.
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
};

inline std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::clamp(static_cast<int>(v * 255.0f + 0.5f), 0, 255));
}

inline RawImage to_raw(const Image& img) {
  RawImage r{img.height(), img.width(), 1, std::vector<std::uint8_t>(img.size())};
  std::transform(img.pixels().begin(), img.pixels().end(), r.data.begin(), to_u8);
  return r;
}

/// Bilinear resize with half-pixel centers and edge clamping.
inline Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (src.empty()) throw InvalidArgument("resize of empty image");
  if (out_h <= 0 || out_w <= 0) throw InvalidArgument("resize to empty shape");
  Image dst(out_h, out_w);
  const double sy = static_cast<double>(src.height()) / out_h;
  const double sx = static_cast<double>(src.width()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      const double top = src.at(y0, x0) * (1 - wx) + src.at(y0, x1) * wx;
      const double bot = src.at(y1, x0) * (1 - wx) + src.at(y1, x1) * wx;
      dst.at(y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return dst;
}

}  // namespace gazekit
