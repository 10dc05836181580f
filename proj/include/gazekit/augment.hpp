#pragma once

// Gaze-preserving photometric augmentations. Nothing here moves, flips or
// rotates pixels, so eye shape and gaze labels stay valid.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "gazekit/error.hpp"
#include "gazekit/image.hpp"
#include "gazekit/rng.hpp"

namespace gazekit {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double draw(Rng& rng) const { return lo == hi ? lo : uniform(rng, lo, hi); }
  friend bool operator==(const Range&, const Range&) = default;
};

struct AugmentSpec {
  Range noise_sigma{0.0, 10.0};  // gray levels out of 255
  Range blur_sigma{0.0, 2.0};    // pixels, 3x3 kernel
  Range cutout_size{0.0, 10.0};  // pixels per side
  Range downscale{1.0, 2.0};     // factor
  Range line_count{0.0, 2.0};    // integer-valued
  bool contrast_enabled = true;
  Range contrast_alpha{0.5, 1.5};
  double apply_probability = 0.5;  // per transform
  std::uint64_t seed = 0;

  /// Every range collapsed onto its identity value.
  static AugmentSpec identity() {
    AugmentSpec s;
    s.noise_sigma = {0, 0};
    s.blur_sigma = {0, 0};
    s.cutout_size = {0, 0};
    s.downscale = {1, 1};
    s.line_count = {0, 0};
    s.contrast_enabled = false;
    return s;
  }

  friend bool operator==(const AugmentSpec&, const AugmentSpec&) = default;
};

inline void validate(const AugmentSpec& s) {
  auto check = [](const Range& r, double lo, double hi, const char* name) {
    if (!(r.lo >= lo && r.hi <= hi && r.lo <= r.hi)) {
      throw InvalidArgument(std::string("augment range '") + name + "' outside [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
    }
  };
  check(s.noise_sigma, 0, 10, "noise_sigma");
  check(s.blur_sigma, 0, 2, "blur_sigma");
  check(s.cutout_size, 0, 10, "cutout_size");
  check(s.downscale, 1, 2, "downscale");
  check(s.line_count, 0, 2, "line_count");
  check(s.contrast_alpha, 0.5, 1.5, "contrast_alpha");
  if (!(s.apply_probability >= 0.0 && s.apply_probability <= 1.0)) throw InvalidArgument("apply_probability must be in [0, 1]");
}

inline void to_json(nlohmann::json& j, const Range& r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json& j, Range& r) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("range must be a [lo, hi] pair");
  r = {j[0].get<double>(), j[1].get<double>()};
}

inline void to_json(nlohmann::json& j, const AugmentSpec& s) {
  j = {{"noise_sigma", s.noise_sigma},       {"blur_sigma", s.blur_sigma},
       {"cutout_size", s.cutout_size},       {"downscale", s.downscale},
       {"line_count", s.line_count},         {"contrast_enabled", s.contrast_enabled},
       {"contrast_alpha", s.contrast_alpha}, {"apply_probability", s.apply_probability},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, AugmentSpec& s) {
  AugmentSpec d;
  d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  d.blur_sigma = j.value("blur_sigma", d.blur_sigma);
  d.cutout_size = j.value("cutout_size", d.cutout_size);
  d.downscale = j.value("downscale", d.downscale);
  d.line_count = j.value("line_count", d.line_count);
  d.contrast_enabled = j.value("contrast_enabled", d.contrast_enabled);
  d.contrast_alpha = j.value("contrast_alpha", d.contrast_alpha);
  d.apply_probability = j.value("apply_probability", d.apply_probability);
  d.seed = j.value("seed", d.seed);
  validate(d);
  s = d;
}

namespace augment {

inline Image clamp01(Image img) {
  for (auto& v : img.pixels()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

/// Additive Gaussian noise; sigma in gray levels (0..10 of 255).
inline Image gaussian_noise(const Image& img, double sigma, Rng& rng) {
  if (!(sigma >= 0.0 && sigma <= 10.0)) throw InvalidArgument("noise sigma must be in [0, 10]");
  if (sigma == 0.0) return img;
  Image out = img;
  const double s = sigma / 255.0;
  for (auto& v : out.pixels()) v = static_cast<float>(v + s * normal(rng));
  return clamp01(std::move(out));
}

/// Normalized 3x3 Gaussian kernel, row-major.
inline std::array<double, 9> blur_kernel(double sigma) {
  std::array<double, 9> k{};
  if (sigma == 0.0) {
    k[4] = 1.0;
    return k;
  }
  double sum = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[(dy + 1) * 3 + dx + 1] = w;
      sum += w;
    }
  }
  for (auto& w : k) w /= sum;
  return k;
}

inline Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma >= 0.0 && sigma <= 2.0)) throw InvalidArgument("blur sigma must be in [0, 2]");
  if (sigma == 0.0) return img;
  const auto k = blur_kernel(sigma);
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) acc += k[(dy + 1) * 3 + dx + 1] * img.clamped(y + dy, x + dx);
      }
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  return clamp01(std::move(out));
}

/// Zeroes one h x w rectangle placed uniformly inside the image.
inline Image cutout(const Image& img, int h, int w, Rng& rng) {
  if (h < 0 || h > 10 || w < 0 || w > 10) throw InvalidArgument("cutout sides must be in [0, 10]");
  if (h == 0 || w == 0) return img;
  h = std::min(h, img.height());
  w = std::min(w, img.width());
  Image out = img;
  const auto y0 = static_cast<int>(uniform_int(rng, 0, img.height() - h));
  const auto x0 = static_cast<int>(uniform_int(rng, 0, img.width() - w));
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) out.at(y, x) = 0.0f;
  }
  return out;
}

/// Bilinear resize to (H/f, W/f), then back to (H, W).
inline Image downscale(const Image& img, double factor) {
  if (!(factor >= 1.0 && factor <= 2.0)) throw InvalidArgument("downscale factor must be in [1, 2]");
  const int mh = std::max(1, static_cast<int>(std::lround(img.height() / factor)));
  const int mw = std::max(1, static_cast<int>(std::lround(img.width() / factor)));
  if (mh == img.height() && mw == img.width()) return img;
  return clamp01(resize_bilinear(resize_bilinear(img, mh, mw), img.height(), img.width()));
}

/// Draws n 1-px lines with random endpoints and a random gray level.
inline Image random_lines(const Image& img, int n, Rng& rng) {
  if (n < 0 || n > 2) throw InvalidArgument("line count must be in [0, 2]");
  if (n == 0) return img;
  Image out = img;
  for (int i = 0; i < n; ++i) {
    int x0 = static_cast<int>(uniform(rng, 0, img.width()));
    int y0 = static_cast<int>(uniform(rng, 0, img.height()));
    const int x1 = static_cast<int>(uniform(rng, 0, img.width()));
    const int y1 = static_cast<int>(uniform(rng, 0, img.height()));
    const auto gray = static_cast<float>(uniform01(rng));
    // Bresenham
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      out.at(y0, x0) = gray;
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
  return out;
}

/// x -> clamp(alpha * (x - mean) + mean).
inline Image contrast(const Image& img, double alpha) {
  if (!(alpha >= 0.5 && alpha <= 1.5)) throw InvalidArgument("contrast alpha must be in [0.5, 1.5]");
  if (alpha == 1.0 || img.empty()) return img;
  const double mean = std::accumulate(img.pixels().begin(), img.pixels().end(), 0.0) / static_cast<double>(img.size());
  Image out = img;
  for (auto& v : out.pixels()) v = static_cast<float>(alpha * (v - mean) + mean);
  return clamp01(std::move(out));
}

inline Image contrast(const Image& img, Rng& rng) { return contrast(img, uniform(rng, 0.5, 1.5)); }

}  // namespace augment

/// Applies each transform independently with probability
/// `spec.apply_probability`, parameters drawn uniformly from the spec ranges.
/// Order: noise, blur, cutout, downscale, lines, contrast.
inline Image apply_random(const Image& image, const AugmentSpec& spec, Rng& rng) {
  validate(spec);
  Image out = image;
  const double p = spec.apply_probability;
  if (bernoulli(rng, p)) out = augment::gaussian_noise(out, spec.noise_sigma.draw(rng), rng);
  if (bernoulli(rng, p)) out = augment::gaussian_blur(out, spec.blur_sigma.draw(rng));
  if (bernoulli(rng, p)) {
    const auto h = static_cast<int>(std::lround(spec.cutout_size.draw(rng)));
    const auto w = static_cast<int>(std::lround(spec.cutout_size.draw(rng)));
    out = augment::cutout(out, h, w, rng);
  }
  if (bernoulli(rng, p)) out = augment::downscale(out, spec.downscale.draw(rng));
  if (bernoulli(rng, p)) {
    const auto n = static_cast<int>(uniform_int(rng, static_cast<std::int64_t>(std::ceil(spec.line_count.lo)),
                                                static_cast<std::int64_t>(std::floor(spec.line_count.hi))));
    out = augment::random_lines(out, n, rng);
  }
  if (spec.contrast_enabled && bernoulli(rng, p)) out = augment::contrast(out, spec.contrast_alpha.draw(rng));
  return out;
}

}  // namespace gazekit
