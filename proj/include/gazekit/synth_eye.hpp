#pragma once

// Procedural synthetic eye renderer.
//
// Scenes are layered 2D primitives: a textured skin background, an
// elliptical eyelid opening (polygon landmarks), a sclera, an iris disk
// displaced by the gaze, and a pupil. Masks are rasterized from the
// landmarks, never from the rendered pixels.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gazekit/error.hpp"
#include "gazekit/geometry.hpp"
#include "gazekit/image.hpp"
#include "gazekit/manifest.hpp"
#include "gazekit/png_io.hpp"
#include "gazekit/rng.hpp"

namespace gazekit {

inline constexpr double kMaxPitchDeg = 25.0;
inline constexpr double kMaxYawDeg = 35.0;
inline constexpr int kFullSyntheticCount = 60000;
inline constexpr int kEyelidPoints = 32;

struct EyeSceneParams {
  GazeAngles gaze;
  double eyelid_aperture = 1.0;
  double eyeball_radius_px = 15.0;
  double iris_radius_px = 7.0;
  double pupil_radius_px = 3.0;
  double sclera_shade = 0.85;
  double iris_shade = 0.3;
  double skin_shade = 0.5;
  std::uint64_t noise_seed = 0;

  friend bool operator==(const EyeSceneParams&, const EyeSceneParams&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct LandmarkSet {
  std::vector<Point> eyelid_polygon;  // closed; last point connects to first
  Point iris_center;
  double iris_radius = 0.0;
};

struct MaskPair {
  Image eyeball;  // {0, 1}
  Image iris;     // {0, 1}, subset of eyeball
};

struct RenderedEye {
  Image image;
  LandmarkSet landmarks;
};

struct MaskResult {
  MaskPair masks;
  bool degenerate = false;  // zero-area eyelid polygon; masks are empty
};

inline void validate(const EyeSceneParams& p) {
  validate(p.gaze);
  auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!finite_pos(p.pupil_radius_px) || !finite_pos(p.iris_radius_px) || !finite_pos(p.eyeball_radius_px)) {
    throw InvalidArgument("radii must be positive and finite");
  }
  if (!(p.pupil_radius_px < p.iris_radius_px && p.iris_radius_px < p.eyeball_radius_px)) {
    throw InvalidArgument("require pupil_radius < iris_radius < eyeball_radius");
  }
  if (!(p.eyelid_aperture > 0.0 && p.eyelid_aperture <= 1.0)) throw InvalidArgument("eyelid_aperture must be in (0, 1]");
  for (double s : {p.sclera_shade, p.iris_shade, p.skin_shade}) {
    if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument("shades must be in [0, 1]");
  }
  if (std::abs(p.gaze.pitch) > deg_to_rad(kMaxPitchDeg) + 1e-12 ||
      std::abs(p.gaze.yaw) > deg_to_rad(kMaxYawDeg) + 1e-12) {
    throw InvalidArgument("gaze outside the synthetic sampling range");
  }
}

/// Deterministic scene draw. Gaze is uniform over +-25 deg pitch, +-35 deg yaw.
inline EyeSceneParams sample_scene(std::uint64_t rng_seed) {
  Rng rng(derive_seed(rng_seed, "scene"));
  EyeSceneParams p;
  p.gaze.pitch = deg_to_rad(uniform(rng, -kMaxPitchDeg, kMaxPitchDeg));
  p.gaze.yaw = deg_to_rad(uniform(rng, -kMaxYawDeg, kMaxYawDeg));
  p.eyelid_aperture = uniform(rng, 0.6, 1.0);
  p.eyeball_radius_px = uniform(rng, 14.0, 17.0);
  p.iris_radius_px = p.eyeball_radius_px * uniform(rng, 0.40, 0.50);
  p.pupil_radius_px = p.iris_radius_px * uniform(rng, 0.35, 0.50);
  p.sclera_shade = uniform(rng, 0.75, 0.95);
  p.iris_shade = uniform(rng, 0.12, 0.40);
  p.skin_shade = uniform(rng, 0.40, 0.62);
  p.noise_seed = rng();
  return p;
}

/// Iris center offset from the eyeball center, image y pointing down.
inline Point iris_offset(const GazeAngles& g, double eyeball_radius) {
  return {eyeball_radius * std::sin(g.yaw) * std::cos(g.pitch), -eyeball_radius * std::sin(g.pitch)};
}

inline double polygon_area(const std::vector<Point>& poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

namespace detail {

inline bool on_segment(Point p, Point a, Point b) {
  const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  if (std::abs(cross) > 1e-12 * std::max(1.0, len)) return false;
  return p.x >= std::min(a.x, b.x) - 1e-12 && p.x <= std::max(a.x, b.x) + 1e-12 &&
         p.y >= std::min(a.y, b.y) - 1e-12 && p.y <= std::max(a.y, b.y) + 1e-12;
}

inline double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

// Smooth value noise on a coarse lattice, bilinearly interpolated with a
// smoothstep fade.
inline double value_noise(std::uint64_t seed, double x, double y) {
  auto lattice = [seed](std::int64_t ix, std::int64_t iy) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B1ull +
                                                         static_cast<std::uint64_t>(iy)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  };
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  auto fade = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double tx = fade(x - fx), ty = fade(y - fy);
  const double a = lattice(ix, iy) * (1 - tx) + lattice(ix + 1, iy) * tx;
  const double b = lattice(ix, iy + 1) * (1 - tx) + lattice(ix + 1, iy + 1) * tx;
  return a * (1 - ty) + b * ty;
}

}  // namespace detail

/// Point-in-polygon (crossing number); points on the boundary count as inside.
inline bool inside_polygon(Point p, const std::vector<Point>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (detail::on_segment(p, poly[i], poly[(i + 1) % n])) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

inline bool inside_disk(Point p, Point c, double r) {
  const double dx = p.x - c.x, dy = p.y - c.y;
  return dx * dx + dy * dy <= r * r;
}

/// Eyelid opening as a closed polygon: an ellipse with horizontal semi-axis
/// equal to the eyeball radius and vertical semi-axis aperture * radius.
inline std::vector<Point> eyelid_polygon(Point center, double eyeball_radius, double aperture) {
  std::vector<Point> poly;
  poly.reserve(kEyelidPoints);
  for (int k = 0; k < kEyelidPoints; ++k) {
    const double t = kPi - 2.0 * kPi * k / kEyelidPoints;
    poly.push_back({center.x + eyeball_radius * std::cos(t), center.y - aperture * eyeball_radius * std::sin(t)});
  }
  return poly;
}

/// Rasterizes landmarks: a pixel belongs to a region iff its center is inside.
inline MaskResult landmarks_to_masks(const LandmarkSet& l, int h, int w) {
  if (h <= 0 || w <= 0) throw InvalidArgument("mask shape must be positive");
  for (const auto& p : l.eyelid_polygon) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("non-finite eyelid point");
  }
  if (!std::isfinite(l.iris_radius) || l.iris_radius < 0) throw InvalidArgument("invalid iris radius");
  MaskResult out{{Image(h, w), Image(h, w)}, false};
  if (l.eyelid_polygon.size() < 3 || std::abs(polygon_area(l.eyelid_polygon)) <= 1e-12) {
    out.degenerate = true;
    return out;
  }
  double min_x = l.eyelid_polygon[0].x, max_x = min_x, min_y = l.eyelid_polygon[0].y, max_y = min_y;
  for (const auto& p : l.eyelid_polygon) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int y_lo = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(max_y - 0.5)));
  const int x_lo = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
  const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(max_x - 0.5)));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const Point c{x + 0.5, y + 0.5};
      if (!inside_polygon(c, l.eyelid_polygon)) continue;
      out.masks.eyeball.at(y, x) = 1.0f;
      if (inside_disk(c, l.iris_center, l.iris_radius)) out.masks.iris.at(y, x) = 1.0f;
    }
  }
  return out;
}

inline RenderedEye render_eye(const EyeSceneParams& p, int h, int w) {
  if (h < 16 || w < 16) throw InvalidArgument("render size must be at least 16x16");
  validate(p);
  const Point center{w / 2.0, h / 2.0};
  const Point off = iris_offset(p.gaze, p.eyeball_radius_px);
  RenderedEye out{Image(h, w), {}};
  LandmarkSet& lm = out.landmarks;
  lm.eyelid_polygon = eyelid_polygon(center, p.eyeball_radius_px, p.eyelid_aperture);
  lm.iris_center = {center.x + off.x, center.y + off.y};
  lm.iris_radius = p.iris_radius_px;

  Rng grain(derive_seed(p.noise_seed, "grain"));
  const std::uint64_t tex_seed = derive_seed(p.noise_seed, "texture");
  const Point highlight{lm.iris_center.x - 0.45 * p.pupil_radius_px, lm.iris_center.y - 0.45 * p.pupil_radius_px};
  const auto& poly = lm.eyelid_polygon;
  // Upper lid arc: first half of the polygon (left corner -> right corner).
  const std::size_t upper_end = poly.size() / 2;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point c{x + 0.5, y + 0.5};
      double v;
      if (inside_polygon(c, poly)) {
        const double rr = std::hypot(c.x - center.x, c.y - center.y) / p.eyeball_radius_px;
        v = p.sclera_shade * (1.0 - 0.18 * rr * rr);
        const double di = std::hypot(c.x - lm.iris_center.x, c.y - lm.iris_center.y);
        if (di <= p.iris_radius_px) {
          const double ang = std::atan2(c.y - lm.iris_center.y, c.x - lm.iris_center.x);
          const double streak = detail::value_noise(tex_seed, 6.0 * (ang + kPi), di * 0.5) - 0.5;
          const double limbus = di > 0.85 * p.iris_radius_px ? 0.7 : 1.0;
          v = p.iris_shade * limbus * (1.0 + 0.35 * streak);
          if (di <= p.pupil_radius_px) v = 0.04;
        }
        if (inside_disk(c, highlight, 0.9)) v = 0.95;
      } else {
        v = p.skin_shade * (0.9 + 0.2 * detail::value_noise(tex_seed, c.x / 6.0, c.y / 6.0));
        double lash = 1e9;
        for (std::size_t i = 0; i < upper_end; ++i) lash = std::min(lash, detail::segment_distance(c, poly[i], poly[i + 1]));
        if (lash < 1.6) v *= 0.45;
      }
      v += 0.01 * normal(grain);
      out.image.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

/// Inverts the iris placement: recovers gaze from the iris center offset.
inline GazeAngles gaze_from_iris_offset(Point offset, double eyeball_radius) {
  const double s = std::clamp(-offset.y / eyeball_radius, -1.0, 1.0);
  const double pitch = std::asin(s);
  const double yaw = std::asin(std::clamp(offset.x / (eyeball_radius * std::cos(pitch)), -1.0, 1.0));
  return {pitch, yaw};
}

struct SynthOptions {
  int count = kFullSyntheticCount;
  std::uint64_t seed = 0;
  int height = kEyeHeight;
  int width = kEyeWidth;
  int subjects = 5;
};

/// Per-subject appearance: radii and shades are shared within a subject,
/// gaze, aperture and noise vary per sample.
inline EyeSceneParams sample_subject_scene(std::uint64_t seed, int subject, std::uint64_t index) {
  EyeSceneParams p = sample_scene(derive_seed(seed, "sample", index));
  const EyeSceneParams look = sample_scene(derive_seed(seed, "subject", static_cast<std::uint64_t>(subject)));
  p.eyeball_radius_px = look.eyeball_radius_px;
  p.iris_radius_px = look.iris_radius_px;
  p.pupil_radius_px = look.pupil_radius_px;
  p.sclera_shade = look.sclera_shade;
  p.iris_shade = look.iris_shade;
  p.skin_shade = look.skin_shade;
  return p;
}

inline std::string subject_name(int subject) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%02d", subject);
  return buf;
}

/// Renders `count` samples to `out_dir` and writes `out_dir/manifest.jsonl`.
/// Subject ids are assigned round-robin (`index % subjects`).
inline fs::path generate_dataset(const SynthOptions& opt, const fs::path& out_dir) {
  if (opt.count < 0) throw InvalidArgument("count must be non-negative");
  if (opt.subjects < 1) throw InvalidArgument("need at least one subject");
  if (opt.height < 16 || opt.width < 16) throw InvalidArgument("render size must be at least 16x16");
  std::vector<ManifestRecord> records;
  records.reserve(static_cast<std::size_t>(opt.count));
  int written = 0;
  try {
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");
    for (int i = 0; i < opt.count; ++i) {
      const int subject = i % opt.subjects;
      const EyeSceneParams p = sample_subject_scene(opt.seed, subject, static_cast<std::uint64_t>(i));
      const RenderedEye eye = render_eye(p, opt.height, opt.width);
      const MaskResult masks = landmarks_to_masks(eye.landmarks, opt.height, opt.width);
      char id[16];
      std::snprintf(id, sizeof id, "%06d", i);
      ManifestRecord r;
      r.id = id;
      r.image = "images/" + r.id + ".png";
      r.eyeball_mask = "masks/" + r.id + "_eyeball.png";
      r.iris_mask = "masks/" + r.id + "_iris.png";
      r.gaze = p.gaze;
      r.subject_id = subject_name(subject);
      png::write(out_dir / r.image, eye.image);
      png::write(out_dir / *r.eyeball_mask, masks.masks.eyeball);
      png::write(out_dir / *r.iris_mask, masks.masks.iris);
      records.push_back(std::move(r));
      ++written;
    }
    write_manifest(out_dir / "manifest.jsonl", records);
  } catch (const std::exception& e) {
    throw DataError(std::string("dataset generation aborted after ") + std::to_string(written) + " of " +
                    std::to_string(opt.count) + " samples in " + out_dir.string() + ": " + e.what());
  }
  return out_dir / "manifest.jsonl";
}

}  // namespace gazekit
