#pragma once

// Independent reference computations used only by tests. None of these call
// into the library code paths they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct Vec3 {
  long double x, y, z;
};

// Gaze direction with long double trig.
inline Vec3 gaze_vector(double pitch, double yaw) {
  const long double p = pitch, y = yaw;
  return {-cosl(p) * sinl(y), -sinl(p), -cosl(p) * cosl(y)};
}

inline double angle_deg_acos(double p1, double y1, double p2, double y2) {
  const Vec3 a = gaze_vector(p1, y1), b = gaze_vector(p2, y2);
  long double d = a.x * b.x + a.y * b.y + a.z * b.z;
  d = std::clamp(d, -1.0L, 1.0L);
  return static_cast<double>(acosl(d) * 180.0L / 3.141592653589793238462643383279502884L);
}

// Winding-number point-in-polygon with an explicit boundary test.
struct P {
  double x, y;
};

inline bool on_edge(P p, P a, P b) {
  const long double cross = static_cast<long double>(b.x - a.x) * (p.y - a.y) - static_cast<long double>(b.y - a.y) * (p.x - a.x);
  if (fabsl(cross) > 1e-9L) return false;
  const long double dot = static_cast<long double>(p.x - a.x) * (b.x - a.x) + static_cast<long double>(p.y - a.y) * (b.y - a.y);
  const long double len2 = static_cast<long double>(b.x - a.x) * (b.x - a.x) + static_cast<long double>(b.y - a.y) * (b.y - a.y);
  return dot >= -1e-9L && dot <= len2 + 1e-9L;
}

inline bool in_polygon(P p, const std::vector<P>& poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (on_edge(p, poly[i], poly[(i + 1) % n])) return true;
  }
  int winding = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const P a = poly[i], b = poly[(i + 1) % n];
    const long double side = static_cast<long double>(b.x - a.x) * (p.y - a.y) - static_cast<long double>(p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++winding;
    } else {
      if (b.y <= p.y && side < 0) --winding;
    }
  }
  return winding != 0;
}

inline bool in_disk(P p, P c, double r) {
  const long double dx = p.x - c.x, dy = p.y - c.y;
  return dx * dx + dy * dy <= static_cast<long double>(r) * r;
}

// Bilinear resampling written as a separable tent-filter sum over every
// source pixel, with the source coordinate clamped to the valid range.
inline std::vector<double> tent_resize(const std::vector<double>& src, int h, int w, int oh, int ow) {
  auto weights = [](int in, int out, int o) {
    std::vector<double> wts(in, 0.0);
    double s = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    for (int i = 0; i < in; ++i) wts[i] = std::max(0.0, 1.0 - std::abs(s - i));
    return wts;
  };
  std::vector<double> dst(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    const auto wy = weights(h, oh, y);
    for (int x = 0; x < ow; ++x) {
      const auto wx = weights(w, ow, x);
      double acc = 0.0;
      for (int sy = 0; sy < h; ++sy) {
        if (wy[sy] == 0.0) continue;
        for (int sx = 0; sx < w; ++sx) acc += wy[sy] * wx[sx] * src[static_cast<std::size_t>(sy) * w + sx];
      }
      dst[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return dst;
}

// Histogram equalization output level for gray level v, from the textbook
// CDF definition: round(255 * (cdf(v) - cdf_min) / (N - cdf_min)).
inline int equalized_level(const std::vector<int>& levels, int v) {
  long n = static_cast<long>(levels.size());
  long cdf_v = 0, cdf_min = n;
  for (int l : levels) {
    if (l <= v) ++cdf_v;
  }
  for (int u = 0; u < 256; ++u) {
    long c = 0;
    for (int l : levels) {
      if (l <= u) ++c;
    }
    if (c > 0) {
      cdf_min = c;
      break;
    }
  }
  if (n == cdf_min) return v;
  return static_cast<int>(std::lround(255.0 * static_cast<double>(cdf_v - cdf_min) / static_cast<double>(n - cdf_min)));
}

// NT-Xent by explicit double loops over anchors and candidates.
// z holds 2N row vectors (row-major, dim d); row i pairs with row (i + N) mod 2N.
inline double nt_xent(const std::vector<double>& z, int two_n, int d, double tau) {
  auto cosine = [&](int a, int b) {
    double dot = 0, na = 0, nb = 0;
    for (int k = 0; k < d; ++k) {
      dot += z[a * d + k] * z[b * d + k];
      na += z[a * d + k] * z[a * d + k];
      nb += z[b * d + k] * z[b * d + k];
    }
    return dot / std::sqrt(na * nb);
  };
  const int n = two_n / 2;
  double total = 0.0;
  for (int i = 0; i < two_n; ++i) {
    const int j = (i + n) % two_n;
    double denom = 0.0;
    for (int k = 0; k < two_n; ++k) {
      if (k == i) continue;
      denom += std::exp(cosine(i, k) / tau);
    }
    total += -std::log(std::exp(cosine(i, j) / tau) / denom);
  }
  return total / two_n;
}

}  // namespace oracle
