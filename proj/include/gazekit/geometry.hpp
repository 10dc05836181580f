#pragma once

// Gaze representations and the angular error metric.
//
// Convention: the camera looks along +z toward the subject, so a gaze of
// (pitch, yaw) = (0, 0) points back into the camera along -z. Positive pitch
// looks up (-y), positive yaw turns toward -x.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gazekit/error.hpp"

namespace gazekit {

inline constexpr double kPi = std::numbers::pi;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Pitch (vertical) and yaw (horizontal) gaze angles, in radians.
struct GazeAngles {
  double pitch = 0.0;
  double yaw = 0.0;

  friend bool operator==(const GazeAngles&, const GazeAngles&) = default;
};

/// Unit 3D gaze direction.
struct GazeVector {
  double x = 0.0;
  double y = 0.0;
  double z = -1.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double dot(const GazeVector& o) const { return x * o.x + y * o.y + z * o.z; }
};

inline void validate(const GazeAngles& a) {
  if (!std::isfinite(a.pitch) || !std::isfinite(a.yaw)) {
    throw InvalidArgument("gaze angles must be finite");
  }
  if (a.pitch < -kPi / 2 || a.pitch > kPi / 2) {
    throw InvalidArgument("pitch out of [-pi/2, pi/2]: " + std::to_string(a.pitch));
  }
  if (a.yaw <= -kPi || a.yaw > kPi) {
    throw InvalidArgument("yaw out of (-pi, pi]: " + std::to_string(a.yaw));
  }
}

inline GazeVector angles_to_vector(const GazeAngles& a) {
  validate(a);
  const double cp = std::cos(a.pitch);
  return {-cp * std::sin(a.yaw), -std::sin(a.pitch), -cp * std::cos(a.yaw)};
}

inline GazeAngles vector_to_angles(const GazeVector& v) {
  if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
    throw InvalidArgument("gaze vector must be finite");
  }
  const double n = v.norm();
  if (n == 0.0) throw InvalidArgument("zero gaze vector");
  if (std::abs(n - 1.0) > 1e-6) throw InvalidArgument("gaze vector is not unit length");
  const double y = std::clamp(v.y / n, -1.0, 1.0);
  GazeAngles out{-std::asin(y), std::atan2(-v.x, -v.z)};
  // atan2 returns [-pi, pi]; fold -pi onto pi to keep yaw in (-pi, pi].
  if (out.yaw <= -kPi) out.yaw = kPi;
  return out;
}

/// Angle between two gaze directions, in degrees, in [0, 180].
///
/// Equal to acos(clamp(u.v, -1, 1)), evaluated as atan2(|u x v|, u.v) so
/// that nearly parallel directions do not lose precision (acos of a dot
/// product one ulp below 1 is already ~1e-6 degrees).
inline double angular_error_deg(const GazeAngles& a, const GazeAngles& b) {
  const GazeVector u = angles_to_vector(a);
  const GazeVector v = angles_to_vector(b);
  const double cx = u.y * v.z - u.z * v.y;
  const double cy = u.z * v.x - u.x * v.z;
  const double cz = u.x * v.y - u.y * v.x;
  const double deg = rad_to_deg(std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), u.dot(v)));
  return std::clamp(deg, 0.0, 180.0);
}

}  // namespace gazekit
