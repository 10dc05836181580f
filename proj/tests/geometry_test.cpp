#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gazekit/geometry.hpp"
#include "gazekit/rng.hpp"
#include "oracles.hpp"

using namespace gazekit;

namespace {

GazeVector random_unit(Rng& rng) {
  double x, y, z, n;
  do {
    x = normal(rng);
    y = normal(rng);
    z = normal(rng);
    n = std::sqrt(x * x + y * y + z * z);
  } while (n < 1e-6);
  return {x / n, y / n, z / n};
}

GazeAngles random_angles(Rng& rng) {
  return {uniform(rng, -kPi / 2, kPi / 2), uniform(rng, -kPi + 1e-12, kPi)};
}

}  // namespace

TEST(AnglesToVector, AnchorCases) {
  const GazeVector v0 = angles_to_vector({0, 0});
  EXPECT_DOUBLE_EQ(v0.x, 0.0);
  EXPECT_DOUBLE_EQ(v0.y, 0.0);
  EXPECT_DOUBLE_EQ(v0.z, -1.0);

  const GazeVector v1 = angles_to_vector({0, kPi / 2});
  EXPECT_NEAR(v1.x, -1.0, 1e-15);
  EXPECT_NEAR(v1.y, 0.0, 1e-15);
  EXPECT_NEAR(v1.z, 0.0, 1e-15);
}

TEST(AnglesToVector, MatchesLongDoubleTrig) {
  const GazeVector v = angles_to_vector({0.1, 0.2});
  const oracle::Vec3 ref = oracle::gaze_vector(0.1, 0.2);
  EXPECT_NEAR(v.x, static_cast<double>(ref.x), 1e-15);
  EXPECT_NEAR(v.y, static_cast<double>(ref.y), 1e-15);
  EXPECT_NEAR(v.z, static_cast<double>(ref.z), 1e-15);
  EXPECT_NEAR(v.norm(), 1.0, 1e-12);
}

TEST(AnglesToVector, RejectsNonFinite) {
  EXPECT_THROW(angles_to_vector({std::nan(""), 0}), InvalidArgument);
  EXPECT_THROW(angles_to_vector({0, std::numeric_limits<double>::infinity()}), InvalidArgument);
  EXPECT_THROW(angles_to_vector({2.0, 0}), InvalidArgument);
}

TEST(VectorToAngles, AnchorCases) {
  const GazeAngles a0 = vector_to_angles({0, 0, -1});
  EXPECT_DOUBLE_EQ(a0.pitch, 0.0);
  EXPECT_DOUBLE_EQ(a0.yaw, 0.0);
  const GazeAngles a1 = vector_to_angles({-1, 0, 0});
  EXPECT_DOUBLE_EQ(a1.pitch, 0.0);
  EXPECT_DOUBLE_EQ(a1.yaw, kPi / 2);
}

TEST(VectorToAngles, RejectsZeroAndNonUnit) {
  EXPECT_THROW(vector_to_angles({0, 0, 0}), InvalidArgument);
  EXPECT_THROW(vector_to_angles({0, 0, -2}), InvalidArgument);
}

TEST(VectorToAngles, RoundTripProperty) {
  Rng rng(7);
  for (int i = 0; i < 20000; ++i) {
    const GazeVector v = random_unit(rng);
    const GazeVector back = angles_to_vector(vector_to_angles(v));
    ASSERT_LT(std::abs(back.x - v.x), 1e-6);
    ASSERT_LT(std::abs(back.y - v.y), 1e-6);
    ASSERT_LT(std::abs(back.z - v.z), 1e-6);
  }
}

TEST(VectorToAngles, YawStaysInHalfOpenRange) {
  const GazeAngles a = vector_to_angles({0.0, 0.0, 1.0});
  EXPECT_GT(a.yaw, -kPi);
  EXPECT_LE(a.yaw, kPi);
}

TEST(AngularError, AnchorCases) {
  EXPECT_EQ(angular_error_deg({0.3, -0.4}, {0.3, -0.4}), 0.0);
  EXPECT_NEAR(angular_error_deg({0, 0}, {0, kPi / 2}), 90.0, 1e-12);
  EXPECT_NEAR(angular_error_deg({0, 0}, {0.1, 0.2}), oracle::angle_deg_acos(0, 0, 0.1, 0.2), 1e-9);
}

TEST(AngularError, SymmetricAndBoundedProperty) {
  Rng rng(11);
  for (int i = 0; i < 20000; ++i) {
    const GazeAngles a = random_angles(rng), b = random_angles(rng);
    const double e = angular_error_deg(a, b);
    ASSERT_GE(e, 0.0);
    ASSERT_LE(e, 180.0);
    ASSERT_NEAR(e, angular_error_deg(b, a), 1e-9);
    ASSERT_NEAR(angular_error_deg(a, a), 0.0, 1e-9);
    ASSERT_NEAR(e, oracle::angle_deg_acos(a.pitch, a.yaw, b.pitch, b.yaw), 1e-9);
  }
}

TEST(AngularError, AntipodalIsFinite) {
  const double e = angular_error_deg({0, 0}, {0, kPi});
  EXPECT_TRUE(std::isfinite(e));
  EXPECT_NEAR(e, 180.0, 1e-9);
}
