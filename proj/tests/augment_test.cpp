#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gazekit/augment.hpp"
#include "oracles.hpp"

using namespace gazekit;

namespace {

Image random_image(Rng& rng, int h = 36, int w = 60) {
  Image img(h, w);
  for (auto& v : img.pixels()) v = static_cast<float>(uniform01(rng));
  return img;
}

void expect_valid(const Image& out, const Image& in) {
  ASSERT_TRUE(out.same_shape(in));
  for (float v : out.pixels()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

}  // namespace

TEST(ApplyRandom, IdentitySpecIsBitExactNoOp) {
  Rng img_rng(1);
  AugmentSpec spec = AugmentSpec::identity();
  spec.apply_probability = 1.0;
  for (int t = 0; t < 100; ++t) {
    const Image in = random_image(img_rng);
    Rng rng(t);
    ASSERT_EQ(apply_random(in, spec, rng), in);
  }
}

TEST(ApplyRandom, DeterministicGivenRngState) {
  Rng img_rng(2);
  const Image in = random_image(img_rng);
  AugmentSpec spec;
  Rng a(99), b(99);
  for (int t = 0; t < 20; ++t) ASSERT_EQ(apply_random(in, spec, a), apply_random(in, spec, b));
}

TEST(ApplyRandom, RejectsOutOfRangeSpec) {
  AugmentSpec spec;
  spec.noise_sigma = {0, 12};
  Rng rng(0);
  EXPECT_THROW(apply_random(Image(36, 60), spec, rng), InvalidArgument);
  spec = {};
  spec.downscale = {0.5, 2};
  EXPECT_THROW(validate(spec), InvalidArgument);
}

TEST(ApplyRandom, ShapeAndRangeFuzz) {
  Rng rng(3);
  AugmentSpec spec;
  for (int t = 0; t < 1000; ++t) {
    const Image in = random_image(rng);
    expect_valid(apply_random(in, spec, rng), in);
  }
}

TEST(GaussianNoise, SampleStdMatchesSigma) {
  Image in(100, 100, 0.5f);
  Rng rng(4);
  const Image out = augment::gaussian_noise(in, 10.0, rng);
  double sum = 0, sq = 0;
  for (float v : out.pixels()) {
    sum += v - 0.5;
    sq += (v - 0.5) * (v - 0.5);
  }
  const double n = static_cast<double>(out.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  EXPECT_NEAR(sd, 10.0 / 255.0, 0.1 * 10.0 / 255.0);
}

TEST(ApplyRandom, NoiseOnlyDrawMatchesSigma) {
  AugmentSpec spec = AugmentSpec::identity();
  spec.noise_sigma = {10, 10};
  spec.apply_probability = 1.0;
  Rng rng(5);
  const Image out = apply_random(Image(100, 100, 0.5f), spec, rng);
  double sq = 0;
  for (float v : out.pixels()) sq += (v - 0.5) * (v - 0.5);
  EXPECT_NEAR(std::sqrt(sq / out.size()), 10.0 / 255.0, 0.1 * 10.0 / 255.0);
}

TEST(GaussianBlur, ConstantImageIsFixedPoint) {
  const Image in(36, 60, 0.37f);
  for (double s : {0.3, 1.0, 2.0}) {
    const Image out = augment::gaussian_blur(in, s);
    for (float v : out.pixels()) ASSERT_NEAR(v, 0.37f, 1e-6);
  }
}

TEST(GaussianBlur, KernelIsNormalizedThreeByThree) {
  for (double s : {0.1, 0.5, 1.0, 1.7, 2.0}) {
    const auto k = augment::blur_kernel(s);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-9);
    EXPECT_GT(k[4], k[1]);
    EXPECT_GT(k[1], k[0]);
  }
}

TEST(Cutout, ZeroSizeIsIdentity) {
  Rng rng(6);
  const Image in = random_image(rng);
  EXPECT_EQ(augment::cutout(in, 0, 0, rng), in);
  EXPECT_EQ(augment::cutout(in, 0, 7, rng), in);
}

TEST(Cutout, ZeroesOneBoundedRectangle) {
  Image in(36, 60, 1.0f);
  Rng rng(7);
  const Image out = augment::cutout(in, 6, 9, rng);
  int zeros = 0, x_lo = 60, x_hi = -1, y_lo = 36, y_hi = -1;
  for (int y = 0; y < 36; ++y) {
    for (int x = 0; x < 60; ++x) {
      if (out.at(y, x) == 0.0f) {
        ++zeros;
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
      }
    }
  }
  EXPECT_EQ(zeros, 54);
  EXPECT_EQ(x_hi - x_lo + 1, 9);
  EXPECT_EQ(y_hi - y_lo + 1, 6);
}

TEST(Downscale, FactorTwoMatchesTentFilterOracle) {
  Rng rng(8);
  const Image in = random_image(rng);
  const Image out = augment::downscale(in, 2.0);
  ASSERT_EQ(out.height(), 36);
  ASSERT_EQ(out.width(), 60);
  const Image mid = resize_bilinear(in, 18, 30);
  const std::vector<double> src(in.pixels().begin(), in.pixels().end());
  const auto ref_mid = oracle::tent_resize(src, 36, 60, 18, 30);
  for (std::size_t i = 0; i < ref_mid.size(); ++i) ASSERT_NEAR(mid.pixels()[i], ref_mid[i], 1e-6);
  const std::vector<double> mid_d(mid.pixels().begin(), mid.pixels().end());
  const auto ref_out = oracle::tent_resize(mid_d, 18, 30, 36, 60);
  for (std::size_t i = 0; i < ref_out.size(); ++i) ASSERT_NEAR(out.pixels()[i], ref_out[i], 1e-6);
}

TEST(Downscale, UnitFactorIsIdentity) {
  Rng rng(9);
  const Image in = random_image(rng);
  EXPECT_EQ(augment::downscale(in, 1.0), in);
}

TEST(RandomLines, ZeroLinesIsIdentityAndLinesChangePixels) {
  Rng rng(10);
  const Image in(36, 60, 0.5f);
  EXPECT_EQ(augment::random_lines(in, 0, rng), in);
  const Image out = augment::random_lines(in, 2, rng);
  int changed = 0;
  for (std::size_t i = 0; i < in.size(); ++i) changed += out.pixels()[i] != in.pixels()[i];
  EXPECT_GT(changed, 0);
  EXPECT_LT(changed, 2 * (60 + 36));
}

TEST(Contrast, ScalesAroundMean) {
  Image in(2, 2);
  in.pixels()[0] = 0.2f;
  in.pixels()[1] = 0.4f;
  in.pixels()[2] = 0.6f;
  in.pixels()[3] = 0.8f;
  const Image out = augment::contrast(in, 1.5);
  EXPECT_NEAR(out.pixels()[0], 0.05, 1e-6);
  EXPECT_NEAR(out.pixels()[3], 0.95, 1e-6);
  EXPECT_EQ(augment::contrast(in, 1.0), in);
}

TEST(Transforms, RejectOutOfRangeParameters) {
  Rng rng(11);
  const Image in(36, 60, 0.5f);
  EXPECT_THROW(augment::gaussian_noise(in, -1, rng), InvalidArgument);
  EXPECT_THROW(augment::gaussian_blur(in, 2.5), InvalidArgument);
  EXPECT_THROW(augment::cutout(in, 11, 3, rng), InvalidArgument);
  EXPECT_THROW(augment::downscale(in, 3.0), InvalidArgument);
  EXPECT_THROW(augment::random_lines(in, 3, rng), InvalidArgument);
  EXPECT_THROW(augment::contrast(in, 2.0), InvalidArgument);
}

TEST(Transforms, EachPreservesShapeAndRangeFuzz) {
  Rng rng(12);
  for (int t = 0; t < 1000; ++t) {
    const Image in = random_image(rng);
    expect_valid(augment::gaussian_noise(in, uniform(rng, 0, 10), rng), in);
    expect_valid(augment::gaussian_blur(in, uniform(rng, 0, 2)), in);
    expect_valid(augment::cutout(in, static_cast<int>(uniform_int(rng, 0, 10)), static_cast<int>(uniform_int(rng, 0, 10)), rng), in);
    expect_valid(augment::downscale(in, uniform(rng, 1, 2)), in);
    expect_valid(augment::random_lines(in, static_cast<int>(uniform_int(rng, 0, 2)), rng), in);
    expect_valid(augment::contrast(in, rng), in);
  }
}

TEST(AugmentSpec, JsonRoundTrip) {
  AugmentSpec s;
  s.noise_sigma = {1, 4};
  s.apply_probability = 0.25;
  s.seed = 17;
  nlohmann::json j = s;
  EXPECT_EQ(j.get<AugmentSpec>(), s);
  j["blur_sigma"] = {0, 3};
  EXPECT_THROW(j.get<AugmentSpec>(), InvalidArgument);
}
