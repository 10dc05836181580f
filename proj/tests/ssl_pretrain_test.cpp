#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "gazekit/datapipe.hpp"
#include "gazekit/ssl_pretrain.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace gazekit;

namespace {

torch::Tensor random_unit(std::int64_t rows, std::int64_t dim, std::uint64_t seed) {
  torch::manual_seed(seed);
  auto z = torch::randn({rows, dim}, torch::kDouble);
  return z / z.norm(2, 1, true);
}

std::vector<double> flat(const torch::Tensor& t) {
  const auto c = t.to(torch::kDouble).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

// Largest elementwise |a - n| relative to the gradient scale.
double relative_gradient_error(const torch::Tensor& analytic, const torch::Tensor& numeric) {
  const double scale = std::max(analytic.abs().max().item<double>(), 1e-8);
  return (analytic - numeric).abs().max().item<double>() / scale;
}

std::vector<Image> synthetic_images(int count, std::uint64_t seed) {
  std::vector<Image> out;
  SynthOptions opt;
  opt.count = count;
  opt.seed = seed;
  for (int i = 0; i < count; ++i) out.push_back(synthetic_sample(opt, i).image);
  return out;
}

}  // namespace

TEST(NtXent, SinglePairIsZero) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto z = random_unit(2, 64, s);
    EXPECT_NEAR(nt_xent_loss(ContrastiveBatch{z, 0.1}).item<double>(), 0.0, 1e-12);
  }
}

TEST(NtXent, IdenticalEmbeddingsGiveLog2NMinus1) {
  for (int n : {1, 2, 3, 4, 8, 16}) {
    const auto row = random_unit(1, 64, static_cast<std::uint64_t>(n));
    const auto z = row.expand({2 * n, 64}).contiguous();
    const double loss = nt_xent_loss(ContrastiveBatch{z, 0.1}).item<double>();
    EXPECT_NEAR(loss, std::log(2.0 * n - 1.0), 1e-9) << "N=" << n;
  }
  const auto z = random_unit(1, 8, 1).expand({4, 8}).contiguous();
  EXPECT_NEAR(nt_xent_loss(ContrastiveBatch{z, 0.1}).item<double>(), 1.0986122886681098, 1e-9);
}

TEST(NtXent, MatchesDoubleLoopOracle) {
  for (int trial = 0; trial < 40; ++trial) {
    const int n = std::array{1, 2, 4, 8}[trial % 4];
    const int d = 64;
    const auto z = random_unit(2 * n, d, 1000 + static_cast<std::uint64_t>(trial));
    const double got = nt_xent_loss(ContrastiveBatch{z, kContrastiveTemperature}).item<double>();
    const double want = oracle::nt_xent(flat(z), 2 * n, d, kContrastiveTemperature);
    EXPECT_NEAR(got, want, 1e-6) << "trial " << trial;
    EXPECT_GE(got, 0.0);
  }
}

TEST(NtXent, PermutationInvariantUnderPairRelabeling) {
  const int n = 6;
  const auto z = random_unit(2 * n, 32, 77);
  const double base = nt_xent_loss(ContrastiveBatch{z, 0.1}).item<double>();
  torch::manual_seed(5);
  const auto perm = torch::randperm(n);
  const auto idx = torch::cat({perm, perm + n});
  EXPECT_NEAR(nt_xent_loss(ContrastiveBatch{z.index_select(0, idx), 0.1}).item<double>(), base, 1e-12);
  // swapping the two views of every pair is also a relabeling
  const auto swapped = torch::cat({z.slice(0, n, 2 * n), z.slice(0, 0, n)});
  EXPECT_NEAR(nt_xent_loss(ContrastiveBatch{swapped, 0.1}).item<double>(), base, 1e-12);
}

TEST(NtXent, GradientMatchesFiniteDifferences) {
  for (int n : {1, 2, 3, 4}) {
    torch::manual_seed(static_cast<std::uint64_t>(40 + n));
    auto x = torch::randn({2 * n, 8}, torch::kDouble).requires_grad_(true);
    nt_xent_loss(x, 0.1).backward();
    const auto analytic = x.grad().clone();
    auto numeric = torch::zeros_like(analytic);
    const double h = 1e-6;
    auto base = x.detach().clone();
    for (std::int64_t k = 0; k < base.numel(); ++k) {
      auto xp = base.clone(), xm = base.clone();
      xp.view(-1)[k] += h;
      xm.view(-1)[k] -= h;
      numeric.view(-1)[k] = (nt_xent_loss(xp, 0.1).item<double>() - nt_xent_loss(xm, 0.1).item<double>()) / (2 * h);
    }
    EXPECT_LT(relative_gradient_error(analytic, numeric), 1e-4) << "N=" << n;
  }
}

TEST(NtXent, RejectsBadBatches) {
  auto z = random_unit(4, 8, 1) * 1.01;
  EXPECT_THROW(nt_xent_loss(ContrastiveBatch{z, 0.1}), InvalidArgument);
  EXPECT_THROW(nt_xent_loss(ContrastiveBatch{random_unit(3, 8, 1), 0.1}), InvalidArgument);
  EXPECT_THROW(nt_xent_loss(ContrastiveBatch{random_unit(4, 8, 1), 0.0}), InvalidArgument);
  // float tolerance is looser than double tolerance
  auto f = random_unit(4, 8, 2).to(torch::kFloat32);
  EXPECT_NO_THROW(nt_xent_loss(ContrastiveBatch{f, 0.1}));
}

TEST(Pairs, IdentitySpecGivesUnchangedViews) {
  const auto img = synthetic_images(1, 4).front();
  Rng rng = make_rng(1, "pair");
  auto [a, b] = make_pair(img, AugmentSpec::identity(), rng);
  EXPECT_EQ(a, img);
  EXPECT_EQ(b, img);
}

TEST(Pairs, ReproducibleAndUsuallyDifferent) {
  const auto imgs = synthetic_images(100, 8);
  int differ = 0;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    Rng r1 = make_rng(3, "pair", i), r2 = make_rng(3, "pair", i);
    auto p1 = make_pair(imgs[i], AugmentSpec{}, r1);
    auto p2 = make_pair(imgs[i], AugmentSpec{}, r2);
    EXPECT_EQ(p1.first, p2.first);
    EXPECT_EQ(p1.second, p2.second);
    if (!(p1.first == imgs[i]) || !(p1.second == imgs[i])) ++differ;
  }
  EXPECT_GE(differ, 95);
}

TEST(Schedule, CosineEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-4, 0, 50), 1e-4);
  EXPECT_NEAR(cosine_lr(1e-4, 50, 50), 0.0, 1e-20);
  EXPECT_NEAR(cosine_lr(1e-4, 25, 50), 5e-5, 1e-18);
  for (int e = 1; e <= 50; ++e) EXPECT_LT(cosine_lr(1e-4, e, 50), cosine_lr(1e-4, e - 1, 50));
}

TEST(Pretrain, PreconditionsEnforced) {
  const auto imgs = synthetic_images(4, 1);
  SslConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  EXPECT_THROW(pretrain(imgs, cfg), PreconditionError);
  cfg.batch_size = 4;
  EXPECT_THROW(pretrain({imgs.front()}, cfg), PreconditionError);
}

TEST(Pretrain, FiveEpochsHalveTheLoss) {
  const auto imgs = synthetic_images(1000, 21);
  SslConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 21;
  cfg.lr = 1e-3;
  cfg.batch_size = 32;
  std::vector<double> losses;
  const auto result = pretrain(imgs, cfg, [&](const SslEpochLog& e) { losses.push_back(e.loss); });
  ASSERT_EQ(losses.size(), 5u);
  for (double l : losses) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(losses.back(), 0.5 * losses.front()) << "first " << losses.front() << " last " << losses.back();
  EXPECT_EQ(result.log.size(), 5u);
  EXPECT_DOUBLE_EQ(result.log.front().lr, cfg.lr);
}

TEST(Pretrain, DeterministicAndCheckpointRoundTrip) {
  const auto imgs = synthetic_images(24, 5);
  SslConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 5;
  auto a = pretrain(imgs, cfg);
  auto b = pretrain(imgs, cfg);
  EXPECT_TRUE(parameters_equal(snapshot_parameters(*a.encoder), snapshot_parameters(*b.encoder)));
  EXPECT_EQ(a.log.back().loss, b.log.back().loss);

  const auto dir = fs::temp_directory_path() / "gazekit_ssl_rt";
  fs::remove_all(dir);
  save_encoder(dir / "enc.ckpt", a.encoder, cfg);
  auto loaded = load_encoder(dir / "enc.ckpt");
  EXPECT_TRUE(torch::equal(encode(a.encoder, imgs), encode(loaded, imgs)));
  save_encoder(dir / "enc2.ckpt", loaded, cfg);
  EXPECT_EQ(file_hash(dir / "enc.ckpt"), file_hash(dir / "enc2.ckpt"));
  EXPECT_THROW(load_encoder(dir / "missing.ckpt"), DataError);
}

TEST(Pretrain, HeadCanBeDisabled) {
  const auto imgs = synthetic_images(8, 2);
  SslConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.projection_head = false;
  const auto r = pretrain(imgs, cfg);
  EXPECT_TRUE(std::isfinite(r.log.front().loss));
}

TEST(SslConfigJson, RoundTrip) {
  SslConfig c;
  c.epochs = 7;
  c.temperature = 0.2;
  c.seed = 11;
  c.augment.noise_sigma = {0, 3};
  nlohmann::json j = c;
  EXPECT_EQ(j.get<SslConfig>(), c);
}
