#include <gtest/gtest.h>
#include <torch/torch.h>

#include <filesystem>

#include "gazekit/datapipe.hpp"
#include "gazekit/gaze_estimator.hpp"
#include "gazekit/segmenter.hpp"

namespace fs = std::filesystem;
using namespace gazekit;

namespace {

std::vector<EyeSample> synth(int count, std::uint64_t seed) {
  SynthOptions opt;
  opt.count = count;
  opt.seed = seed;
  return synthetic_samples(opt);
}

SegmenterModel fresh_model(const SegmenterConfig& cfg) { return {cfg, make_unet(cfg), 0, {}}; }

Image filled(int h, int w, float v) {
  Image img(h, w);
  std::fill(img.pixels().begin(), img.pixels().end(), v);
  return img;
}

Image rect(int h, int w, int y0, int x0, int y1, int x1) {
  Image img(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) img.at(y, x) = 1.0f;
  return img;
}

}  // namespace

TEST(UNet, OutputShapeAndRange) {
  SegmenterConfig cfg;
  auto net = make_unet(cfg);
  torch::NoGradGuard no_grad;
  for (auto [h, w] : {std::pair{36, 60}, {4, 8}, {12, 16}, {40, 20}}) {
    const auto y = net->forward(torch::rand({2, 1, h, w}));
    EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{2, 2, h, w}));
    EXPECT_GE(y.min().item<float>(), 0.0f);
    EXPECT_LE(y.max().item<float>(), 1.0f);
  }
  EXPECT_THROW(net->forward(torch::rand({1, 1, 36, 62})), InvalidArgument);
  EXPECT_THROW(net->forward(torch::rand({1, 2, 36, 60})), InvalidArgument);
}

TEST(UNet, SkipConnectionsPairMatchingStages) {
  SegmenterConfig cfg;
  auto net = make_unet(cfg);
  SkipProbe probe;
  torch::NoGradGuard no_grad;
  net->forward(torch::rand({1, 1, 36, 60}), &probe);
  ASSERT_EQ(probe.encoder_shapes.size(), 2u);
  // first decoder stage meets the deepest encoder skip
  EXPECT_EQ(probe.encoder_shapes[0], (std::vector<std::int64_t>{1, 64, 18, 30}));
  EXPECT_EQ(probe.encoder_shapes[1], (std::vector<std::int64_t>{1, 32, 36, 60}));
  EXPECT_EQ(probe.decoder_shapes, probe.encoder_shapes);
}

TEST(Segment, ShapeRangeAndDeterminism) {
  SegmenterConfig cfg;
  auto model = fresh_model(cfg);
  const auto s = synth(1, 3).front();
  const SoftMasks a = segment(model, s.image);
  const SoftMasks b = segment(model, s.image);
  EXPECT_EQ(a.eyeball.height(), 36);
  EXPECT_EQ(a.iris.width(), 60);
  for (float v : a.eyeball.pixels()) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
  EXPECT_EQ(a.eyeball, b.eyeball);
  EXPECT_EQ(a.iris, b.iris);
  EXPECT_THROW(segment(model, Image(36, 64)), InvalidArgument);
}

TEST(Segment, SameSeedSameWeights) {
  SegmenterConfig cfg;
  cfg.seed = 9;
  EXPECT_TRUE(parameters_equal(snapshot_parameters(*make_unet(cfg)), snapshot_parameters(*make_unet(cfg))));
}

TEST(SegmenterTraining, OneStepDecreasesBatchLoss) {
  const auto data = synth(8, 12);
  std::vector<const EyeSample*> batch;
  std::vector<const Image*> imgs;
  for (const auto& s : data) {
    batch.push_back(&s);
    imgs.push_back(&s.image);
  }
  const auto x = to_tensor(imgs);
  const auto target = mask_targets(batch);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SegmenterConfig cfg;
    cfg.seed = seed;
    auto net = make_unet(cfg);
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(1e-5));
    auto before = torch::mse_loss(net->forward(x), target);
    opt.zero_grad();
    before.backward();
    opt.step();
    torch::NoGradGuard no_grad;
    const double after = torch::mse_loss(net->forward(x), target).item<double>();
    EXPECT_LT(after, before.item<double>()) << "seed " << seed;
  }
}

TEST(SegmenterTraining, GradientMatchesFiniteDifferences) {
  SegmenterConfig cfg;
  cfg.input_h = 4;
  cfg.input_w = 8;
  cfg.base_channels = 4;
  cfg.seed = 2;
  auto net = make_unet(cfg);
  net->to(torch::kDouble);
  torch::manual_seed(4);
  const auto x = torch::rand({2, 1, 4, 8}, torch::kDouble);
  const auto target = (torch::rand({2, 2, 4, 8}, torch::kDouble) > 0.5).to(torch::kDouble);
  auto loss_of = [&] { return torch::mse_loss(net->forward(x), target); };

  net->zero_grad();
  loss_of().backward();
  const double h = 1e-6;
  int checked = 0;
  for (auto& p : net->named_parameters()) {
    auto& w = p.value();
    const auto g = w.grad().view(-1);
    for (std::int64_t k : {std::int64_t{0}, w.numel() / 2, w.numel() - 1}) {
      const double analytic = g[k].item<double>();
      double plus, minus;
      {
        torch::NoGradGuard no_grad;
        const double orig = w.view(-1)[k].item<double>();
        w.view(-1)[k] = orig + h;
        plus = loss_of().item<double>();
        w.view(-1)[k] = orig - h;
        minus = loss_of().item<double>();
        w.view(-1)[k] = orig;
      }
      const double numeric = (plus - minus) / (2 * h);
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
      EXPECT_LT(std::abs(analytic - numeric) / scale, 1e-3) << p.key() << "[" << k << "] " << analytic << " vs " << numeric;
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(SegmenterTraining, OverfitsThirtyTwoSamples) {
  const auto data = synth(32, 5);
  SegmenterConfig cfg;
  cfg.epochs = 200;  // one step per epoch with batch 32
  cfg.lr = 1e-3;
  cfg.lr_step = 1000;
  cfg.augment_inputs = false;
  cfg.seed = 5;
  auto result = train_segmenter(data, {}, cfg);
  const IouPair iou = mean_iou(result.model, data);
  EXPECT_GT(iou.eyeball, 0.9);
  EXPECT_GT(iou.iris, 0.9);
}

TEST(SegmenterTraining, TwoEpochsReduceTrainMse) {
  const auto data = synth(200, 6);
  SegmenterConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 6;
  auto initial = fresh_model(cfg);
  const double before = mean_mse(initial, data);
  auto result = train_segmenter(data, {}, cfg);
  EXPECT_LT(mean_mse(result.model, data), before);
  EXPECT_EQ(result.log.size(), 2u);
}

TEST(SegmenterTraining, StepScheduleAtEpochBoundaries) {
  EXPECT_DOUBLE_EQ(step_lr(1e-5, 0, 5, 0.1), 1e-5);
  EXPECT_DOUBLE_EQ(step_lr(1e-5, 4, 5, 0.1), 1e-5);
  EXPECT_NEAR(step_lr(1e-5, 5, 5, 0.1), 1e-6, 1e-20);
  EXPECT_NEAR(step_lr(1e-5, 10, 5, 0.1), 1e-7, 1e-21);

  const auto data = synth(2, 1);
  SegmenterConfig cfg;
  cfg.epochs = 11;
  cfg.base_channels = 4;
  auto result = train_segmenter(data, {}, cfg);
  ASSERT_EQ(result.log.size(), 11u);
  for (int e = 1; e < 11; ++e) {
    const double ratio = result.log[e].lr / result.log[e - 1].lr;
    EXPECT_NEAR(ratio, e % 5 == 0 ? 0.1 : 1.0, 1e-12) << "epoch " << e;
  }
}

TEST(SegmenterTraining, RejectsBadTrainingSets) {
  SegmenterConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train_segmenter({}, {}, cfg), PreconditionError);
  auto data = synth(2, 1);
  data[1].masks.reset();
  EXPECT_THROW(train_segmenter(data, {}, cfg), PreconditionError);
}

TEST(Binarize, ThresholdAndContainment) {
  const MaskPair zero = binarize({filled(36, 60, 0.4f), filled(36, 60, 0.4f)});
  for (float v : zero.eyeball.pixels()) EXPECT_EQ(v, 0.0f);
  for (float v : zero.iris.pixels()) EXPECT_EQ(v, 0.0f);

  SoftMasks s{rect(36, 60, 0, 0, 36, 30), filled(36, 60, 1.0f)};
  const MaskPair m = binarize(s);
  EXPECT_EQ(m.iris, m.eyeball);

  Rng rng = make_rng(3, "binarize");
  for (int t = 0; t < 20; ++t) {
    SoftMasks r{Image(36, 60), Image(36, 60)};
    for (auto& v : r.eyeball.pixels()) v = static_cast<float>(uniform01(rng));
    for (auto& v : r.iris.pixels()) v = static_cast<float>(uniform01(rng));
    const MaskPair b = binarize(r);
    for (std::size_t i = 0; i < b.iris.size(); ++i) {
      EXPECT_LE(b.iris.pixels()[i], b.eyeball.pixels()[i]);
      EXPECT_EQ(b.eyeball.pixels()[i], r.eyeball.pixels()[i] >= 0.5f ? 1.0f : 0.0f);
    }
  }
}

TEST(Iou, HandCountedCases) {
  const Image a = rect(36, 60, 0, 0, 10, 20);
  const Image b = rect(36, 60, 20, 30, 30, 50);
  EXPECT_DOUBLE_EQ(mask_iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(mask_iou(a, b), 0.0);
  EXPECT_DOUBLE_EQ(mask_iou(Image(36, 60), Image(36, 60)), 1.0);
  // 10x20 vs the same box shifted right by 10: overlap 10x10, union 10x30
  const Image c = rect(36, 60, 0, 10, 10, 30);
  EXPECT_DOUBLE_EQ(mask_iou(a, c), 100.0 / 300.0);
  const IouPair p = evaluate_iou({a, a}, {a, c});
  EXPECT_DOUBLE_EQ(p.eyeball, 1.0);
  EXPECT_DOUBLE_EQ(p.iris, 1.0 / 3.0);
  EXPECT_THROW(mask_iou(a, Image(36, 61)), InvalidArgument);
}

TEST(SegmenterCheckpoint, RoundTripAndKindCheck) {
  const auto dir = fs::temp_directory_path() / "gazekit_seg_ckpt";
  fs::remove_all(dir);
  SegmenterConfig cfg;
  cfg.seed = 4;
  auto model = fresh_model(cfg);
  model.epochs_trained = 3;
  model.val_iou = {0.5, 0.25};
  save_segmenter(dir / "seg.ckpt", model);
  auto loaded = load_segmenter(dir / "seg.ckpt");
  EXPECT_EQ(loaded.config, cfg);
  EXPECT_EQ(loaded.epochs_trained, 3);
  EXPECT_DOUBLE_EQ(loaded.val_iou.iris, 0.25);
  const auto s = synth(1, 2).front();
  EXPECT_EQ(segment(model, s.image).iris, segment(loaded, s.image).iris);
  save_segmenter(dir / "seg2.ckpt", loaded);
  EXPECT_EQ(file_hash(dir / "seg.ckpt"), file_hash(dir / "seg2.ckpt"));
  EXPECT_THROW(load_gaze_model(dir / "seg.ckpt"), DataError);
}

TEST(SegmenterConfigJson, RoundTripAndValidation) {
  SegmenterConfig c;
  c.epochs = 3;
  c.seed = 8;
  nlohmann::json j = c;
  EXPECT_EQ(j["input_hw"], nlohmann::json({36, 60}));
  EXPECT_EQ(j.get<SegmenterConfig>(), c);
  j["input_hw"] = {36, 62};
  EXPECT_THROW(j.get<SegmenterConfig>(), ConfigError);
}
