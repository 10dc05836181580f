#pragma once

// U-Net style two-channel eye-region segmenter (channel 0: visible eyeball,
// channel 1: iris), trained with MSE on sigmoid outputs.

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazekit/augment.hpp"
#include "gazekit/checkpoint.hpp"
#include "gazekit/datapipe.hpp"
#include "gazekit/error.hpp"
#include "gazekit/nn.hpp"
#include "gazekit/rng.hpp"

namespace gazekit {

struct SegmenterConfig {
  int input_h = kEyeHeight;
  int input_w = kEyeWidth;
  int base_channels = 32;
  int depth = 2;
  int out_channels = 2;
  int epochs = 50;
  double lr = 1e-5;
  int batch_size = 32;
  int lr_step = 5;
  double lr_gamma = 0.1;
  bool augment_inputs = true;
  AugmentSpec augment;
  std::uint64_t seed = 0;

  friend bool operator==(const SegmenterConfig&, const SegmenterConfig&) = default;
};

inline void validate(const SegmenterConfig& c) {
  if (c.depth < 1) throw ConfigError("segmenter depth must be >= 1");
  const int div = 1 << c.depth;
  if (c.input_h % div != 0 || c.input_w % div != 0) {
    throw ConfigError("segmenter input must be divisible by 2^depth = " + std::to_string(div));
  }
  if (c.base_channels < 1 || c.out_channels != 2) throw ConfigError("segmenter needs base_channels >= 1 and 2 outputs");
  if (c.batch_size < 1 || c.lr_step < 1 || !(c.lr > 0) || !(c.lr_gamma > 0)) throw ConfigError("invalid segmenter training settings");
  validate(c.augment);
}

inline void to_json(nlohmann::json& j, const SegmenterConfig& c) {
  j = {{"input_hw", {c.input_h, c.input_w}},
       {"base_channels", c.base_channels},
       {"depth", c.depth},
       {"out_channels", c.out_channels},
       {"epochs", c.epochs},
       {"lr", c.lr},
       {"batch_size", c.batch_size},
       {"lr_step", c.lr_step},
       {"lr_gamma", c.lr_gamma},
       {"augment_inputs", c.augment_inputs},
       {"augment", c.augment},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SegmenterConfig& c) {
  SegmenterConfig d;
  if (j.contains("input_hw")) {
    d.input_h = j.at("input_hw").at(0).get<int>();
    d.input_w = j.at("input_hw").at(1).get<int>();
  }
  d.base_channels = j.value("base_channels", d.base_channels);
  d.depth = j.value("depth", d.depth);
  d.out_channels = j.value("out_channels", d.out_channels);
  d.epochs = j.value("epochs", d.epochs);
  d.lr = j.value("lr", d.lr);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.lr_step = j.value("lr_step", d.lr_step);
  d.lr_gamma = j.value("lr_gamma", d.lr_gamma);
  d.augment_inputs = j.value("augment_inputs", d.augment_inputs);
  if (j.contains("augment")) d.augment = j.at("augment").get<AugmentSpec>();
  d.seed = j.value("seed", d.seed);
  validate(d);
  c = d;
}

/// Learning rate for a 0-based epoch under step decay.
inline double step_lr(double base, int epoch, int step, double gamma) {
  return base * std::pow(gamma, epoch / step);
}

namespace detail {
inline torch::nn::Sequential conv_block(std::int64_t in, std::int64_t out) {
  return torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)), torch::nn::ReLU(),
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)), torch::nn::ReLU());
}
}  // namespace detail

/// Activation shapes recorded at each skip connection: the encoder feature
/// and the upsampled decoder tensor it is concatenated with.
struct SkipProbe {
  std::vector<std::vector<std::int64_t>> encoder_shapes;
  std::vector<std::vector<std::int64_t>> decoder_shapes;
};

struct UNetImpl : torch::nn::Module {
  explicit UNetImpl(const SegmenterConfig& cfg) : depth(cfg.depth) {
    const std::int64_t c = cfg.base_channels;
    std::int64_t in = 1;
    for (int i = 0; i <= depth; ++i) {
      const std::int64_t out = c << i;
      down->push_back(detail::conv_block(in, out));
      in = out;
    }
    for (int i = depth - 1; i >= 0; --i) {
      const std::int64_t out = c << i;
      up->push_back(torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(out * 2, out, 2).stride(2)));
      fuse->push_back(detail::conv_block(out * 2, out));
    }
    register_module("down", down);
    register_module("up", up);
    register_module("fuse", fuse);
    head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, cfg.out_channels, 1)));
  }

  torch::Tensor forward(torch::Tensor x, SkipProbe* probe = nullptr) {
    const std::int64_t div = std::int64_t{1} << depth;
    if (x.dim() != 4 || x.size(1) != 1 || x.size(2) % div != 0 || x.size(3) % div != 0) {
      throw InvalidArgument("segmenter input must be [B, 1, H, W] with H, W divisible by " + std::to_string(div));
    }
    std::vector<torch::Tensor> skips;
    for (int i = 0; i <= depth; ++i) {
      x = down[i]->as<torch::nn::Sequential>()->forward(x);
      if (i < depth) {
        skips.push_back(x);
        x = torch::max_pool2d(x, 2);
      }
    }
    for (int i = 0; i < depth; ++i) {
      x = up[i]->as<torch::nn::ConvTranspose2d>()->forward(x);
      const auto& skip = skips[depth - 1 - i];
      if (probe) {
        probe->encoder_shapes.push_back(skip.sizes().vec());
        probe->decoder_shapes.push_back(x.sizes().vec());
      }
      x = fuse[i]->as<torch::nn::Sequential>()->forward(torch::cat({skip, x}, 1));
    }
    return torch::sigmoid(head->forward(x));
  }

  int depth;
  torch::nn::ModuleList down, up, fuse;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UNet);

inline UNet make_unet(const SegmenterConfig& cfg) {
  validate(cfg);
  torch::manual_seed(derive_seed(cfg.seed, "segmenter-init"));
  return UNet(cfg);
}

struct SoftMasks {
  Image eyeball;
  Image iris;
};

struct IouPair {
  double eyeball = 0.0;
  double iris = 0.0;
};

struct SegmenterModel {
  SegmenterConfig config;
  UNet net{nullptr};
  int epochs_trained = 0;
  IouPair val_iou;
};

/// Per-pixel sigmoid outputs for one preprocessed image.
inline SoftMasks segment(SegmenterModel& model, const Image& image) {
  if (image.height() != model.config.input_h || image.width() != model.config.input_w) {
    throw InvalidArgument("segment: expected " + std::to_string(model.config.input_h) + "x" +
                          std::to_string(model.config.input_w) + " input, got " + std::to_string(image.height()) + "x" +
                          std::to_string(image.width()));
  }
  torch::NoGradGuard no_grad;
  model.net->eval();
  const auto out = model.net->forward(to_tensor(image));
  return {to_image(out, 0, 0), to_image(out, 0, 1)};
}

inline std::vector<SoftMasks> segment_batch(SegmenterModel& model, const std::vector<const Image*>& images,
                                            int batch = 64) {
  std::vector<SoftMasks> out;
  torch::NoGradGuard no_grad;
  model.net->eval();
  for (std::size_t s = 0; s < images.size(); s += static_cast<std::size_t>(batch)) {
    const std::size_t e = std::min(images.size(), s + static_cast<std::size_t>(batch));
    std::vector<const Image*> chunk(images.begin() + s, images.begin() + e);
    for (const Image* img : chunk) {
      if (img->height() != model.config.input_h || img->width() != model.config.input_w) {
        throw InvalidArgument("segment: input shape does not match the segmenter configuration");
      }
    }
    const auto y = model.net->forward(to_tensor(chunk));
    for (std::int64_t b = 0; b < y.size(0); ++b) out.push_back({to_image(y, b, 0), to_image(y, b, 1)});
  }
  return out;
}

/// Thresholds both channels, then clips the iris to the eyeball.
inline MaskPair binarize(const SoftMasks& soft, double threshold = 0.5) {
  if (!soft.eyeball.same_shape(soft.iris)) throw InvalidArgument("soft mask channels differ in shape");
  MaskPair m{Image(soft.eyeball.height(), soft.eyeball.width()), Image(soft.iris.height(), soft.iris.width())};
  for (std::size_t i = 0; i < soft.eyeball.size(); ++i) {
    const bool eb = soft.eyeball.pixels()[i] >= threshold;
    m.eyeball.pixels()[i] = eb ? 1.0f : 0.0f;
    m.iris.pixels()[i] = eb && soft.iris.pixels()[i] >= threshold ? 1.0f : 0.0f;
  }
  return m;
}

/// Intersection over union of a binary mask pair; an empty union scores 1.
inline double mask_iou(const Image& pred, const Image& gt) {
  if (!pred.same_shape(gt)) throw InvalidArgument("IoU of differently shaped masks");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.pixels()[i] >= 0.5f, g = gt.pixels()[i] >= 0.5f;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline IouPair evaluate_iou(const MaskPair& pred, const MaskPair& gt) {
  return {mask_iou(pred.eyeball, gt.eyeball), mask_iou(pred.iris, gt.iris)};
}

/// Mean per-sample IoU of the thresholded predictions.
inline IouPair mean_iou(SegmenterModel& model, const std::vector<EyeSample>& samples, double threshold = 0.5) {
  if (samples.empty()) return {};
  std::vector<const Image*> imgs;
  for (const auto& s : samples) imgs.push_back(&s.image);
  const auto soft = segment_batch(model, imgs);
  IouPair acc;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const IouPair p = evaluate_iou(binarize(soft[i], threshold), *samples[i].masks);
    acc.eyeball += p.eyeball;
    acc.iris += p.iris;
  }
  return {acc.eyeball / samples.size(), acc.iris / samples.size()};
}

inline torch::Tensor mask_targets(const std::vector<const EyeSample*>& batch) {
  std::vector<const Image*> eb, ir;
  for (const auto* s : batch) {
    eb.push_back(&s->masks->eyeball);
    ir.push_back(&s->masks->iris);
  }
  return torch::cat({to_tensor(eb), to_tensor(ir)}, 1);
}

/// Mean squared error of the soft masks against binary targets (no augmentation).
inline double mean_mse(SegmenterModel& model, const std::vector<EyeSample>& samples) {
  torch::NoGradGuard no_grad;
  model.net->eval();
  double sum = 0.0;
  for (std::size_t s = 0; s < samples.size(); s += 64) {
    std::vector<const EyeSample*> chunk;
    std::vector<const Image*> imgs;
    for (std::size_t i = s; i < std::min(samples.size(), s + 64); ++i) {
      chunk.push_back(&samples[i]);
      imgs.push_back(&samples[i].image);
    }
    sum += torch::mse_loss(model.net->forward(to_tensor(imgs)), mask_targets(chunk), torch::Reduction::Sum).item<double>();
  }
  return sum / (static_cast<double>(samples.size()) * 2 * model.config.input_h * model.config.input_w);
}

struct SegEpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;
  IouPair val_iou;
};

struct SegmenterResult {
  SegmenterModel model;
  std::vector<SegEpochLog> log;
};

/// Trains from scratch; returns the epoch with the best mean validation IoU
/// (the last epoch when `val` is empty).
inline SegmenterResult train_segmenter(const std::vector<EyeSample>& train, const std::vector<EyeSample>& val,
                                       const SegmenterConfig& cfg,
                                       const std::function<void(const SegEpochLog&)>& on_epoch = {}) {
  validate(cfg);
  if (train.empty()) throw PreconditionError("segmenter training set is empty");
  for (const auto* set : {&train, &val}) {
    for (const auto& s : *set) {
      if (!s.masks) throw PreconditionError("segmenter sample '" + s.id + "' has no ground-truth masks");
      if (s.image.height() != cfg.input_h || s.image.width() != cfg.input_w) {
        throw PreconditionError("segmenter sample '" + s.id + "' does not match the configured input size");
      }
    }
  }
  SegmenterResult result;
  result.model.config = cfg;
  result.model.net = make_unet(cfg);
  auto& net = result.model.net;
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));

  std::vector<torch::Tensor> best_state;
  double best_score = -1.0;
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = step_lr(cfg.lr, epoch, cfg.lr_step, cfg.lr_gamma);
    set_learning_rate(opt, lr);
    net->train();
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = make_rng(cfg.seed, "seg-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle(order, shuffle_rng);
    double sse = 0.0;
    for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(n, s + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const EyeSample*> batch;
      std::vector<Image> inputs;
      for (std::size_t i = s; i < e; ++i) {
        const EyeSample& sample = train[order[i]];
        batch.push_back(&sample);
        if (cfg.augment_inputs) {
          Rng aug = make_rng(cfg.seed, "seg-augment", static_cast<std::uint64_t>(epoch) * n + order[i]);
          inputs.push_back(apply_random(sample.image, cfg.augment, aug));
        } else {
          inputs.push_back(sample.image);
        }
      }
      std::vector<const Image*> ptrs;
      for (const auto& im : inputs) ptrs.push_back(&im);
      auto loss = torch::mse_loss(net->forward(to_tensor(ptrs)), mask_targets(batch));
      opt.zero_grad();
      loss.backward();
      opt.step();
      const double l = loss.item<double>();
      if (!std::isfinite(l)) throw TrainingError("segmenter loss diverged at epoch " + std::to_string(epoch));
      sse += l * static_cast<double>(e - s);
    }
    SegEpochLog entry{epoch, lr, sse / static_cast<double>(n), {}};
    if (!val.empty()) entry.val_iou = mean_iou(result.model, val);
    const double score = val.empty() ? static_cast<double>(epoch) : 0.5 * (entry.val_iou.eyeball + entry.val_iou.iris);
    if (score > best_score) {
      best_score = score;
      best_state = snapshot_parameters(*net);
      result.model.epochs_trained = epoch + 1;
      result.model.val_iou = entry.val_iou;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  if (!best_state.empty()) {
    torch::NoGradGuard no_grad;
    auto params = net->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(best_state[i]);
  }
  net->eval();
  return result;
}

inline void save_segmenter(const std::filesystem::path& path, const SegmenterModel& m) {
  nlohmann::json cfg = {{"segmenter", m.config},
                        {"epochs_trained", m.epochs_trained},
                        {"val_iou", {m.val_iou.eyeball, m.val_iou.iris}}};
  save_module(path, "segmenter", cfg, *m.net);
}

inline SegmenterModel load_segmenter(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path, "segmenter");
  SegmenterModel m;
  try {
    m.config = ck.config.at("segmenter").get<SegmenterConfig>();
    m.epochs_trained = ck.config.at("epochs_trained").get<int>();
    m.val_iou = {ck.config.at("val_iou").at(0).get<double>(), ck.config.at("val_iou").at(1).get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("segmenter checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("segmenter checkpoint config: ") + e.what());
  }
  m.net = UNet(m.config);
  load_into(*m.net, ck);
  m.net->eval();
  return m;
}

}  // namespace gazekit
