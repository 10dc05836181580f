#pragma once

// Multistream gaze regressor: eye image, visible-eyeball mask and iris mask
// each pass through their own EyeEncoder; the three 128-d features are
// concatenated and regressed to (pitch, yaw) by a 256-128-2 MLP.

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazekit/checkpoint.hpp"
#include "gazekit/datapipe.hpp"
#include "gazekit/error.hpp"
#include "gazekit/geometry.hpp"
#include "gazekit/nn.hpp"
#include "gazekit/rng.hpp"
#include "gazekit/segmenter.hpp"
#include "gazekit/ssl_pretrain.hpp"

namespace gazekit {

struct GazeTrainConfig {
  int epochs_total = 25;
  int frozen_epochs = 5;
  double lr = 1e-5;
  int batch_size = 128;
  double plateau_factor = 0.1;
  int plateau_patience = 3;
  double plateau_threshold = 1e-4;  // relative improvement needed to reset patience
  std::uint64_t seed = 0;

  friend bool operator==(const GazeTrainConfig&, const GazeTrainConfig&) = default;
};

inline void validate(const GazeTrainConfig& c) {
  if (c.epochs_total < 0 || c.frozen_epochs < 0 || c.frozen_epochs > c.epochs_total) {
    throw ConfigError("gaze training needs 0 <= frozen_epochs <= epochs_total");
  }
  if (c.batch_size < 1 || !(c.lr > 0) || !(c.plateau_factor > 0 && c.plateau_factor < 1) || c.plateau_patience < 0) {
    throw ConfigError("invalid gaze training settings");
  }
}

inline void to_json(nlohmann::json& j, const GazeTrainConfig& c) {
  j = {{"epochs_total", c.epochs_total},
       {"frozen_epochs", c.frozen_epochs},
       {"lr", c.lr},
       {"batch_size", c.batch_size},
       {"plateau_factor", c.plateau_factor},
       {"plateau_patience", c.plateau_patience},
       {"plateau_threshold", c.plateau_threshold},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GazeTrainConfig& c) {
  GazeTrainConfig d;
  d.epochs_total = j.value("epochs_total", d.epochs_total);
  d.frozen_epochs = j.value("frozen_epochs", d.frozen_epochs);
  d.lr = j.value("lr", d.lr);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.plateau_factor = j.value("plateau_factor", d.plateau_factor);
  d.plateau_patience = j.value("plateau_patience", d.plateau_patience);
  d.plateau_threshold = j.value("plateau_threshold", d.plateau_threshold);
  d.seed = j.value("seed", d.seed);
  validate(d);
  c = d;
}

/// Reduce-on-plateau for a metric being minimized. After `patience`
/// consecutive epochs without a relative improvement of `threshold`, the
/// learning rate is multiplied by `factor` for the following epoch.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience, double threshold)
      : lr_(lr), factor_(factor), patience_(patience), threshold_(threshold) {}

  /// Records one epoch's metric; returns true if the rate was reduced.
  bool step(double metric) {
    if (metric < best_ * (1.0 - threshold_)) {
      best_ = metric;
      bad_epochs_ = 0;
      return false;
    }
    if (++bad_epochs_ >= patience_) {
      lr_ *= factor_;
      bad_epochs_ = 0;
      return true;
    }
    return false;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

struct MultistreamModelImpl : torch::nn::Module {
  explicit MultistreamModelImpl(EyeEncoderOptions enc = {})
      : encoder_eye(register_module("encoder_eye", EyeEncoder(enc))),
        encoder_eyeball(register_module("encoder_eyeball", EyeEncoder(enc))),
        encoder_iris(register_module("encoder_iris", EyeEncoder(enc))),
        fc1(register_module("fc1", torch::nn::Linear(3 * enc.feature_dim(), 256))),
        fc2(register_module("fc2", torch::nn::Linear(256, 128))),
        fc3(register_module("fc3", torch::nn::Linear(128, 2))) {}

  torch::Tensor fuse(const torch::Tensor& image, const torch::Tensor& eyeball, const torch::Tensor& iris) {
    return torch::cat({encoder_eye(image), encoder_eyeball(eyeball), encoder_iris(iris)}, 1);
  }

  torch::Tensor head(const torch::Tensor& fused) { return fc3(torch::relu(fc2(torch::relu(fc1(fused))))); }

  /// [B, 2] (pitch, yaw) in radians.
  torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& eyeball, const torch::Tensor& iris) {
    return head(fuse(image, eyeball, iris));
  }

  EyeEncoder encoder_eye, encoder_eyeball, encoder_iris;
  torch::nn::Linear fc1, fc2, fc3;
};
TORCH_MODULE(MultistreamModel);

struct GazeModel {
  GazeTrainConfig config;
  MultistreamModel net{nullptr};
  bool ssl_init = false;
};

struct StreamBatch {
  torch::Tensor image, eyeball, iris, target;
};

/// Tensors for a set of samples. Every sample must carry masks; labels are
/// included when `with_labels` is set.
inline StreamBatch make_stream_batch(const std::vector<const EyeSample*>& samples, bool with_labels) {
  std::vector<const Image*> img, eb, ir;
  std::vector<float> target;
  for (const auto* s : samples) {
    if (!s->masks) throw PreconditionError("sample '" + s->id + "' has no masks; the mask streams are required");
    if (!s->masks->eyeball.same_shape(s->image) || !s->masks->iris.same_shape(s->image)) {
      throw InvalidArgument("sample '" + s->id + "' masks do not match the image shape");
    }
    img.push_back(&s->image);
    eb.push_back(&s->masks->eyeball);
    ir.push_back(&s->masks->iris);
    if (with_labels) {
      if (!s->gaze) throw PreconditionError("sample '" + s->id + "' has no gaze label");
      target.push_back(static_cast<float>(s->gaze->pitch));
      target.push_back(static_cast<float>(s->gaze->yaw));
    }
  }
  StreamBatch b{to_tensor(img), to_tensor(eb), to_tensor(ir), {}};
  if (with_labels) b.target = torch::from_blob(target.data(), {static_cast<std::int64_t>(samples.size()), 2}).clone();
  return b;
}

/// Maps a raw network output onto valid angle ranges.
inline GazeAngles to_angles(double pitch, double yaw) {
  if (!std::isfinite(pitch) || !std::isfinite(yaw)) throw TrainingError("non-finite gaze prediction");
  pitch = std::clamp(pitch, -kPi / 2, kPi / 2);
  yaw = std::remainder(yaw, 2 * kPi);
  if (yaw <= -kPi) yaw += 2 * kPi;
  return {pitch, yaw};
}

inline std::vector<GazeAngles> predict(GazeModel& model, const std::vector<const EyeSample*>& samples, int batch = 128) {
  torch::NoGradGuard no_grad;
  model.net->eval();
  std::vector<GazeAngles> out;
  out.reserve(samples.size());
  for (std::size_t s = 0; s < samples.size(); s += static_cast<std::size_t>(batch)) {
    const std::size_t e = std::min(samples.size(), s + static_cast<std::size_t>(batch));
    std::vector<const EyeSample*> chunk(samples.begin() + s, samples.begin() + e);
    const StreamBatch b = make_stream_batch(chunk, false);
    const auto y = model.net->forward(b.image, b.eyeball, b.iris).to(torch::kDouble).contiguous();
    const double* p = y.data_ptr<double>();
    for (std::int64_t i = 0; i < y.size(0); ++i) out.push_back(to_angles(p[2 * i], p[2 * i + 1]));
  }
  return out;
}

inline std::vector<GazeAngles> predict(GazeModel& model, const std::vector<EyeSample>& samples) {
  std::vector<const EyeSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return predict(model, ptrs);
}

/// Single-sample inference.
inline GazeAngles forward(GazeModel& model, const EyeSample& sample) { return predict(model, {&sample}).front(); }

inline double mean_angular_error(const std::vector<GazeAngles>& pred, const std::vector<const EyeSample*>& samples) {
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += angular_error_deg(pred[i], *samples[i]->gaze);
  return sum / static_cast<double>(pred.size());
}

struct GazeEpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_error_deg = 0.0;  // monitored metric (training error when no val set)
  bool eye_encoder_frozen = false;
};

struct GazeTrainResult {
  GazeModel model;
  std::vector<GazeEpochLog> log;
  int best_epoch = -1;
  std::vector<std::string> trained_ids;  // every sample id used in a gradient step
};

struct GazeTrainHooks {
  std::function<void(int epoch, GazeModel&)> on_epoch_start;
  std::function<void(const GazeEpochLog&, GazeModel&)> on_epoch_end;
};

inline GazeModel make_gaze_model(const GazeTrainConfig& cfg) {
  torch::manual_seed(derive_seed(cfg.seed, "gaze-init"));
  return {cfg, MultistreamModel(EyeEncoderOptions{}), false};
}

/// Supervised training with the freeze-then-fine-tune schedule. When an SSL
/// encoder is supplied it initializes the eye stream and receives no updates
/// during the first `frozen_epochs` epochs.
inline GazeTrainResult train_gaze(const std::vector<const EyeSample*>& train, const std::vector<const EyeSample*>& val,
                                  const EyeEncoder* ssl_encoder, const GazeTrainConfig& cfg,
                                  const GazeTrainHooks& hooks = {}) {
  validate(cfg);
  if (train.empty()) throw PreconditionError("gaze training set is empty");
  for (const auto* set : {&train, &val}) {
    for (const auto* s : *set) {
      if (!s->gaze) throw PreconditionError("gaze training sample '" + s->id + "' has no label");
      if (!s->masks) throw PreconditionError("gaze training sample '" + s->id + "' has no masks");
    }
  }
  GazeTrainResult result;
  result.model = make_gaze_model(cfg);
  auto& net = result.model.net;
  if (ssl_encoder) {
    torch::NoGradGuard no_grad;
    auto dst = net->encoder_eye->parameters();
    auto src = (*ssl_encoder)->parameters();
    if (dst.size() != src.size()) throw DataError("SSL encoder architecture does not match the eye stream");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].sizes() != src[i].sizes()) throw DataError("SSL encoder architecture does not match the eye stream");
      dst[i].copy_(src[i]);
    }
    result.model.ssl_init = true;
  }
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));
  PlateauScheduler plateau(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold);

  std::vector<torch::Tensor> best_state;
  double best_metric = std::numeric_limits<double>::infinity();
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::vector<char> used(n, 0);
  for (int epoch = 0; epoch < cfg.epochs_total; ++epoch) {
    const bool frozen = ssl_encoder && epoch < cfg.frozen_epochs;
    for (auto& p : net->encoder_eye->parameters()) p.set_requires_grad(!frozen);
    set_learning_rate(opt, plateau.lr());
    if (hooks.on_epoch_start) hooks.on_epoch_start(epoch, result.model);

    net->train();
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = make_rng(cfg.seed, "gaze-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle(order, shuffle_rng);
    double sse = 0.0;
    for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(n, s + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const EyeSample*> batch;
      for (std::size_t i = s; i < e; ++i) {
        batch.push_back(train[order[i]]);
        used[order[i]] = 1;
      }
      const StreamBatch b = make_stream_batch(batch, true);
      auto loss = torch::mse_loss(net->forward(b.image, b.eyeball, b.iris), b.target);
      opt.zero_grad(true);
      loss.backward();
      opt.step();
      const double l = loss.item<double>();
      if (!std::isfinite(l)) throw TrainingError("gaze loss diverged at epoch " + std::to_string(epoch));
      sse += l * static_cast<double>(e - s);
    }

    GazeEpochLog entry{epoch, plateau.lr(), sse / static_cast<double>(n), 0.0, frozen};
    const auto& monitor = val.empty() ? train : val;
    entry.val_error_deg = mean_angular_error(predict(result.model, monitor), monitor);
    if (entry.val_error_deg < best_metric) {
      best_metric = entry.val_error_deg;
      best_state = snapshot_parameters(*net);
      result.best_epoch = epoch;
    }
    plateau.step(entry.val_error_deg);
    result.log.push_back(entry);
    if (hooks.on_epoch_end) hooks.on_epoch_end(entry, result.model);
  }
  for (auto& p : net->parameters()) p.set_requires_grad(true);
  if (!best_state.empty()) {
    torch::NoGradGuard no_grad;
    auto params = net->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(best_state[i]);
  }
  net->eval();
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i]) result.trained_ids.push_back(train[i]->id);
  }
  return result;
}

inline void save_gaze_model(const std::filesystem::path& path, const GazeModel& m) {
  const auto& enc = m.net->encoder_eye->options;
  nlohmann::json cfg = {{"gaze", m.config},
                        {"ssl_init", m.ssl_init},
                        {"encoder", {{"in_channels", enc.in_channels}, {"widths", enc.widths}}},
                        {"head_units", {256, 128, 2}}};
  save_module(path, "gaze", cfg, *m.net);
}

inline GazeModel load_gaze_model(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path, "gaze");
  GazeModel m;
  EyeEncoderOptions enc;
  try {
    m.config = ck.config.at("gaze").get<GazeTrainConfig>();
    m.ssl_init = ck.config.at("ssl_init").get<bool>();
    enc.in_channels = ck.config.at("encoder").at("in_channels").get<std::int64_t>();
    enc.widths = ck.config.at("encoder").at("widths").get<std::vector<std::int64_t>>();
    if (ck.config.at("head_units") != nlohmann::json({256, 128, 2})) throw DataError("unsupported head layout");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("gaze checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("gaze checkpoint config: ") + e.what());
  }
  m.net = MultistreamModel(enc);
  load_into(*m.net, ck);
  m.net->eval();
  return m;
}

/// Fills in masks for samples that lack them (or for all samples when
/// `force` is set) using the segmenter.
inline void attach_segmenter_masks(std::vector<EyeSample>& samples, SegmenterModel& seg, bool force = false) {
  std::vector<std::size_t> todo;
  std::vector<const Image*> imgs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (force || !samples[i].masks) {
      todo.push_back(i);
      imgs.push_back(&samples[i].image);
    }
  }
  if (todo.empty()) return;
  const auto soft = segment_batch(seg, imgs);
  for (std::size_t k = 0; k < todo.size(); ++k) samples[todo[k]].masks = binarize(soft[k]);
}

struct PredictOptions {
  bool use_manifest_masks = true;  // bypass the segmenter when the manifest has masks
};

/// Runs the model over a manifest and writes JSON-lines predictions:
/// {"id", "pred_pitch_rad", "pred_yaw_rad"[, "gt_pitch_rad", "gt_yaw_rad", "error_deg"]}.
/// Returns the number of samples routed through the segmenter.
inline std::size_t predict_batch(GazeModel& model, const Manifest& manifest, SegmenterModel* seg,
                                 const std::filesystem::path& out_path, const PredictOptions& opt = {}) {
  std::vector<EyeSample> samples = load_samples(manifest);
  std::size_t segmented = 0;
  for (auto& s : samples) {
    if (!opt.use_manifest_masks) s.masks.reset();
    if (!s.masks) ++segmented;
  }
  if (segmented > 0) {
    if (!seg) throw PreconditionError("manifest lacks masks for " + std::to_string(segmented) + " sample(s) and no segmenter was given");
    attach_segmenter_masks(samples, *seg);
  }
  const auto pred = predict(model, samples);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write predictions: " + out_path.string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    nlohmann::json j = {{"id", samples[i].id}, {"pred_pitch_rad", pred[i].pitch}, {"pred_yaw_rad", pred[i].yaw}};
    if (samples[i].gaze) {
      j["gt_pitch_rad"] = samples[i].gaze->pitch;
      j["gt_yaw_rad"] = samples[i].gaze->yaw;
      j["error_deg"] = angular_error_deg(pred[i], *samples[i].gaze);
    }
    out << j.dump() << '\n';
  }
  return segmented;
}

}  // namespace gazekit
