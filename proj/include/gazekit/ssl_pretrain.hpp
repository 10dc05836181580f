#pragma once

// Contrastive pretraining of the eye-image encoder (NT-Xent over in-batch
// positive pairs).

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazekit/augment.hpp"
#include "gazekit/checkpoint.hpp"
#include "gazekit/error.hpp"
#include "gazekit/geometry.hpp"
#include "gazekit/image.hpp"
#include "gazekit/nn.hpp"
#include "gazekit/rng.hpp"

namespace gazekit {

inline constexpr double kContrastiveTemperature = 0.1;

/// 2N unit embeddings; row i and row i + N are the two views of one image.
struct ContrastiveBatch {
  torch::Tensor embeddings;  // [2N, D]
  double temperature = kContrastiveTemperature;

  std::int64_t pairs() const { return embeddings.size(0) / 2; }
};

/// Index of the positive partner of every row.
inline torch::Tensor positive_index(std::int64_t two_n) {
  const std::int64_t n = two_n / 2;
  return torch::cat({torch::arange(n, two_n), torch::arange(0, n)});
}

/// Mean over all 2N anchors of
///   -log( exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau) ),
/// with s the cosine similarity of unit embeddings.
inline torch::Tensor nt_xent_loss(const ContrastiveBatch& batch) {
  const auto& z = batch.embeddings;
  if (!z.defined() || z.dim() != 2) throw InvalidArgument("embeddings must be a [2N, D] matrix");
  const std::int64_t two_n = z.size(0);
  if (two_n < 2 || two_n % 2 != 0) throw InvalidArgument("need an even number (>= 2) of embeddings");
  if (!(batch.temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  {
    torch::NoGradGuard no_grad;
    const double tol = z.scalar_type() == torch::kDouble ? 1e-6 : 1e-5;
    const double dev = (z.norm(2, 1) - 1.0).abs().max().item<double>();
    if (!(dev <= tol)) throw InvalidArgument("embeddings must be unit length (max deviation " + std::to_string(dev) + ")");
  }
  const auto sim = torch::mm(z, z.t()) / batch.temperature;
  const auto self = torch::eye(two_n, torch::TensorOptions().dtype(torch::kBool));
  const auto logits = sim.masked_fill(self, -std::numeric_limits<double>::infinity());
  const auto pos = positive_index(two_n).unsqueeze(1);
  const auto positive = sim.gather(1, pos).squeeze(1);
  return (torch::logsumexp(logits, 1) - positive).mean();
}

/// Loss on raw (unnormalized) projections: L2-normalizes rows first.
inline torch::Tensor nt_xent_loss(const torch::Tensor& projections, double temperature = kContrastiveTemperature) {
  return nt_xent_loss(ContrastiveBatch{torch::nn::functional::normalize(
                                           projections, torch::nn::functional::NormalizeFuncOptions().dim(1)),
                                       temperature});
}

/// Two independent augmentations of one image. Only the image is touched.
inline std::pair<Image, Image> make_pair(const Image& image, const AugmentSpec& spec, Rng& rng) {
  Image a = apply_random(image, spec, rng);
  Image b = apply_random(image, spec, rng);
  return {std::move(a), std::move(b)};
}

inline double cosine_lr(double base, int epoch, int total) {
  if (total <= 0) return base;
  return base * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(epoch) / total));
}

struct SslConfig {
  int epochs = 50;
  double lr = 1e-4;
  int batch_size = 128;
  double temperature = kContrastiveTemperature;
  bool projection_head = true;
  AugmentSpec augment;
  std::uint64_t seed = 0;

  friend bool operator==(const SslConfig&, const SslConfig&) = default;
};

inline void to_json(nlohmann::json& j, const SslConfig& c) {
  j = {{"epochs", c.epochs},       {"lr", c.lr},
       {"batch_size", c.batch_size}, {"temperature", c.temperature},
       {"projection_head", c.projection_head}, {"augment", c.augment},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SslConfig& c) {
  SslConfig d;
  d.epochs = j.value("epochs", d.epochs);
  d.lr = j.value("lr", d.lr);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.temperature = j.value("temperature", d.temperature);
  d.projection_head = j.value("projection_head", d.projection_head);
  if (j.contains("augment")) d.augment = j.at("augment").get<AugmentSpec>();
  d.seed = j.value("seed", d.seed);
  c = d;
}

struct SslEpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct SslResult {
  EyeEncoder encoder{nullptr};
  std::vector<SslEpochLog> log;
};

/// Fresh encoder with weights drawn from a seed-derived generator.
inline EyeEncoder make_encoder(std::uint64_t seed, std::string_view label) {
  torch::manual_seed(derive_seed(seed, label));
  return EyeEncoder(EyeEncoderOptions{});
}

inline SslResult pretrain(const std::vector<Image>& images, const SslConfig& cfg,
                          const std::function<void(const SslEpochLog&)>& on_epoch = {}) {
  if (cfg.batch_size < 2) throw PreconditionError("contrastive batch size must be at least 2");
  if (images.size() < 2) throw PreconditionError("contrastive pretraining needs at least 2 images");
  if (cfg.epochs < 0) throw InvalidArgument("epochs must be non-negative");
  validate(cfg.augment);

  SslResult result;
  result.encoder = make_encoder(cfg.seed, "ssl-encoder");
  torch::manual_seed(derive_seed(cfg.seed, "ssl-head"));
  ProjectionHead head(result.encoder->options.feature_dim(), 128, 64);

  std::vector<torch::Tensor> params = result.encoder->parameters();
  if (cfg.projection_head) {
    for (auto& p : head->parameters()) params.push_back(p);
  }
  torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.lr));
  result.encoder->train();

  const std::size_t n = images.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    set_learning_rate(opt, lr);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = make_rng(cfg.seed, "ssl-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle(order, shuffle_rng);

    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start + 2 <= n; start += batch) {
      const std::size_t end = std::min(start + batch, n);
      if (end - start < 2) break;
      std::vector<Image> views_a, views_b;
      for (std::size_t i = start; i < end; ++i) {
        Rng view_rng = make_rng(cfg.seed, "ssl-view", static_cast<std::uint64_t>(epoch) * n + order[i]);
        auto [a, b] = make_pair(images[order[i]], cfg.augment, view_rng);
        views_a.push_back(std::move(a));
        views_b.push_back(std::move(b));
      }
      std::vector<const Image*> ptrs;
      for (const auto& v : views_a) ptrs.push_back(&v);
      for (const auto& v : views_b) ptrs.push_back(&v);
      const auto x = to_tensor(ptrs);
      auto h = result.encoder->forward(x);
      if (cfg.projection_head) h = head->forward(h);
      auto loss = nt_xent_loss(h, cfg.temperature);
      opt.zero_grad();
      loss.backward();
      opt.step();
      const double l = loss.item<double>();
      if (!std::isfinite(l)) throw TrainingError("contrastive loss diverged at epoch " + std::to_string(epoch));
      loss_sum += l;
      ++steps;
    }
    SslEpochLog entry{epoch, lr, steps ? loss_sum / steps : 0.0};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.encoder->eval();
  return result;
}

inline nlohmann::json encoder_config_json(const EyeEncoder& enc) {
  return {{"in_channels", enc->options.in_channels}, {"widths", enc->options.widths}};
}

inline void save_encoder(const std::filesystem::path& path, const EyeEncoder& enc, const nlohmann::json& extra = {}) {
  nlohmann::json cfg = {{"encoder", encoder_config_json(enc)}};
  if (!extra.is_null()) cfg["training"] = extra;
  save_module(path, "encoder", cfg, *enc);
}

inline EyeEncoder load_encoder(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path, "encoder");
  EyeEncoderOptions opt;
  try {
    opt.in_channels = ck.config.at("encoder").at("in_channels").get<std::int64_t>();
    opt.widths = ck.config.at("encoder").at("widths").get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("encoder checkpoint config: ") + e.what());
  }
  EyeEncoder enc(opt);
  load_into(*enc, ck);
  enc->eval();
  return enc;
}

/// Encoder features for a set of images, inference mode.
inline torch::Tensor encode(EyeEncoder& enc, const std::vector<Image>& images) {
  torch::NoGradGuard no_grad;
  enc->eval();
  std::vector<const Image*> ptrs;
  for (const auto& i : images) ptrs.push_back(&i);
  return enc->forward(to_tensor(ptrs));
}

}  // namespace gazekit
