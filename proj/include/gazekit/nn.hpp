#pragma once

// Shared network pieces: the eye encoder used by every stream, the
// contrastive projection head, and Image <-> tensor conversion.

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "gazekit/error.hpp"
#include "gazekit/image.hpp"

namespace gazekit {

/// Stacks equally-shaped images into a [B, 1, H, W] float tensor.
inline torch::Tensor to_tensor(std::span<const Image* const> images) {
  if (images.empty()) throw InvalidArgument("no images to stack");
  const int h = images.front()->height(), w = images.front()->width();
  auto t = torch::empty({static_cast<std::int64_t>(images.size()), 1, h, w}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  for (const Image* img : images) {
    if (img->height() != h || img->width() != w) throw InvalidArgument("images in a batch must share a shape");
    std::copy(img->pixels().begin(), img->pixels().end(), dst);
    dst += img->size();
  }
  return t;
}

inline torch::Tensor to_tensor(const Image& img) {
  const Image* p = &img;
  return to_tensor(std::span<const Image* const>(&p, 1));
}

/// Channel `c` of sample `b` of a [B, C, H, W] tensor.
inline Image to_image(const torch::Tensor& t, std::int64_t b, std::int64_t c) {
  const auto x = t.index({b, c}).to(torch::kFloat32).contiguous();
  const int h = static_cast<int>(x.size(0)), w = static_cast<int>(x.size(1));
  return Image(h, w, std::vector<float>(x.data_ptr<float>(), x.data_ptr<float>() + x.numel()));
}

struct EyeEncoderOptions {
  std::int64_t in_channels = 1;
  std::vector<std::int64_t> widths{32, 64, 128};

  std::int64_t feature_dim() const { return widths.back(); }
};

/// Three (3x3 conv -> ReLU -> 2x max-pool) stages followed by global average
/// pooling; 36x60 input gives a 128-d feature.
struct EyeEncoderImpl : torch::nn::Module {
  explicit EyeEncoderImpl(EyeEncoderOptions opt = {}) : options(std::move(opt)) {
    std::int64_t in = options.in_channels;
    for (std::size_t i = 0; i < options.widths.size(); ++i) {
      convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, options.widths[i], 3).padding(1)));
      in = options.widths[i];
    }
    register_module("convs", convs);
  }

  torch::Tensor forward(torch::Tensor x) {
    for (auto& m : *convs) {
      x = torch::max_pool2d(torch::relu(m->as<torch::nn::Conv2d>()->forward(x)), 2);
    }
    return x.mean({2, 3});
  }

  EyeEncoderOptions options;
  torch::nn::ModuleList convs;
};
TORCH_MODULE(EyeEncoder);

/// 128 -> 128 -> 64 MLP used only during contrastive pretraining.
struct ProjectionHeadImpl : torch::nn::Module {
  ProjectionHeadImpl(std::int64_t in = 128, std::int64_t hidden = 128, std::int64_t out = 64)
      : fc1(register_module("fc1", torch::nn::Linear(in, hidden))),
        fc2(register_module("fc2", torch::nn::Linear(hidden, out))) {}

  torch::Tensor forward(torch::Tensor x) { return fc2(torch::relu(fc1(x))); }

  torch::nn::Linear fc1, fc2;
};
TORCH_MODULE(ProjectionHead);

/// Flattened copy of every parameter, for exact before/after comparisons.
inline std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  return out;
}

inline bool parameters_equal(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!torch::equal(a[i], b[i])) return false;
  }
  return true;
}

inline void set_learning_rate(torch::optim::Adam& opt, double lr) {
  for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
}

}  // namespace gazekit
