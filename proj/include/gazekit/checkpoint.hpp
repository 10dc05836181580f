#pragma once

// Versioned checkpoint files:
//
//   "GZKCKPT\0"                      8-byte magic
//   u32 schema version
//   u32 + bytes                      kind ("segmenter", "encoder", "gaze")
//   u64 + bytes                      config JSON
//   u32 tensor count, then per tensor:
//     u32 + bytes name, u32 rank, i64 dims[rank], f32 data (little endian)
//
// Tensors are written in module registration order, so identical weights
// always produce identical bytes.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazekit/error.hpp"
#include "gazekit/rng.hpp"

namespace gazekit {

inline constexpr std::array<char, 8> kCheckpointMagic{'G', 'Z', 'K', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointSchema = 1;

struct NamedTensor {
  std::string name;
  torch::Tensor value;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::vector<NamedTensor> tensors;
};

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_string(std::ostream& out, const std::string& s, bool wide = false) {
  if (wide) {
    put<std::uint64_t>(out, s.size());
  } else {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  }
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated checkpoint");
  return v;
}

inline std::string get_string(std::istream& in, bool wide = false) {
  const std::uint64_t n = wide ? get<std::uint64_t>(in) : get<std::uint32_t>(in);
  if (n > (std::uint64_t{1} << 32)) throw DataError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("truncated checkpoint");
  return s;
}

}  // namespace detail

/// Parameters and buffers of `m`, in registration order.
inline std::vector<NamedTensor> module_tensors(const torch::nn::Module& m) {
  std::vector<NamedTensor> out;
  for (const auto& p : m.named_parameters()) out.push_back({p.key(), p.value()});
  for (const auto& b : m.named_buffers()) out.push_back({"buffer:" + b.key(), b.value()});
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put(out, kCheckpointSchema);
  detail::put_string(out, ck.kind);
  detail::put_string(out, ck.config.dump(), true);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, value] : ck.tensors) {
    const auto t = value.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    detail::put_string(out, name);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) detail::put<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw DataError("write error: " + path.string());
}

inline Checkpoint save_module(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
                              const torch::nn::Module& m) {
  Checkpoint ck{kind, config, module_tensors(m)};
  save_checkpoint(path, ck);
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw DataError("not a gazekit checkpoint: " + path.string());
  }
  const auto version = detail::get<std::uint32_t>(in);
  if (version != kCheckpointSchema) {
    throw DataError("unsupported checkpoint schema " + std::to_string(version) + " in " + path.string());
  }
  Checkpoint ck;
  ck.kind = detail::get_string(in);
  if (!expected_kind.empty() && ck.kind != expected_kind) {
    throw DataError("checkpoint " + path.string() + " holds a '" + ck.kind + "' model, expected '" + expected_kind + "'");
  }
  try {
    ck.config = nlohmann::json::parse(detail::get_string(in, true));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint config: ") + e.what());
  }
  const auto count = detail::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = detail::get_string(in);
    const auto rank = detail::get<std::uint32_t>(in);
    if (rank > 8) throw DataError("corrupt checkpoint tensor rank");
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = detail::get<std::int64_t>(in);
    nt.value = torch::empty(dims, torch::kFloat32);
    const auto bytes = static_cast<std::streamsize>(nt.value.numel() * sizeof(float));
    if (!in.read(reinterpret_cast<char*>(nt.value.data_ptr<float>()), bytes)) throw DataError("truncated checkpoint");
    ck.tensors.push_back(std::move(nt));
  }
  return ck;
}

/// Copies checkpoint tensors into `m`. Names and shapes must match exactly.
inline void load_into(torch::nn::Module& m, const Checkpoint& ck) {
  auto targets = module_tensors(m);
  if (targets.size() != ck.tensors.size()) {
    throw DataError("checkpoint/config mismatch: " + std::to_string(ck.tensors.size()) + " tensors in file, model has " +
                    std::to_string(targets.size()));
  }
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& src = ck.tensors[i];
    auto& dst = targets[i];
    if (src.name != dst.name || src.value.sizes() != dst.value.sizes()) {
      throw DataError("checkpoint/config mismatch at tensor '" + src.name + "' (model expects '" + dst.name + "')");
    }
    dst.value.copy_(src.value);
  }
}

/// FNV-1a over the file bytes, as 16 hex digits.
inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

}  // namespace gazekit
