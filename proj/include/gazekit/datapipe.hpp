#pragma once

// Preprocessing to the 36x60 network input, sample loading and
// subject-aware split construction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gazekit/augment.hpp"
#include "gazekit/error.hpp"
#include "gazekit/image.hpp"
#include "gazekit/manifest.hpp"
#include "gazekit/png_io.hpp"
#include "gazekit/rng.hpp"
#include "gazekit/synth_eye.hpp"

namespace gazekit {

struct EyeSample {
  std::string id;
  Image image;                     // kEyeHeight x kEyeWidth, [0, 1]
  std::optional<MaskPair> masks;
  std::optional<GazeAngles> gaze;
  std::string subject_id;
  fs::path source_path;
};

/// 256-bin histogram equalization of 8-bit levels. A single occupied bin
/// maps to itself.
inline std::array<std::uint8_t, 256> equalization_lut(std::span<const std::uint8_t> levels) {
  std::array<std::size_t, 256> hist{};
  for (auto v : levels) ++hist[v];
  std::array<std::uint8_t, 256> lut{};
  std::size_t cdf = 0;
  const auto first = std::find_if(hist.begin(), hist.end(), [](std::size_t c) { return c != 0; });
  const std::size_t cdf_min = first == hist.end() ? 0 : *first;
  const std::size_t total = levels.size();
  if (total == 0 || cdf_min == total) {
    for (int v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
    return lut;
  }
  for (int v = 0; v < 256; ++v) {
    cdf += hist[v];
    const double scaled = cdf <= cdf_min ? 0.0
                                         : static_cast<double>(cdf - cdf_min) * 255.0 / static_cast<double>(total - cdf_min);
    lut[v] = static_cast<std::uint8_t>(std::lround(scaled));
  }
  return lut;
}

inline Image equalize_histogram(const Image& img) {
  std::vector<std::uint8_t> levels(img.size());
  std::transform(img.pixels().begin(), img.pixels().end(), levels.begin(), to_u8);
  const auto lut = equalization_lut(levels);
  Image out(img.height(), img.width());
  for (std::size_t i = 0; i < levels.size(); ++i) out.pixels()[i] = lut[levels[i]] / 255.0f;
  return out;
}

/// Luminance conversion of an 8-bit image (alpha ignored), scaled to [0, 1].
inline Image to_grayscale(const RawImage& raw) {
  if (raw.height <= 0 || raw.width <= 0 || raw.data.empty()) throw InvalidArgument("empty image");
  if (raw.channels != 1 && raw.channels != 3 && raw.channels != 4) throw InvalidArgument("unsupported channel count");
  if (raw.data.size() != static_cast<std::size_t>(raw.height) * raw.width * raw.channels) {
    throw InvalidArgument("raw image buffer size mismatch");
  }
  Image g(raw.height, raw.width);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::uint8_t* px = &raw.data[i * raw.channels];
    const double lum = raw.channels == 1 ? px[0] : 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    g.pixels()[i] = static_cast<float>(lum / 255.0);
  }
  return g;
}

/// grayscale -> bilinear resize to 36x60 -> histogram equalization.
inline Image preprocess(const RawImage& raw) {
  if (raw.height < 8 || raw.width < 8) throw InvalidArgument("input image must be at least 8x8");
  Image g = to_grayscale(raw);
  if (g.height() != kEyeHeight || g.width() != kEyeWidth) g = resize_bilinear(g, kEyeHeight, kEyeWidth);
  return equalize_histogram(g);
}

inline Image preprocess(const Image& gray) {
  if (gray.empty()) throw InvalidArgument("empty image");
  if (gray.height() < 8 || gray.width() < 8) throw InvalidArgument("input image must be at least 8x8");
  Image g = gray;
  if (g.height() != kEyeHeight || g.width() != kEyeWidth) g = resize_bilinear(g, kEyeHeight, kEyeWidth);
  return equalize_histogram(g);
}

inline Image load_mask(const fs::path& path) {
  Image m = png::read_gray(path);
  if (m.height() != kEyeHeight || m.width() != kEyeWidth) m = resize_bilinear(m, kEyeHeight, kEyeWidth);
  for (auto& v : m.pixels()) v = v >= 0.5f ? 1.0f : 0.0f;
  return m;
}

/// Reads and preprocesses the image (and masks, when present) of one record.
inline EyeSample load_sample(const Manifest& m, const ManifestRecord& r) {
  EyeSample s;
  s.id = r.id;
  s.source_path = m.resolve(r.image);
  s.image = preprocess(png::read(s.source_path));
  if (r.has_masks()) {
    MaskPair mp{load_mask(m.resolve(*r.eyeball_mask)), load_mask(m.resolve(*r.iris_mask))};
    s.masks = std::move(mp);
  }
  s.gaze = r.gaze;
  s.subject_id = r.subject_id;
  return s;
}

inline std::vector<EyeSample> load_samples(const Manifest& m) {
  std::vector<EyeSample> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) out.push_back(load_sample(m, r));
  return out;
}

/// Copy of `s` with an augmented image; masks, gaze and metadata untouched.
inline EyeSample augment_sample(const EyeSample& s, const AugmentSpec& spec, Rng& rng) {
  EyeSample out = s;
  out.image = apply_random(s.image, spec, rng);
  return out;
}

/// Writes preprocessed copies of every image plus `cache_index.jsonl`, a
/// manifest pointing at the cached images (masks and metadata carried over).
inline fs::path write_preprocessed_cache(const Manifest& m, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::vector<ManifestRecord> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    ManifestRecord c = r;
    c.image = "images/" + r.id + ".png";
    png::write(dir / c.image, preprocess(png::read(m.resolve(r.image))));
    if (r.has_masks()) {
      c.eyeball_mask = fs::relative(fs::absolute(m.resolve(*r.eyeball_mask)), fs::absolute(dir)).string();
      c.iris_mask = fs::relative(fs::absolute(m.resolve(*r.iris_mask)), fs::absolute(dir)).string();
    }
    out.push_back(std::move(c));
  }
  write_manifest(dir / "cache_index.jsonl", out);
  return dir / "cache_index.jsonl";
}

// ---------------------------------------------------------------------------
// Splits

enum class Protocol { kLoso, kKFold };

inline std::string to_string(Protocol p) { return p == Protocol::kLoso ? "loso" : "kfold"; }

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "loso" || s == "LOSO") return Protocol::kLoso;
  if (s == "kfold" || s == "KFOLD" || s == "5fold") return Protocol::kKFold;
  throw ConfigError("unknown protocol '" + s + "' (expected loso or kfold)");
}

struct Fold {
  std::vector<std::string> train_subjects;
  std::vector<std::string> test_subjects;

  friend bool operator==(const Fold&, const Fold&) = default;
};

struct SplitPlan {
  Protocol protocol = Protocol::kLoso;
  int k = 5;
  std::vector<Fold> folds;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

inline std::vector<std::string> distinct_subjects(std::span<const ManifestRecord> records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.subject_id);
  return {s.begin(), s.end()};
}

/// LOSO: one fold per subject (sorted order). KFOLD: subjects shuffled by
/// `seed` and dealt into k contiguous groups whose sizes differ by at most one.
inline SplitPlan make_splits(std::span<const ManifestRecord> records, Protocol protocol, int k, std::uint64_t seed) {
  std::vector<std::string> subjects = distinct_subjects(records);
  SplitPlan plan;
  plan.protocol = protocol;
  std::vector<std::vector<std::string>> groups;
  if (protocol == Protocol::kLoso) {
    if (subjects.size() < 2) throw PreconditionError("LOSO needs at least 2 distinct subjects");
    plan.k = static_cast<int>(subjects.size());
    for (const auto& s : subjects) groups.push_back({s});
  } else {
    if (k < 2) throw PreconditionError("k-fold needs k >= 2");
    if (subjects.size() < static_cast<std::size_t>(k)) {
      throw PreconditionError("k-fold with k=" + std::to_string(k) + " needs at least k subjects, got " +
                              std::to_string(subjects.size()));
    }
    plan.k = k;
    Rng rng(derive_seed(seed, "kfold"));
    shuffle(subjects, rng);
    const std::size_t n = subjects.size(), base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
      const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
      std::vector<std::string> g(subjects.begin() + pos, subjects.begin() + pos + len);
      std::sort(g.begin(), g.end());
      groups.push_back(std::move(g));
      pos += len;
    }
    std::sort(subjects.begin(), subjects.end());
  }
  for (const auto& test : groups) {
    Fold f;
    f.test_subjects = test;
    for (const auto& s : subjects) {
      if (std::find(test.begin(), test.end(), s) == test.end()) f.train_subjects.push_back(s);
    }
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

/// Indices of records whose subject is in `subjects`.
inline std::vector<std::size_t> select_subjects(std::span<const ManifestRecord> records,
                                                const std::vector<std::string>& subjects) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (std::find(subjects.begin(), subjects.end(), records[i].subject_id) != subjects.end()) idx.push_back(i);
  }
  return idx;
}

/// Picks ceil(fraction * N) of the given records, stratified by subject.
/// Per-subject quotas are floor(fraction * n_s) with the remainder handed to
/// the largest fractional parts. Returns positions into `records`, ascending.
inline std::vector<std::size_t> subsample_labels(std::span<const ManifestRecord> records, double fraction,
                                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("label fraction must be in (0, 1]");
  if (records.empty()) throw PreconditionError("cannot subsample an empty training set");
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < records.size(); ++i) by_subject[records[i].subject_id].push_back(i);

  const auto target = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(records.size()) - 1e-9));
  struct Quota {
    const std::string* subject;
    std::size_t take;
    double frac;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [subject, idx] : by_subject) {
    const double exact = fraction * static_cast<double>(idx.size());
    const auto base = static_cast<std::size_t>(std::floor(exact + 1e-9));
    quotas.push_back({&subject, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return quotas[a].frac > quotas[b].frac; });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i, ++assigned) ++quotas[order[i]].take;

  std::vector<std::size_t> picked;
  for (const auto& q : quotas) {
    std::vector<std::size_t> idx = by_subject[*q.subject];
    Rng rng(derive_seed(seed, "labels:" + *q.subject));
    shuffle(idx, rng);
    picked.insert(picked.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(q.take, idx.size())));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

/// In-memory equivalent of loading sample `index` written by
/// generate_dataset(opt): same 8-bit quantization and preprocessing.
inline EyeSample synthetic_sample(const SynthOptions& opt, int index) {
  const int subject = index % opt.subjects;
  const EyeSceneParams p = sample_subject_scene(opt.seed, subject, static_cast<std::uint64_t>(index));
  const RenderedEye eye = render_eye(p, opt.height, opt.width);
  MaskPair masks = landmarks_to_masks(eye.landmarks, opt.height, opt.width).masks;
  EyeSample s;
  char id[16];
  std::snprintf(id, sizeof id, "%06d", index);
  s.id = id;
  s.image = preprocess(to_raw(eye.image));
  if (opt.height != kEyeHeight || opt.width != kEyeWidth) {
    for (Image* m : {&masks.eyeball, &masks.iris}) {
      *m = resize_bilinear(*m, kEyeHeight, kEyeWidth);
      for (auto& v : m->pixels()) v = v >= 0.5f ? 1.0f : 0.0f;
    }
  }
  s.masks = std::move(masks);
  s.gaze = p.gaze;
  s.subject_id = subject_name(subject);
  return s;
}

inline std::vector<EyeSample> synthetic_samples(const SynthOptions& opt) {
  std::vector<EyeSample> out;
  out.reserve(static_cast<std::size_t>(std::max(opt.count, 0)));
  for (int i = 0; i < opt.count; ++i) out.push_back(synthetic_sample(opt, i));
  return out;
}

}  // namespace gazekit
