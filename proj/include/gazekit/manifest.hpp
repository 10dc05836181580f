#pragma once

// JSON-lines sample manifests shared by dataset generation, training and
// prediction. One record per line:
//
//   {"image": "...", "eyeball_mask": "...", "iris_mask": "...",
//    "pitch_rad": 0.1, "yaw_rad": -0.2, "subject_id": "s00", ...}
//
// Paths are relative to the manifest's directory. Mask and gaze fields are
// optional but come in pairs. Unknown fields are kept in `extra` and written
// back unchanged.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazekit/error.hpp"
#include "gazekit/geometry.hpp"

namespace gazekit {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct ManifestRecord {
  std::string id;
  std::string image;
  std::optional<std::string> eyeball_mask;
  std::optional<std::string> iris_mask;
  std::optional<GazeAngles> gaze;
  std::string subject_id;
  json extra = json::object();

  bool has_masks() const { return eyeball_mask.has_value() && iris_mask.has_value(); }
  bool has_gaze() const { return gaze.has_value(); }

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct Manifest {
  fs::path base_dir;
  std::vector<ManifestRecord> records;

  fs::path resolve(const std::string& rel) const { return base_dir / rel; }
};

inline json to_json(const ManifestRecord& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  if (!r.id.empty()) j["id"] = r.id;
  j["image"] = r.image;
  if (r.eyeball_mask) j["eyeball_mask"] = *r.eyeball_mask;
  if (r.iris_mask) j["iris_mask"] = *r.iris_mask;
  if (r.gaze) {
    j["pitch_rad"] = r.gaze->pitch;
    j["yaw_rad"] = r.gaze->yaw;
  }
  j["subject_id"] = r.subject_id;
  return j;
}

/// Parses and schema-checks one record. Throws DataError with a plain reason.
inline ManifestRecord record_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  ManifestRecord r;
  auto str_field = [&](const char* key, bool required) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) throw DataError(std::string("missing field '") + key + "'");
      return std::nullopt;
    }
    if (!it->is_string()) throw DataError(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  auto num_field = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw DataError(std::string("field '") + key + "' must be a number");
    return it->get<double>();
  };
  r.image = *str_field("image", true);
  r.subject_id = *str_field("subject_id", true);
  r.id = str_field("id", false).value_or("");
  r.eyeball_mask = str_field("eyeball_mask", false);
  r.iris_mask = str_field("iris_mask", false);
  if (r.eyeball_mask.has_value() != r.iris_mask.has_value()) {
    throw DataError("eyeball_mask and iris_mask must be given together");
  }
  const auto pitch = num_field("pitch_rad");
  const auto yaw = num_field("yaw_rad");
  if (pitch.has_value() != yaw.has_value()) throw DataError("pitch_rad and yaw_rad must be given together");
  if (pitch) {
    GazeAngles g{*pitch, *yaw};
    try {
      validate(g);
    } catch (const InvalidArgument& e) {
      throw DataError(e.what());
    }
    r.gaze = g;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"id", "image", "eyeball_mask", "iris_mask", "pitch_rad", "yaw_rad", "subject_id"};
    if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) r.extra[it.key()] = it.value();
  }
  return r;
}

/// Loads a manifest. Image data is not read here; see datapipe load_sample().
/// When `check_files` is set every referenced file must exist.
inline Manifest load_manifest(const fs::path& path, bool check_files = true) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ManifestRecord r = record_from_json(json::parse(line));
      if (r.id.empty()) r.id = std::to_string(m.records.size());
      m.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (check_files) {
    std::vector<std::string> missing;
    for (const auto& r : m.records) {
      for (const auto* p : {&r.image, r.eyeball_mask ? &*r.eyeball_mask : nullptr, r.iris_mask ? &*r.iris_mask : nullptr}) {
        if (p && !fs::exists(m.resolve(*p))) missing.push_back(m.resolve(*p).string());
      }
    }
    if (!missing.empty()) {
      std::ostringstream msg;
      msg << missing.size() << " file(s) referenced by " << path.string() << " not found:";
      for (const auto& p : missing) msg << "\n  " << p;
      throw DataError(msg.str());
    }
  }
  return m;
}

inline void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw DataError("write error: " + path.string());
}

}  // namespace gazekit
