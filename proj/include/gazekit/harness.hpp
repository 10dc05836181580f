#pragma once

// Experiment orchestration: cross-validated gaze runs (LOSO or k-fold),
// label-fraction ablation, JSON/Markdown reports and plots.

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazekit/datapipe.hpp"
#include "gazekit/error.hpp"
#include "gazekit/gaze_estimator.hpp"
#include "gazekit/plot.hpp"
#include "gazekit/segmenter.hpp"
#include "gazekit/ssl_pretrain.hpp"

namespace gazekit {

inline constexpr int kReportSchema = 1;

struct ExperimentConfig {
  fs::path manifest;                        // labeled samples (masks from the manifest or the segmenter)
  std::optional<fs::path> ssl_manifest;     // unlabeled pretraining images; defaults to `manifest`
  std::optional<fs::path> segmenter_ckpt;   // supplies masks for records without them
  fs::path out_dir = "runs/experiment";
  Protocol protocol = Protocol::kLoso;
  int k = 5;
  double label_fraction = 1.0;
  std::vector<double> ablation_fractions{1.0, 0.75, 0.5, 0.25};
  bool use_ssl = false;
  bool strict_ssl = true;  // pretrain per fold on that fold's training subjects only
  std::vector<std::uint64_t> seeds{0};
  double val_fraction = 0.1;
  bool save_checkpoints = true;
  SslConfig ssl;
  GazeTrainConfig gaze;
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"manifest", c.manifest.string()},
       {"out_dir", c.out_dir.string()},
       {"protocol", to_string(c.protocol)},
       {"k", c.k},
       {"label_fraction", c.label_fraction},
       {"ablation_fractions", c.ablation_fractions},
       {"use_ssl", c.use_ssl},
       {"strict_ssl", c.strict_ssl},
       {"seeds", c.seeds},
       {"val_fraction", c.val_fraction},
       {"save_checkpoints", c.save_checkpoints},
       {"ssl", c.ssl},
       {"gaze", c.gaze}};
  j["ssl_manifest"] = c.ssl_manifest ? nlohmann::json(c.ssl_manifest->string()) : nlohmann::json();
  j["segmenter_ckpt"] = c.segmenter_ckpt ? nlohmann::json(c.segmenter_ckpt->string()) : nlohmann::json();
}

/// Field-level checks that do not touch the filesystem.
inline void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (!(c.label_fraction > 0.0 && c.label_fraction <= 1.0)) throw ConfigError("label_fraction must be in (0, 1]");
  for (double f : c.ablation_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("ablation fractions must be in (0, 1]");
  }
  if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
  if (c.protocol == Protocol::kKFold && c.k < 2) throw ConfigError("k-fold needs k >= 2");
  validate(c.gaze);
  validate(c.ssl.augment);
  if (c.use_ssl && c.ssl.batch_size < 2) throw ConfigError("contrastive batch size must be at least 2");
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  try {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    if (j.contains("manifest")) d.manifest = j.at("manifest").get<std::string>();
    if (j.contains("ssl_manifest") && !j.at("ssl_manifest").is_null()) d.ssl_manifest = j.at("ssl_manifest").get<std::string>();
    if (j.contains("segmenter_ckpt") && !j.at("segmenter_ckpt").is_null()) {
      d.segmenter_ckpt = j.at("segmenter_ckpt").get<std::string>();
    }
    if (j.contains("out_dir")) d.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("protocol")) d.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    d.k = j.value("k", d.k);
    d.label_fraction = j.value("label_fraction", d.label_fraction);
    d.ablation_fractions = j.value("ablation_fractions", d.ablation_fractions);
    d.use_ssl = j.value("use_ssl", d.use_ssl);
    d.strict_ssl = j.value("strict_ssl", d.strict_ssl);
    d.seeds = j.value("seeds", d.seeds);
    d.val_fraction = j.value("val_fraction", d.val_fraction);
    d.save_checkpoints = j.value("save_checkpoints", d.save_checkpoints);
    if (j.contains("ssl")) d.ssl = j.at("ssl").get<SslConfig>();
    if (j.contains("gaze")) d.gaze = j.at("gaze").get<GazeTrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  validate(d);
  c = d;
}

/// Referenced inputs must exist at launch.
inline void check_paths(const ExperimentConfig& c) {
  if (c.manifest.empty()) throw ConfigError("experiment config has no manifest");
  auto require = [](const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  };
  require(c.manifest, "manifest");
  if (c.ssl_manifest) require(*c.ssl_manifest, "ssl_manifest");
  if (c.segmenter_ckpt) require(*c.segmenter_ckpt, "segmenter checkpoint");
}

inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = c;
  j.erase("out_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

struct FoldResult {
  std::uint64_t seed = 0;
  int fold = 0;
  std::vector<std::string> test_subjects;
  std::size_t n_train = 0;  // labeled samples used for gradient steps
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  double mean_error_deg = 0.0;
  double baseline_error_deg = 0.0;  // constant mean-gaze predictor
  std::string status = "ok";
  std::string message;

  bool ok() const { return status == "ok"; }
};

struct ReportRow {
  double label_fraction = 1.0;
  bool use_ssl = false;
  std::vector<FoldResult> folds;
  double mean_error_deg = 0.0;  // mean of the fold means
  double std_error_deg = 0.0;   // sample standard deviation of the fold means
  double baseline_mean_deg = 0.0;
  std::size_t failed = 0;
};

struct MetricsReport {
  int schema_version = kReportSchema;
  std::string config_hash;
  Protocol protocol = Protocol::kLoso;
  int k = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<ReportRow> rows;
  nlohmann::json runtime = nlohmann::json::object();  // timestamps and timings only

  bool ok() const {
    for (const auto& r : rows) {
      if (r.failed > 0) return false;
    }
    return true;
  }
};

inline void to_json(nlohmann::json& j, const FoldResult& f) {
  j = {{"seed", f.seed},       {"fold", f.fold},           {"test_subjects", f.test_subjects},
       {"n_train", f.n_train}, {"n_val", f.n_val},         {"n_test", f.n_test},
       {"mean_error_deg", f.mean_error_deg}, {"baseline_error_deg", f.baseline_error_deg},
       {"status", f.status},   {"message", f.message}};
}

inline void from_json(const nlohmann::json& j, FoldResult& f) {
  f.seed = j.at("seed").get<std::uint64_t>();
  f.fold = j.at("fold").get<int>();
  f.test_subjects = j.at("test_subjects").get<std::vector<std::string>>();
  f.n_train = j.at("n_train").get<std::size_t>();
  f.n_val = j.at("n_val").get<std::size_t>();
  f.n_test = j.at("n_test").get<std::size_t>();
  f.mean_error_deg = j.at("mean_error_deg").get<double>();
  f.baseline_error_deg = j.at("baseline_error_deg").get<double>();
  f.status = j.at("status").get<std::string>();
  f.message = j.value("message", std::string());
}

inline void to_json(nlohmann::json& j, const ReportRow& r) {
  j = {{"label_fraction", r.label_fraction}, {"use_ssl", r.use_ssl},
       {"folds", r.folds},                   {"mean_error_deg", r.mean_error_deg},
       {"std_error_deg", r.std_error_deg},   {"baseline_mean_deg", r.baseline_mean_deg},
       {"failed", r.failed}};
}

inline void from_json(const nlohmann::json& j, ReportRow& r) {
  r.label_fraction = j.at("label_fraction").get<double>();
  r.use_ssl = j.at("use_ssl").get<bool>();
  r.folds = j.at("folds").get<std::vector<FoldResult>>();
  r.mean_error_deg = j.at("mean_error_deg").get<double>();
  r.std_error_deg = j.at("std_error_deg").get<double>();
  r.baseline_mean_deg = j.at("baseline_mean_deg").get<double>();
  r.failed = j.at("failed").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const MetricsReport& m) {
  j = {{"schema_version", m.schema_version},
       {"config_hash", m.config_hash},
       {"protocol", to_string(m.protocol)},
       {"k", m.k},
       {"seeds", m.seeds},
       {"rows", m.rows},
       {"runtime", m.runtime}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& m) {
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kReportSchema) {
      throw DataError("unsupported report schema " + std::to_string(m.schema_version));
    }
    m.config_hash = j.at("config_hash").get<std::string>();
    m.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    m.k = j.at("k").get<int>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.rows = j.at("rows").get<std::vector<ReportRow>>();
    m.runtime = j.value("runtime", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

/// Recomputes mean, std and failure count of a row from its folds.
inline void aggregate(ReportRow& row) {
  std::vector<double> errs, base;
  row.failed = 0;
  for (const auto& f : row.folds) {
    if (f.ok()) {
      errs.push_back(f.mean_error_deg);
      base.push_back(f.baseline_error_deg);
    } else {
      ++row.failed;
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  row.mean_error_deg = mean(errs);
  row.baseline_mean_deg = mean(base);
  double ss = 0.0;
  for (double x : errs) ss += (x - row.mean_error_deg) * (x - row.mean_error_deg);
  row.std_error_deg = errs.size() > 1 ? std::sqrt(ss / static_cast<double>(errs.size() - 1)) : 0.0;
}

inline std::string format_fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string percent_tag(double fraction) { return std::to_string(std::lround(fraction * 100.0)); }

inline std::string render_markdown(const MetricsReport& m) {
  std::ostringstream out;
  out << "# Gaze estimation report\n\n";
  out << "- protocol: " << to_string(m.protocol) << " (" << m.k << " folds)\n";
  out << "- seeds:";
  for (auto s : m.seeds) out << ' ' << s;
  out << "\n- config hash: `" << m.config_hash << "`\n\n";
  out << "| labels | SSL init | folds | mean error (deg) | std (deg) | mean-gaze baseline (deg) | failed |\n";
  out << "|---:|:---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : m.rows) {
    out << "| " << percent_tag(r.label_fraction) << "% | " << (r.use_ssl ? "yes" : "no") << " | " << r.folds.size()
        << " | " << format_fixed(r.mean_error_deg) << " | " << format_fixed(r.std_error_deg) << " | "
        << format_fixed(r.baseline_mean_deg) << " | " << r.failed << " |\n";
  }
  for (const auto& r : m.rows) {
    out << "\n## Folds at " << percent_tag(r.label_fraction) << "% labels\n\n";
    out << "| seed | fold | test subjects | train | val | test | error (deg) | baseline (deg) | status |\n";
    out << "|---:|---:|---|---:|---:|---:|---:|---:|---|\n";
    for (const auto& f : r.folds) {
      std::string subj;
      for (const auto& s : f.test_subjects) subj += (subj.empty() ? "" : " ") + s;
      out << "| " << f.seed << " | " << f.fold << " | " << subj << " | " << f.n_train << " | " << f.n_val << " | "
          << f.n_test << " | " << format_fixed(f.mean_error_deg) << " | " << format_fixed(f.baseline_error_deg) << " | "
          << f.status << (f.message.empty() ? "" : ": " + f.message) << " |\n";
    }
  }
  return out.str();
}

/// Writes `report.json` and `report.md` into `dir`.
inline void write_report(const MetricsReport& m, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "report.json", std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / "report.json").string());
    out << nlohmann::json(m).dump(2) << '\n';
  }
  std::ofstream md(dir / "report.md", std::ios::binary | std::ios::trunc);
  if (!md) throw DataError("cannot write " + (dir / "report.md").string());
  md << render_markdown(m);
}

inline MetricsReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path.string());
  try {
    return nlohmann::json::parse(in).get<MetricsReport>();
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("report " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Per-fold bar charts (`fold_errors_<pct>`) and, when the report holds more
/// than one label fraction, the `label_fraction` line chart. Returns warnings.
inline std::vector<std::string> emit_plots(const MetricsReport& m, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::string> warnings;
  for (const auto& r : m.rows) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& f : r.folds) {
      if (!f.ok()) continue;
      labels.push_back("seed" + std::to_string(f.seed) + "_fold" + std::to_string(f.fold));
      values.push_back(f.mean_error_deg);
    }
    plot::bar_chart(dir / ("fold_errors_" + percent_tag(r.label_fraction)), labels, values, "mean_error_deg");
  }
  if (m.rows.size() < 2) {
    warnings.push_back("report has no label-fraction ablation; label_fraction plot skipped");
  } else {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& r : m.rows) {
      labels.push_back(percent_tag(r.label_fraction) + "%");
      values.push_back(r.mean_error_deg);
    }
    plot::line_chart(dir / "label_fraction", labels, values, "mean_error_deg");
  }
  return warnings;
}

using Logger = std::function<void(const std::string&)>;

namespace detail {

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

/// Everything loaded once and shared by all folds of an experiment.
struct ExperimentData {
  Manifest manifest;
  std::vector<EyeSample> samples;             // aligned with manifest.records
  std::vector<Image> ssl_images;              // pretraining pool
  std::vector<std::string> ssl_subjects;      // subject of each pool image
  std::map<std::pair<std::uint64_t, int>, EyeEncoder> encoders;  // (seed, fold or -1)
};

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg, const Logger& log) {
  check_paths(cfg);
  ExperimentData d;
  d.manifest = load_manifest(cfg.manifest);
  if (d.manifest.records.empty()) throw DataError("manifest " + cfg.manifest.string() + " is empty");
  for (const auto& r : d.manifest.records) {
    if (!r.gaze) throw DataError("record '" + r.id + "' in " + cfg.manifest.string() + " has no gaze label");
  }
  d.samples = load_samples(d.manifest);
  std::size_t missing = 0;
  for (const auto& s : d.samples) missing += !s.masks;
  if (missing > 0) {
    if (!cfg.segmenter_ckpt) {
      throw ConfigError(std::to_string(missing) + " record(s) lack masks and no segmenter_ckpt is configured");
    }
    SegmenterModel seg = load_segmenter(*cfg.segmenter_ckpt);
    if (log) log("segmenting " + std::to_string(missing) + " sample(s) without masks");
    attach_segmenter_masks(d.samples, seg);
  }
  if (cfg.use_ssl) {
    if (cfg.ssl_manifest) {
      const Manifest pool = load_manifest(*cfg.ssl_manifest);
      for (const auto& r : pool.records) {
        d.ssl_images.push_back(preprocess(png::read(pool.resolve(r.image))));
        d.ssl_subjects.push_back(r.subject_id);
      }
    } else {
      for (const auto& s : d.samples) {
        d.ssl_images.push_back(s.image);
        d.ssl_subjects.push_back(s.subject_id);
      }
    }
  }
  return d;
}

inline const EyeEncoder& ssl_encoder_for(ExperimentData& d, const ExperimentConfig& cfg, std::uint64_t seed,
                                         int fold, const Fold& split, const Logger& log) {
  const int key = cfg.strict_ssl ? fold : -1;
  auto it = d.encoders.find({seed, key});
  if (it != d.encoders.end()) return it->second;
  std::vector<Image> pool;
  for (std::size_t i = 0; i < d.ssl_images.size(); ++i) {
    const bool held_out = std::find(split.test_subjects.begin(), split.test_subjects.end(), d.ssl_subjects[i]) !=
                          split.test_subjects.end();
    if (!cfg.strict_ssl || !held_out) pool.push_back(d.ssl_images[i]);
  }
  SslConfig scfg = cfg.ssl;
  scfg.seed = derive_seed(seed, "ssl", static_cast<std::uint64_t>(key + 1));
  if (log) {
    log("pretraining encoder (seed " + std::to_string(seed) + (cfg.strict_ssl ? ", fold " + std::to_string(fold) : ", shared") +
        ") on " + std::to_string(pool.size()) + " images");
  }
  SslResult r = pretrain(pool, scfg);
  if (cfg.save_checkpoints) {
    const fs::path p = cfg.out_dir / "ssl" /
                       ("encoder_seed" + std::to_string(seed) + (cfg.strict_ssl ? "_fold" + std::to_string(fold) : "") + ".ckpt");
    save_encoder(p, r.encoder, scfg);
  }
  return d.encoders.emplace(std::make_pair(seed, key), r.encoder).first->second;
}

inline FoldResult run_fold(ExperimentData& d, const ExperimentConfig& cfg, double fraction, std::uint64_t seed, int fold,
                           const Fold& split, const fs::path& fold_dir, const Logger& log) {
  FoldResult res;
  res.seed = seed;
  res.fold = fold;
  res.test_subjects = split.test_subjects;
  const auto& records = d.manifest.records;
  const auto train_idx = select_subjects(records, split.train_subjects);
  const auto test_idx = select_subjects(records, split.test_subjects);
  if (train_idx.empty() || test_idx.empty()) throw DataError("fold has an empty train or test side");

  std::vector<ManifestRecord> train_records;
  for (auto i : train_idx) train_records.push_back(records[i]);
  const std::uint64_t fold_seed = derive_seed(seed, "fold", static_cast<std::uint64_t>(fold));
  std::vector<std::size_t> labeled;
  for (auto p : subsample_labels(train_records, fraction, derive_seed(fold_seed, "labels"))) labeled.push_back(train_idx[p]);

  std::vector<std::size_t> shuffled = labeled;
  Rng vrng = make_rng(fold_seed, "val");
  shuffle(shuffled, vrng);
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(shuffled.size())));
  std::vector<const EyeSample*> train, val, test;
  for (std::size_t i = 0; i < shuffled.size(); ++i) (i < n_val ? val : train).push_back(&d.samples[shuffled[i]]);
  for (auto i : test_idx) test.push_back(&d.samples[i]);
  res.n_train = train.size();
  res.n_val = val.size();
  res.n_test = test.size();

  const EyeEncoder* enc = cfg.use_ssl ? &ssl_encoder_for(d, cfg, seed, fold, split, log) : nullptr;
  GazeTrainConfig gcfg = cfg.gaze;
  gcfg.seed = derive_seed(fold_seed, "gaze");
  fs::create_directories(fold_dir);
  std::ofstream epoch_log(fold_dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  GazeTrainHooks hooks;
  hooks.on_epoch_end = [&](const GazeEpochLog& e, GazeModel&) {
    epoch_log << nlohmann::json{{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss},
                                {"val_error_deg", e.val_error_deg}, {"eye_encoder_frozen", e.eye_encoder_frozen}}
                     .dump()
              << '\n';
  };
  GazeTrainResult tr = train_gaze(train, val, enc, gcfg, hooks);

  // constant predictor: mean label of all labeled training samples
  double mp = 0.0, my = 0.0;
  for (auto i : labeled) {
    mp += d.samples[i].gaze->pitch;
    my += d.samples[i].gaze->yaw;
  }
  const GazeAngles mean_gaze{mp / static_cast<double>(labeled.size()), my / static_cast<double>(labeled.size())};

  const auto pred = predict(tr.model, test);
  std::ofstream out(fold_dir / "predictions.jsonl", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write predictions in " + fold_dir.string());
  double err = 0.0, base = 0.0;
  std::vector<std::string> test_ids;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double e = angular_error_deg(pred[i], *test[i]->gaze);
    err += e;
    base += angular_error_deg(mean_gaze, *test[i]->gaze);
    test_ids.push_back(test[i]->id);
    out << nlohmann::json{{"id", test[i]->id},
                          {"pred_pitch_rad", pred[i].pitch},
                          {"pred_yaw_rad", pred[i].yaw},
                          {"gt_pitch_rad", test[i]->gaze->pitch},
                          {"gt_yaw_rad", test[i]->gaze->yaw},
                          {"error_deg", e}}
               .dump()
        << '\n';
  }
  res.mean_error_deg = err / static_cast<double>(test.size());
  res.baseline_error_deg = base / static_cast<double>(test.size());

  std::vector<std::string> val_ids;
  for (const auto* s : val) val_ids.push_back(s->id);
  write_lines(fold_dir / "train_ids.txt", tr.trained_ids);
  write_lines(fold_dir / "val_ids.txt", val_ids);
  write_lines(fold_dir / "test_ids.txt", test_ids);
  if (cfg.save_checkpoints) save_gaze_model(fold_dir / "gaze.ckpt", tr.model);
  return res;
}

inline MetricsReport run_fractions(const ExperimentConfig& cfg, const std::vector<double>& fractions, const Logger& log) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  MetricsReport report;
  report.config_hash = config_hash(cfg);
  report.protocol = cfg.protocol;
  report.seeds = cfg.seeds;
  report.runtime["started_utc"] = utc_now();
  report.runtime["fold_seconds"] = nlohmann::json::array();

  ExperimentData data = load_experiment_data(cfg, log);
  std::map<std::uint64_t, SplitPlan> plans;
  for (auto seed : cfg.seeds) plans[seed] = make_splits(data.manifest.records, cfg.protocol, cfg.k, seed);
  report.k = plans.begin()->second.k;

  const bool many = fractions.size() > 1;
  for (double fraction : fractions) {
    ReportRow row;
    row.label_fraction = fraction;
    row.use_ssl = cfg.use_ssl;
    report.rows.push_back(row);
    for (auto seed : cfg.seeds) {
      const SplitPlan& plan = plans[seed];
      for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        fs::path fold_dir = cfg.out_dir;
        if (many) fold_dir /= "frac" + percent_tag(fraction);
        fold_dir /= "seed" + std::to_string(seed) + "/fold" + std::to_string(f);
        const auto f0 = std::chrono::steady_clock::now();
        FoldResult res;
        try {
          res = run_fold(data, cfg, fraction, seed, static_cast<int>(f), plan.folds[f], fold_dir, log);
        } catch (const std::exception& e) {
          res.seed = seed;
          res.fold = static_cast<int>(f);
          res.test_subjects = plan.folds[f].test_subjects;
          res.status = "failed";
          res.message = e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - f0).count();
        report.runtime["fold_seconds"].push_back(secs);
        if (log) {
          log("labels " + percent_tag(fraction) + "% seed " + std::to_string(seed) + " fold " + std::to_string(f) + ": " +
              (res.ok() ? format_fixed(res.mean_error_deg) + " deg (baseline " + format_fixed(res.baseline_error_deg) + ")"
                        : "FAILED " + res.message) +
              ", " + format_fixed(secs, 1) + " s");
        }
        report.rows.back().folds.push_back(res);
        aggregate(report.rows.back());
        report.runtime["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_report(report, cfg.out_dir);
      }
    }
  }
  write_report(report, cfg.out_dir);
  return report;
}

}  // namespace detail

/// One label fraction (`cfg.label_fraction`) across all seeds and folds.
inline MetricsReport run_experiment(const ExperimentConfig& cfg, const Logger& log = {}) {
  return detail::run_fractions(cfg, {cfg.label_fraction}, log);
}

/// One row per fraction in `cfg.ablation_fractions`, sharing pretrained
/// encoders across fractions.
inline MetricsReport run_label_ablation(const ExperimentConfig& cfg, const Logger& log = {}) {
  if (!cfg.use_ssl) throw ConfigError("label ablation fine-tunes the SSL-initialized model; set use_ssl");
  if (cfg.ablation_fractions.empty()) throw ConfigError("no ablation fractions configured");
  return detail::run_fractions(cfg, cfg.ablation_fractions, log);
}

}  // namespace gazekit
