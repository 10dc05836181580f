// gazekit command line: dataset generation, segmentation, contrastive
// pretraining, gaze training/prediction and cross-validated experiments.
//
// Every subcommand takes --config FILE (JSON), --seed and --out; flags given
// on the command line override values from the config file.
//
// exit codes: 0 ok, 2 config error, 3 data error, 4 training failure

#include <torch/torch.h>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gazekit/gazekit.hpp"

using namespace gazekit;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;

void note(const std::string& s) { std::cerr << "[gazekit] " << s << std::endl; }

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
T get_config(const json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

std::string require_string(const json& j, const char* key, const char* flag) {
  if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
    throw ConfigError(std::string("missing ") + flag + " (or \"" + key + "\" in the config file)");
  }
  return j.at(key).get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Seeded hold-out of `fraction` of the samples; returns (train, val).
std::pair<std::vector<EyeSample>, std::vector<EyeSample>> split_validation(std::vector<EyeSample> all, double fraction,
                                                                           std::uint64_t seed) {
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(seed, "cli-val");
  shuffle(order, rng);
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(all.size())));
  std::vector<char> is_val(all.size(), 0);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = 1;
  std::vector<EyeSample> train, val;
  for (std::size_t i = 0; i < all.size(); ++i) (is_val[i] ? val : train).push_back(std::move(all[i]));
  return {std::move(train), std::move(val)};
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  void attach(CLI::App* app, const char* out_help) {
    app->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "master seed");
    app->add_option("--out", out, out_help);
  }
};

// ---------------------------------------------------------------- synth-gen

struct SynthCmd {
  Common common;
  std::optional<int> count, subjects, height, width;

  void attach(CLI::App* app) {
    common.attach(app, "output directory");
    app->add_option("--count", count, "number of samples (default 60000)");
    app->add_option("--subjects", subjects, "number of synthetic subjects (default 5)");
    app->add_option("--height", height, "render height");
    app->add_option("--width", width, "render width");
  }

  int run() {
    json j = read_config(common.config);
    put(j, "count", count);
    put(j, "subjects", subjects);
    put(j, "height", height);
    put(j, "width", width);
    put(j, "seed", common.seed);
    put(j, "out", common.out);
    SynthOptions opt;
    try {
      opt.count = j.value("count", opt.count);
      opt.subjects = j.value("subjects", opt.subjects);
      opt.height = j.value("height", opt.height);
      opt.width = j.value("width", opt.width);
      opt.seed = j.value("seed", opt.seed);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("synth-gen config: ") + e.what());
    }
    if (opt.count < 0 || opt.subjects < 1 || opt.height < 16 || opt.width < 16) {
      throw ConfigError("synth-gen needs count >= 0, subjects >= 1 and a size of at least 16x16");
    }
    const fs::path out = require_string(j, "out", "--out");
    note("rendering " + std::to_string(opt.count) + " samples into " + out.string());
    const fs::path manifest = generate_dataset(opt, out);
    std::cout << manifest.string() << '\n';
    return kExitOk;
  }
};

// ---------------------------------------------------------------- train-seg

struct TrainSegCmd {
  Common common;
  std::optional<std::string> manifest, val_manifest;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr, val_fraction;
  bool no_augment = false;

  void attach(CLI::App* app) {
    common.attach(app, "output directory (segmenter.ckpt, train_log.jsonl)");
    app->add_option("--manifest", manifest, "training manifest with masks");
    app->add_option("--val-manifest", val_manifest, "validation manifest (default: hold out --val-fraction)");
    app->add_option("--val-fraction", val_fraction, "held-out fraction when no validation manifest (default 0.1)");
    app->add_option("--epochs", epochs);
    app->add_option("--lr", lr);
    app->add_option("--batch-size", batch_size);
    app->add_flag("--no-augment", no_augment, "disable online input augmentation");
  }

  int run() {
    json j = read_config(common.config);
    put(j, "manifest", manifest);
    put(j, "val_manifest", val_manifest);
    put(j, "val_fraction", val_fraction);
    put(j, "epochs", epochs);
    put(j, "lr", lr);
    put(j, "batch_size", batch_size);
    put(j, "seed", common.seed);
    put(j, "out", common.out);
    if (no_augment) j["augment_inputs"] = false;
    const auto cfg = get_config<SegmenterConfig>(j, "train-seg config");
    const fs::path out = require_string(j, "out", "--out");
    const Manifest m = load_manifest(require_string(j, "manifest", "--manifest"));
    std::vector<EyeSample> train, val;
    if (auto vm = optional_string(j, "val_manifest")) {
      train = load_samples(m);
      val = load_samples(load_manifest(*vm));
    } else {
      std::tie(train, val) = split_validation(load_samples(m), j.value("val_fraction", 0.1), cfg.seed);
    }
    fs::create_directories(out);
    std::ofstream log(out / "train_log.jsonl", std::ios::binary | std::ios::trunc);
    note("training segmenter on " + std::to_string(train.size()) + " samples (" + std::to_string(val.size()) + " val)");
    auto result = train_segmenter(train, val, cfg, [&](const SegEpochLog& e) {
      log << json{{"epoch", e.epoch}, {"lr", e.lr}, {"train_mse", e.train_mse},
                  {"val_iou_eyeball", e.val_iou.eyeball}, {"val_iou_iris", e.val_iou.iris}}
                 .dump()
          << '\n';
      note("epoch " + std::to_string(e.epoch) + " mse " + format_fixed(e.train_mse, 5) + " val IoU " +
           format_fixed(e.val_iou.eyeball, 3) + " / " + format_fixed(e.val_iou.iris, 3));
    });
    save_segmenter(out / "segmenter.ckpt", result.model);
    std::cout << (out / "segmenter.ckpt").string() << '\n';
    return kExitOk;
  }
};

// ---------------------------------------------------------------- seg-infer

struct SegInferCmd {
  Common common;
  std::optional<std::string> ckpt, manifest;
  std::optional<double> threshold;

  void attach(CLI::App* app) {
    common.attach(app, "output directory (masks/, manifest.jsonl)");
    app->add_option("--ckpt", ckpt, "segmenter checkpoint");
    app->add_option("--manifest", manifest, "input manifest");
    app->add_option("--threshold", threshold, "binarization threshold (default 0.5)");
  }

  int run() {
    json j = read_config(common.config);
    put(j, "ckpt", ckpt);
    put(j, "manifest", manifest);
    put(j, "threshold", threshold);
    put(j, "out", common.out);
    const fs::path out = require_string(j, "out", "--out");
    const double thr = j.value("threshold", 0.5);
    if (!(thr > 0.0 && thr < 1.0)) throw ConfigError("threshold must be in (0, 1)");
    SegmenterModel seg = load_segmenter(require_string(j, "ckpt", "--ckpt"));
    const Manifest m = load_manifest(require_string(j, "manifest", "--manifest"));
    const auto samples = load_samples(m);
    std::vector<const Image*> imgs;
    for (const auto& s : samples) imgs.push_back(&s.image);
    const auto soft = segment_batch(seg, imgs);
    fs::create_directories(out / "masks");
    std::vector<ManifestRecord> records;
    IouPair sum;
    std::size_t with_gt = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const MaskPair mp = binarize(soft[i], thr);
      if (samples[i].masks) {
        const IouPair p = evaluate_iou(mp, *samples[i].masks);
        sum.eyeball += p.eyeball;
        sum.iris += p.iris;
        ++with_gt;
      }
      ManifestRecord r = m.records[i];
      r.image = fs::relative(fs::absolute(m.resolve(r.image)), fs::absolute(out)).generic_string();
      r.eyeball_mask = "masks/" + r.id + "_eyeball.png";
      r.iris_mask = "masks/" + r.id + "_iris.png";
      png::write(out / *r.eyeball_mask, mp.eyeball);
      png::write(out / *r.iris_mask, mp.iris);
      records.push_back(std::move(r));
    }
    write_manifest(out / "manifest.jsonl", records);
    if (with_gt > 0) {
      const json iou = {{"samples", with_gt},
                        {"iou_eyeball", sum.eyeball / static_cast<double>(with_gt)},
                        {"iou_iris", sum.iris / static_cast<double>(with_gt)}};
      write_json(out / "iou.json", iou);
      std::cout << iou.dump() << '\n';
    }
    std::cout << (out / "manifest.jsonl").string() << '\n';
    return kExitOk;
  }
};

// ------------------------------------------------------------- ssl-pretrain

struct SslCmd {
  Common common;
  std::optional<std::string> manifest;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr, temperature;
  bool no_head = false;
  int preview = 0;

  void attach(CLI::App* app) {
    common.attach(app, "output directory (encoder.ckpt, train_log.jsonl)");
    app->add_option("--manifest", manifest, "unlabeled image manifest");
    app->add_option("--epochs", epochs);
    app->add_option("--lr", lr);
    app->add_option("--batch-size", batch_size);
    app->add_option("--temperature", temperature);
    app->add_flag("--no-projection-head", no_head);
    app->add_option("--preview", preview, "write a grid of N source images with their two augmented views and exit")
        ->check(CLI::Range(1, 256));
  }

  static void write_preview(const std::vector<Image>& images, const SslConfig& cfg, int n, const fs::path& path) {
    const int rows = std::min<int>(n, static_cast<int>(images.size()));
    const int gap = 2, h = kEyeHeight, w = kEyeWidth;
    RawImage grid{rows * (h + gap) + gap, 3 * (w + gap) + gap, 1, {}};
    grid.data.assign(static_cast<std::size_t>(grid.height) * grid.width, 255);
    for (int r = 0; r < rows; ++r) {
      Rng rng = make_rng(cfg.seed, "preview", static_cast<std::uint64_t>(r));
      auto [a, b] = make_pair(images[r], cfg.augment, rng);
      const Image* cells[3] = {&images[r], &a, &b};
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            grid.data[static_cast<std::size_t>(gap + r * (h + gap) + y) * grid.width + gap + c * (w + gap) + x] =
                to_u8(cells[c]->at(y, x));
          }
      }
    }
    png::write(path, grid);
  }

  int run() {
    json j = read_config(common.config);
    put(j, "manifest", manifest);
    put(j, "epochs", epochs);
    put(j, "lr", lr);
    put(j, "batch_size", batch_size);
    put(j, "temperature", temperature);
    put(j, "seed", common.seed);
    put(j, "out", common.out);
    if (no_head) j["projection_head"] = false;
    const auto cfg = get_config<SslConfig>(j, "ssl-pretrain config");
    if (cfg.epochs < 0 || !(cfg.lr > 0) || !(cfg.temperature > 0)) throw ConfigError("invalid ssl-pretrain settings");
    if (cfg.batch_size < 2) throw ConfigError("contrastive batch size must be at least 2");
    const fs::path out = require_string(j, "out", "--out");
    const Manifest m = load_manifest(require_string(j, "manifest", "--manifest"));
    std::vector<Image> images;
    for (const auto& r : m.records) images.push_back(preprocess(png::read(m.resolve(r.image))));
    fs::create_directories(out);
    if (preview > 0) {
      write_preview(images, cfg, preview, out / "augment_preview.png");
      std::cout << (out / "augment_preview.png").string() << '\n';
      return kExitOk;
    }
    std::ofstream log(out / "train_log.jsonl", std::ios::binary | std::ios::trunc);
    note("contrastive pretraining on " + std::to_string(images.size()) + " images");
    auto result = pretrain(images, cfg, [&](const SslEpochLog& e) {
      log << json{{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}}.dump() << '\n';
      note("epoch " + std::to_string(e.epoch) + " loss " + format_fixed(e.loss, 4));
    });
    save_encoder(out / "encoder.ckpt", result.encoder, cfg);
    std::cout << (out / "encoder.ckpt").string() << '\n';
    return kExitOk;
  }
};

// --------------------------------------------------------------- train-gaze

std::vector<EyeSample> samples_with_masks(const Manifest& m, const std::optional<std::string>& seg_ckpt) {
  auto samples = load_samples(m);
  std::size_t missing = 0;
  for (const auto& s : samples) missing += !s.masks;
  if (missing > 0) {
    if (!seg_ckpt) throw ConfigError(std::to_string(missing) + " record(s) lack masks; pass --segmenter-ckpt");
    SegmenterModel seg = load_segmenter(*seg_ckpt);
    attach_segmenter_masks(samples, seg);
  }
  return samples;
}

struct TrainGazeCmd {
  Common common;
  std::optional<std::string> manifest, val_manifest, ssl_ckpt, seg_ckpt;
  std::optional<int> epochs, frozen_epochs, batch_size;
  std::optional<double> lr, val_fraction;

  void attach(CLI::App* app) {
    common.attach(app, "output directory (gaze.ckpt, train_log.jsonl)");
    app->add_option("--manifest", manifest, "labeled training manifest");
    app->add_option("--val-manifest", val_manifest);
    app->add_option("--val-fraction", val_fraction, "held-out fraction when no validation manifest (default 0.1)");
    app->add_option("--ssl-ckpt", ssl_ckpt, "pretrained eye encoder; frozen for --frozen-epochs");
    app->add_option("--segmenter-ckpt", seg_ckpt, "segmenter for records without masks");
    app->add_option("--epochs", epochs, "total epochs (default 25)");
    app->add_option("--frozen-epochs", frozen_epochs, "epochs with the eye encoder frozen (default 5)");
    app->add_option("--lr", lr);
    app->add_option("--batch-size", batch_size);
  }

  int run() {
    json j = read_config(common.config);
    put(j, "manifest", manifest);
    put(j, "val_manifest", val_manifest);
    put(j, "val_fraction", val_fraction);
    put(j, "ssl_ckpt", ssl_ckpt);
    put(j, "segmenter_ckpt", seg_ckpt);
    put(j, "epochs_total", epochs);
    put(j, "frozen_epochs", frozen_epochs);
    put(j, "lr", lr);
    put(j, "batch_size", batch_size);
    put(j, "seed", common.seed);
    put(j, "out", common.out);
    auto cfg = get_config<GazeTrainConfig>(j, "train-gaze config");
    const fs::path out = require_string(j, "out", "--out");
    const auto seg = optional_string(j, "segmenter_ckpt");
    const Manifest m = load_manifest(require_string(j, "manifest", "--manifest"));
    std::vector<EyeSample> train, val;
    if (auto vm = optional_string(j, "val_manifest")) {
      train = samples_with_masks(m, seg);
      val = samples_with_masks(load_manifest(*vm), seg);
    } else {
      std::tie(train, val) = split_validation(samples_with_masks(m, seg), j.value("val_fraction", 0.1), cfg.seed);
    }
    std::optional<EyeEncoder> enc;
    if (auto p = optional_string(j, "ssl_ckpt")) enc = load_encoder(*p);
    std::vector<const EyeSample*> tp, vp;
    for (const auto& s : train) tp.push_back(&s);
    for (const auto& s : val) vp.push_back(&s);
    fs::create_directories(out);
    std::ofstream log(out / "train_log.jsonl", std::ios::binary | std::ios::trunc);
    GazeTrainHooks hooks;
    hooks.on_epoch_end = [&](const GazeEpochLog& e, GazeModel&) {
      log << json{{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_error_deg", e.val_error_deg},
                  {"eye_encoder_frozen", e.eye_encoder_frozen}}
                 .dump()
          << '\n';
      note("epoch " + std::to_string(e.epoch) + " loss " + format_fixed(e.train_loss, 5) + " val error " +
           format_fixed(e.val_error_deg) + " deg" + (e.eye_encoder_frozen ? " (eye encoder frozen)" : ""));
    };
    note("training gaze model on " + std::to_string(tp.size()) + " samples (" + std::to_string(vp.size()) + " val)" +
         (enc ? ", SSL-initialized" : ""));
    auto result = train_gaze(tp, vp, enc ? &*enc : nullptr, cfg, hooks);
    save_gaze_model(out / "gaze.ckpt", result.model);
    std::cout << (out / "gaze.ckpt").string() << '\n';
    return kExitOk;
  }
};

// ------------------------------------------------------------------ predict

struct PredictCmd {
  Common common;
  std::optional<std::string> ckpt, manifest, seg_ckpt;
  bool force_segmenter = false;

  void attach(CLI::App* app) {
    common.attach(app, "output directory (predictions.jsonl, summary.json)");
    app->add_option("--ckpt", ckpt, "gaze checkpoint");
    app->add_option("--manifest", manifest);
    app->add_option("--segmenter-ckpt", seg_ckpt, "segmenter for records without masks");
    app->add_flag("--force-segmenter", force_segmenter, "ignore manifest masks and always run the segmenter");
  }

  int run() {
    json j = read_config(common.config);
    put(j, "ckpt", ckpt);
    put(j, "manifest", manifest);
    put(j, "segmenter_ckpt", seg_ckpt);
    put(j, "out", common.out);
    if (force_segmenter) j["use_manifest_masks"] = false;
    const fs::path out = require_string(j, "out", "--out");
    GazeModel model = load_gaze_model(require_string(j, "ckpt", "--ckpt"));
    const Manifest m = load_manifest(require_string(j, "manifest", "--manifest"));
    std::optional<SegmenterModel> seg;
    if (auto p = optional_string(j, "segmenter_ckpt")) seg = load_segmenter(*p);
    PredictOptions opt;
    opt.use_manifest_masks = j.value("use_manifest_masks", true);
    const std::size_t routed = predict_batch(model, m, seg ? &*seg : nullptr, out / "predictions.jsonl", opt);
    std::ifstream in(out / "predictions.jsonl");
    double sum = 0.0;
    std::size_t n = 0, labeled = 0;
    for (std::string line; std::getline(in, line); ++n) {
      const auto row = json::parse(line);
      if (row.contains("error_deg")) {
        sum += row.at("error_deg").get<double>();
        ++labeled;
      }
    }
    json summary = {{"samples", n}, {"segmented", routed}, {"labeled", labeled}};
    if (labeled > 0) summary["mean_error_deg"] = sum / static_cast<double>(labeled);
    write_json(out / "summary.json", summary);
    std::cout << summary.dump() << '\n';
    return kExitOk;
  }
};

// ------------------------------------------------------------ eval / ablate

struct ExperimentCmd {
  Common common;
  bool ablation = false;
  std::optional<std::string> manifest, ssl_manifest, seg_ckpt, protocol;
  std::optional<int> k, epochs, frozen_epochs, batch_size, ssl_epochs, ssl_batch_size;
  std::optional<double> label_fraction, lr, ssl_lr;
  std::vector<std::uint64_t> seeds;
  bool use_ssl = false, no_strict = false, no_checkpoints = false;

  void attach(CLI::App* app, bool is_ablation) {
    ablation = is_ablation;
    common.attach(app, "output directory (report.json, report.md, plots/, per-fold outputs)");
    app->add_option("--manifest", manifest, "labeled manifest");
    app->add_option("--ssl-manifest", ssl_manifest, "unlabeled pretraining manifest (default: --manifest)");
    app->add_option("--segmenter-ckpt", seg_ckpt);
    app->add_option("--protocol", protocol, "loso or kfold")->check(CLI::IsMember({"loso", "kfold"}));
    app->add_option("--k", k, "folds for kfold");
    if (!is_ablation) app->add_option("--label-fraction", label_fraction);
    app->add_option("--seeds", seeds, "seeds to average over (overrides --seed)");
    app->add_option("--epochs", epochs, "gaze epochs");
    app->add_option("--frozen-epochs", frozen_epochs);
    app->add_option("--lr", lr, "gaze learning rate");
    app->add_option("--batch-size", batch_size, "gaze batch size");
    app->add_option("--ssl-epochs", ssl_epochs);
    app->add_option("--ssl-lr", ssl_lr);
    app->add_option("--ssl-batch-size", ssl_batch_size);
    if (!is_ablation) app->add_flag("--use-ssl", use_ssl, "initialize the eye encoder by contrastive pretraining");
    app->add_flag("--no-strict-ssl", no_strict, "pretrain once per seed on all images");
    app->add_flag("--no-checkpoints", no_checkpoints, "do not keep per-fold checkpoints");
  }

  int run() {
    json j = read_config(common.config);
    put(j, "manifest", manifest);
    put(j, "ssl_manifest", ssl_manifest);
    put(j, "segmenter_ckpt", seg_ckpt);
    put(j, "out_dir", common.out);
    put(j, "k", k);
    put(j, "label_fraction", label_fraction);
    if (protocol) {
      j["protocol"] = *protocol;
    } else if (ablation && !j.contains("protocol")) {
      j["protocol"] = "kfold";
    }
    if (!seeds.empty()) {
      j["seeds"] = seeds;
    } else if (common.seed) {
      j["seeds"] = {*common.seed};
    }
    if (use_ssl || ablation) j["use_ssl"] = true;
    if (no_strict) j["strict_ssl"] = false;
    if (no_checkpoints) j["save_checkpoints"] = false;
    json& g = j["gaze"];
    if (g.is_null()) g = json::object();
    put(g, "epochs_total", epochs);
    put(g, "frozen_epochs", frozen_epochs);
    put(g, "lr", lr);
    put(g, "batch_size", batch_size);
    json& s = j["ssl"];
    if (s.is_null()) s = json::object();
    put(s, "epochs", ssl_epochs);
    put(s, "lr", ssl_lr);
    put(s, "batch_size", ssl_batch_size);
    if (!j.contains("out_dir")) throw ConfigError("missing --out (or \"out_dir\" in the config file)");
    const auto cfg = get_config<ExperimentConfig>(j, ablation ? "ablate config" : "eval config");
    const MetricsReport report = ablation ? run_label_ablation(cfg, note) : run_experiment(cfg, note);
    for (const auto& w : emit_plots(report, cfg.out_dir / "plots")) note("warning: " + w);
    std::cout << render_markdown(report);
    if (!report.ok()) {
      note("one or more folds failed; partial results are in " + (cfg.out_dir / "report.json").string());
      return kExitTraining;
    }
    return kExitOk;
  }
};

// ------------------------------------------------------------------- report

struct ReportCmd {
  Common common;
  std::optional<std::string> in;

  void attach(CLI::App* app) {
    common.attach(app, "output directory (default: the report's directory)");
    app->add_option("--in", in, "report.json to render");
  }

  int run() {
    json j = read_config(common.config);
    put(j, "in", in);
    put(j, "out", common.out);
    const fs::path src = require_string(j, "in", "--in");
    const MetricsReport report = read_report(src);
    const fs::path out = j.contains("out") ? fs::path(j.at("out").get<std::string>()) : src.parent_path();
    fs::create_directories(out);
    {
      std::ofstream md(out / "report.md", std::ios::binary | std::ios::trunc);
      if (!md) throw DataError("cannot write " + (out / "report.md").string());
      md << render_markdown(report);
    }
    for (const auto& w : emit_plots(report, out / "plots")) note("warning: " + w);
    std::cout << render_markdown(report);
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"gazekit: synthetic eye data, segmentation, contrastive pretraining and multistream gaze estimation"};
  app.require_subcommand(1);

  SynthCmd synth;
  TrainSegCmd train_seg;
  SegInferCmd seg_infer;
  SslCmd ssl;
  TrainGazeCmd train_gaze_cmd;
  PredictCmd predict_cmd;
  ExperimentCmd eval, ablate;
  ReportCmd report;

  auto* s_synth = app.add_subcommand("synth-gen", "render a synthetic eye dataset with masks and gaze labels");
  auto* s_seg = app.add_subcommand("train-seg", "train the two-channel eye segmenter");
  auto* s_infer = app.add_subcommand("seg-infer", "segment a manifest and write masks plus a new manifest");
  auto* s_ssl = app.add_subcommand("ssl-pretrain", "contrastive pretraining of the eye encoder");
  auto* s_gaze = app.add_subcommand("train-gaze", "train the multistream gaze regressor");
  auto* s_pred = app.add_subcommand("predict", "predict gaze for a manifest");
  auto* s_eval = app.add_subcommand("eval", "cross-validated gaze experiment (LOSO or k-fold)");
  auto* s_ablate = app.add_subcommand("ablate", "label-fraction ablation with SSL initialization");
  auto* s_report = app.add_subcommand("report", "re-render a report.json as Markdown and plots");
  synth.attach(s_synth);
  train_seg.attach(s_seg);
  seg_infer.attach(s_infer);
  ssl.attach(s_ssl);
  train_gaze_cmd.attach(s_gaze);
  predict_cmd.attach(s_pred);
  eval.attach(s_eval, false);
  ablate.attach(s_ablate, true);
  report.attach(s_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (s_synth->parsed()) return synth.run();
    if (s_seg->parsed()) return train_seg.run();
    if (s_infer->parsed()) return seg_infer.run();
    if (s_ssl->parsed()) return ssl.run();
    if (s_gaze->parsed()) return train_gaze_cmd.run();
    if (s_pred->parsed()) return predict_cmd.run();
    if (s_eval->parsed()) return eval.run();
    if (s_ablate->parsed()) return ablate.run();
    if (s_report->parsed()) return report.run();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const PreconditionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kExitTraining;
  } catch (const c10::Error& e) {
    std::cerr << "training failed: " << e.what_without_backtrace() << '\n';
    return kExitTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
