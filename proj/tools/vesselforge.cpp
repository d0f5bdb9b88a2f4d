// vesselforge: command-line driver for the vessel segmentation pipeline.
//
//   preprocess -> extract -> train -> predict / evaluate -> plot
//
// Every stage reads the run configuration (defaults, then --config JSON,
// then flags), writes its artifacts under --out and leaves a manifest that
// downstream stages check before trusting those artifacts.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vesselforge/dataset.hpp"
#include "vesselforge/inference.hpp"
#include "vesselforge/manifest.hpp"
#include "vesselforge/metrics.hpp"
#include "vesselforge/patch.hpp"
#include "vesselforge/preprocess.hpp"
#include "vesselforge/raster_io.hpp"
#include "vesselforge/run_config.hpp"
#include "vesselforge/svg_plot.hpp"
#include "vesselforge/train.hpp"
#include "vesselforge/unet.hpp"
#include "vesselforge/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::FileNotFound:
    case Errc::MissingFiles:
    case Errc::UnsupportedFormat:
    case Errc::CorruptImage:
    case Errc::WrongChannelCount:
    case Errc::DimensionMismatch:
      return kExitMissing;
    case Errc::NonFinite:
    case Errc::DegenerateClasses:
      return kExitNumeric;
    case Errc::IoFailure:
      return kExitInternal;
    default:
      return kExitConfig;
  }
}

// Config hashes per stage: each covers exactly the settings its outputs
// depend on, so changing e.g. the stride does not invalidate patches.
json preprocess_scope(const RunConfig& c) { return {{"dataset", dataset_json(c)}, {"preprocessing", preprocessing_json(c)}}; }

json extract_scope(const RunConfig& c) {
  auto j = preprocess_scope(c);
  auto p = patching_json(c);
  p.erase("stride");
  j["patching"] = p;
  return j;
}

json train_scope(const RunConfig& c) {
  auto j = extract_scope(c);
  j["model"] = model_json(c);
  j["training"] = training_json(c);
  return j;
}

json eval_scope(const RunConfig& c) {
  auto j = train_scope(c);
  j["stride"] = c.patching.stride;
  j["evaluation"] = evaluation_json(c);
  return j;
}

struct Context {
  RunConfig cfg;
  fs::path out;
  fs::path data_root;
};

fs::path resolve_data_root(const RunConfig& cfg) {
  if (!cfg.dataset_root.empty()) return cfg.dataset_root;
  if (const char* env = std::getenv("VESSELFORGE_DATA"); env && *env) return env;
  fail(Errc::ConfigError, "no dataset root: pass --data, set dataset_root in the config or VESSELFORGE_DATA");
}

void log(const std::string& msg) { std::cerr << msg << std::endl; }

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// independent, so the result does not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    }));
  for (auto& j : jobs) j.get();
}

template <class T>
std::vector<T> limit(std::vector<T> v, int max_items) {
  if (max_items > 0 && v.size() > static_cast<std::size_t>(max_items)) v.resize(static_cast<std::size_t>(max_items));
  return v;
}

fs::path preprocessed_path(const Context& ctx, const std::string& split, const DatasetEntry& e) {
  return ctx.out / "preprocessed" / split / (e.image.stem().string() + ".pgm");
}

std::vector<DatasetEntry> train_entries(const Context& ctx) {
  return limit(scan_split(ctx.data_root / "training", true), ctx.cfg.patching.max_images);
}

std::vector<DatasetEntry> test_entries(const Context& ctx, bool need_manual) {
  return limit(scan_split(ctx.data_root / "test", need_manual), ctx.cfg.evaluation.max_images);
}

// preprocess ----------------------------------------------------------------

int cmd_preprocess(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto se = StructuringElement::make(cfg.preprocessing.se_shape, cfg.preprocessing.se_radius);
  Manifest m{"preprocess", config_hash(preprocess_scope(cfg)), preprocess_scope(cfg), {}, {}};

  std::size_t done = 0;
  for (const std::string split : {"training", "test"}) {
    if (!fs::is_directory(ctx.data_root / split)) continue;
    const auto entries = scan_split(ctx.data_root / split, split == "training");
    fs::create_directories(ctx.out / "preprocessed" / split);
    std::vector<std::string> in_hash(entries.size()), out_hash(entries.size());
    parallel_for(entries.size(), cfg.threads, [&](std::size_t i) {
      const auto& e = entries[i];
      const auto target = preprocessed_path(ctx, split, e);
      save_raster(preprocess_pipeline(load_raster(e.image), se, cfg.preprocessing.clahe), target);
      in_hash[i] = sha256_file(e.image);
      out_hash[i] = sha256_file(target);
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
      m.inputs[entries[i].image.string()] = in_hash[i];
      m.outputs[manifest_key(preprocessed_path(ctx, split, entries[i]), ctx.out)] = out_hash[i];
    }
    log("preprocess: " + std::to_string(entries.size()) + " " + split + " images");
    done += entries.size();
  }
  require(done > 0, Errc::MissingFiles, "no training/ or test/ split under " + ctx.data_root.string());
  write_manifest(ctx.out, m);
  return kExitOk;
}

// extract -------------------------------------------------------------------

int cmd_extract(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto pre_hash = config_hash(preprocess_scope(cfg));
  const auto entries = train_entries(ctx);
  const std::size_t per = static_cast<std::size_t>(cfg.patching.n_per_image);
  const std::size_t ps = static_cast<std::size_t>(cfg.patching.size);
  Manifest m{"extract", config_hash(extract_scope(cfg)), extract_scope(cfg), {}, {}};

  // Filled in place: at full scale the patch tensor is the largest object in
  // the pipeline and a second copy would not fit comfortably.
  PatchSet all;
  all.patches = Tensor<float>(entries.size() * per, 1, ps, ps);
  all.labels.resize(entries.size() * per * ps * ps);
  all.origins.resize(entries.size() * per);
  parallel_for(entries.size(), cfg.threads, [&](std::size_t i) {
    const auto& e = entries[i];
    const auto pre = preprocessed_path(ctx, "training", e);
    verify_artifact(ctx.out, "preprocess", pre, pre_hash);
    const Raster image = load_raster(pre);
    const FovMask fov = load_mask(e.mask);
    const FovMask gt = load_mask(e.manual);
    const auto seed = splitmix64(cfg.patching.seed * 0x100000001B3ull + static_cast<std::uint64_t>(i));
    const auto part = sample_train_patches(image, fov, gt, per, cfg.patching.size, seed, static_cast<std::uint32_t>(e.id));
    std::copy(part.patches.vec().begin(), part.patches.vec().end(), all.patches.sample(i * per));
    std::copy(part.labels.begin(), part.labels.end(), all.labels.begin() + static_cast<std::ptrdiff_t>(i * per * ps * ps));
    std::copy(part.origins.begin(), part.origins.end(), all.origins.begin() + static_cast<std::ptrdiff_t>(i * per));
  });
  for (const auto& e : entries) {
    m.inputs[manifest_key(preprocessed_path(ctx, "training", e), ctx.out)] =
        sha256_file(preprocessed_path(ctx, "training", e));
    m.inputs[e.mask.string()] = sha256_file(e.mask);
    m.inputs[e.manual.string()] = sha256_file(e.manual);
  }
  const auto target = ctx.out / "patches.bin";
  save_patches(target, all);
  m.outputs[manifest_key(target, ctx.out)] = sha256_file(target);
  write_manifest(ctx.out, m);
  log("extract: " + std::to_string(all.size()) + " patches from " + std::to_string(entries.size()) + " images");
  return kExitOk;
}

// train ---------------------------------------------------------------------

int cmd_train(const Context& ctx, bool resume, bool save_optimizer) {
  const auto& cfg = ctx.cfg;
  const auto patches_path = ctx.out / "patches.bin";
  const auto patches_hash = verify_artifact(ctx.out, "extract", patches_path, config_hash(extract_scope(cfg)));

  std::pair<PatchSet, PatchSet> split;
  {
    const PatchSet all = load_patches(patches_path);
    split = split_train_val(all, cfg.training.val_fraction, cfg.training.seed);
  }
  log("train: " + std::to_string(split.first.size()) + " training / " + std::to_string(split.second.size()) +
      " validation patches, " + std::to_string(param_count(cfg.model)) + " parameters");

  FitOptions opt;
  opt.spec = cfg.model;
  opt.checkpoint = ctx.out / "model.sunw";
  opt.state_file = ctx.out / "train_state.sunw";
  opt.history_csv = ctx.out / "history.csv";
  opt.resume = resume;
  opt.save_optimizer = save_optimizer;
  opt.on_epoch = [&](const TrainRecord& r, bool improved) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "epoch %d/%d lr %.6g train_loss %.5f train_acc %.4f val_loss %.5f val_acc %.4f%s",
                  r.epoch, cfg.training.epochs, r.lr, r.train_loss, r.train_acc, r.val_loss, r.val_acc,
                  improved ? " *" : "");
    log(buf);
  };
  // A resumed run must share every training setting except the epoch budget.
  auto state_scope = train_scope(cfg);
  state_scope["training"].erase("epochs");
  if (resume) {
    if (fs::exists(manifest_path(ctx.out, "train-state"))) {
      const auto prior = read_manifest(ctx.out, "train-state");
      require(prior.config_hash == config_hash(state_scope), Errc::StaleArtifact,
              "train_state.sunw was written under a different configuration; rerun train without --resume");
    }
  } else {
    fs::remove(*opt.state_file);
    fs::remove(*opt.history_csv);
  }
  write_manifest(ctx.out, {"train-state", config_hash(state_scope), state_scope, {}, {}});

  const auto result = fit(cfg.training, split.first, split.second, opt);
  Manifest m{"train", config_hash(train_scope(cfg)), train_scope(cfg), {}, {}};
  m.inputs[manifest_key(patches_path, ctx.out)] = patches_hash;
  for (const auto& p : {*opt.checkpoint, *opt.history_csv}) m.outputs[manifest_key(p, ctx.out)] = sha256_file(p);
  write_manifest(ctx.out, m);
  log("train: best epoch " + std::to_string(result.best_epoch) + ", validation loss " +
      std::to_string(result.best_val_loss));
  return kExitOk;
}

// predict / evaluate ----------------------------------------------------------

struct LoadedInputs {
  ParamSet<float> params;
  std::vector<DatasetEntry> entries;
  std::vector<Raster> images;
  Manifest manifest;
};

LoadedInputs load_eval_inputs(const Context& ctx, const std::string& stage, bool need_manual) {
  const auto& cfg = ctx.cfg;
  LoadedInputs in;
  in.manifest = {stage, config_hash(eval_scope(cfg)), eval_scope(cfg), {}, {}};
  const auto model_path = ctx.out / "model.sunw";
  in.manifest.inputs[manifest_key(model_path, ctx.out)] =
      verify_artifact(ctx.out, "train", model_path, config_hash(train_scope(cfg)));
  auto model = load_model(model_path);
  in.params = std::move(model.params);

  const auto pre_hash = config_hash(preprocess_scope(cfg));
  in.entries = test_entries(ctx, need_manual);
  for (const auto& e : in.entries) {
    const auto pre = preprocessed_path(ctx, "test", e);
    in.manifest.inputs[manifest_key(pre, ctx.out)] = verify_artifact(ctx.out, "preprocess", pre, pre_hash);
    in.images.push_back(load_raster(pre));
  }
  return in;
}

std::vector<ProbMap> predict_all(const Context& ctx, const LoadedInputs& in) {
  std::vector<ProbMap> maps(in.images.size());
  parallel_for(in.images.size(), ctx.cfg.threads, [&](std::size_t i) {
    maps[i] = predict_image(in.images[i], in.params, ctx.cfg.patching.size, ctx.cfg.patching.stride,
                            ctx.cfg.evaluation.batch_size);
  });
  return maps;
}

/// Probability map as round(255 p) plus its binarization at `threshold`.
void write_maps(const fs::path& dir, const std::string& stem, const ProbMap& map, double threshold, Manifest& m,
                const fs::path& base) {
  fs::create_directories(dir);
  Raster prob(map.width, map.height, 1), bin(map.width, map.height, 1);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    prob.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map.data[i], 0.0f, 1.0f) * 255.0f));
    bin.data[i] = map.data[i] >= threshold ? 255 : 0;
  }
  for (const auto& [suffix, r] : {std::pair{"_prob.pgm", &prob}, std::pair{"_bin.pgm", &bin}}) {
    const auto path = dir / (stem + suffix);
    save_raster(*r, path);
    m.outputs[manifest_key(path, base)] = sha256_file(path);
  }
}

int cmd_predict(const Context& ctx) {
  auto in = load_eval_inputs(ctx, "predict", false);
  const auto maps = predict_all(ctx, in);
  for (std::size_t i = 0; i < maps.size(); ++i)
    write_maps(ctx.out / "maps", in.entries[i].image.stem().string(), maps[i], ctx.cfg.evaluation.threshold,
               in.manifest, ctx.out);
  write_manifest(ctx.out, in.manifest);
  log("predict: " + std::to_string(maps.size()) + " maps written to " + (ctx.out / "maps").string());
  return kExitOk;
}

json metrics_json(const MetricsReport& m) {
  // NaN (an empty class) serializes as null.
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn},
          {"accuracy", m.accuracy},
          {"sensitivity", m.sensitivity},
          {"specificity", m.specificity},
          {"auc", m.auc}};
}

int cmd_evaluate(const Context& ctx, bool write_map_files, const fs::path& report_path) {
  const auto& cfg = ctx.cfg;
  auto in = load_eval_inputs(ctx, "evaluate", true);
  std::vector<EvalImage> eval;
  for (std::size_t i = 0; i < in.entries.size(); ++i) {
    const auto& e = in.entries[i];
    EvalImage img{e.image.stem().string(), {}, load_mask(e.manual), load_mask(e.mask)};
    require(img.gt.width == in.images[i].width && img.gt.height == in.images[i].height, Errc::DimensionMismatch,
            "annotation size differs from image " + e.image.string());
    if (!cfg.evaluation.fov_only) img.fov = FovMask(img.gt.width, img.gt.height, 1);
    in.manifest.inputs[e.mask.string()] = sha256_file(e.mask);
    in.manifest.inputs[e.manual.string()] = sha256_file(e.manual);
    eval.push_back(std::move(img));
  }
  const auto maps = predict_all(ctx, in);

  json images = json::array();
  for (std::size_t i = 0; i < eval.size(); ++i) {
    auto j = metrics_json(image_metrics(maps[i], eval[i], cfg.evaluation.threshold));
    j["name"] = eval[i].name;
    images.push_back(j);
  }
  const auto pooled = pooled_metrics(maps, eval, cfg.evaluation.threshold);
  json roc = json::array();
  for (const auto& p : thin_roc(pooled.roc, 2001)) roc.push_back({p.fpr, p.tpr});
  json pooled_j = metrics_json(pooled);
  pooled_j["roc"] = roc;
  const json report{{"threshold", cfg.evaluation.threshold},
                    {"fov_only", cfg.evaluation.fov_only},
                    {"stride", cfg.patching.stride},
                    {"patch", cfg.patching.size},
                    {"images", images},
                    {"pooled", pooled_j}};

  bin::write_text_atomic(report_path, report.dump(2) + "\n");
  in.manifest.outputs[manifest_key(report_path, ctx.out)] = sha256_file(report_path);
  if (write_map_files)
    for (std::size_t i = 0; i < maps.size(); ++i)
      write_maps(ctx.out / "maps", eval[i].name, maps[i], cfg.evaluation.threshold, in.manifest, ctx.out);
  write_manifest(ctx.out, in.manifest);

  std::printf("images %zu  AUC %.4f  accuracy %.4f  sensitivity %.4f  specificity %.4f\n", eval.size(), pooled.auc,
              pooled.accuracy, pooled.sensitivity, pooled.specificity);
  return kExitOk;
}

// plot ----------------------------------------------------------------------

int cmd_plot(const fs::path& input, fs::path output) {
  if (!fs::exists(input)) fail(Errc::MissingFiles, "missing file " + input.string());
  std::string svg_text;
  if (input.extension() == ".csv") {
    svg_text = svg::history_chart(load_history(input));
    if (output.empty()) output = fs::path(input).replace_extension(".svg");
  } else if (input.extension() == ".json") {
    std::ifstream in(input);
    json report;
    try {
      report = json::parse(in);
    } catch (const json::parse_error& e) {
      fail(Errc::ParseError, input.string() + ": " + e.what());
    }
    std::vector<RocPoint> pts;
    double auc = 0.0;
    try {
      const auto& pooled = report.at("pooled");
      for (const auto& p : pooled.at("roc")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      auc = pooled.at("auc").is_null() ? NAN : pooled.at("auc").get<double>();
    } catch (const json::exception& e) {
      fail(Errc::ParseError, input.string() + ": not an evaluation report: " + e.what());
    }
    require(!pts.empty(), Errc::ParseError, input.string() + ": report has no ROC points");
    svg_text = svg::roc_chart(pts, auc);
    if (output.empty()) output = fs::path(input).replace_extension(".roc.svg");
  } else {
    fail(Errc::ParseError, "plot input must be a history .csv or a report .json: " + input.string());
  }
  bin::write_text_atomic(output, svg_text);
  log("plot: wrote " + output.string());
  return kExitOk;
}

// paramcount ----------------------------------------------------------------

int cmd_paramcount(const RunConfig& cfg, bool per_layer) {
  cfg.model.validate();
  if (per_layer)
    for (const auto& l : layer_table(cfg.model)) {
      const auto s = l.weight_shape();
      const std::size_t n = s[0] * s[1] * s[2] * s[3] + static_cast<std::size_t>(l.cout);
      std::printf("%-12s %9zu\n", l.name.c_str(), n);
    }
  std::printf("%zu\n", param_count(cfg.model));
  return kExitOk;
}

// option wiring -------------------------------------------------------------

using Patch = std::function<void(RunConfig&)>;

template <class T>
void override_opt(CLI::App* app, std::vector<Patch>& patches, const std::string& name, std::function<void(RunConfig&, T)> set,
                  const std::string& help) {
  app->add_option_function<T>(
          name, [&patches, set](const T& v) { patches.push_back([set, v](RunConfig& c) { set(c, v); }); }, help)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

void add_config_options(CLI::App* app, std::vector<Patch>& p) {
  override_opt<std::string>(app, p, "--data", [](RunConfig& c, std::string v) { c.dataset_root = v; },
                            "Dataset root (training/ and test/ in DRIVE layout)");
  override_opt<std::string>(app, p, "--se-shape",
                            [](RunConfig& c, std::string v) { c.preprocessing.se_shape = parse_se_shape(v); },
                            "Top-hat structuring element: disk or square");
  override_opt<int>(app, p, "--se-radius", [](RunConfig& c, int v) { c.preprocessing.se_radius = v; },
                    "Structuring element radius");
  override_opt<std::string>(
      app, p, "--clahe-tiles",
      [](RunConfig& c, std::string v) {
        int tx = 0, ty = 0;
        char sep = 0;
        std::istringstream in(v);
        in >> tx >> sep >> ty;
        require(in && (sep == 'x' || sep == 'X') && in.peek() == EOF, Errc::ConfigError,
                "--clahe-tiles expects TXxTY, got '" + v + "'");
        c.preprocessing.clahe.tiles_x = tx;
        c.preprocessing.clahe.tiles_y = ty;
      },
      "CLAHE tile grid, e.g. 8x8");
  override_opt<double>(app, p, "--clahe-clip", [](RunConfig& c, double v) { c.preprocessing.clahe.clip_limit = v; },
                       "CLAHE clip limit");
  override_opt<int>(app, p, "--n-per-image", [](RunConfig& c, int v) { c.patching.n_per_image = v; },
                    "Training patches sampled per image");
  override_opt<int>(app, p, "--patch", [](RunConfig& c, int v) { c.patching.size = v; }, "Patch size (multiple of 4)");
  override_opt<int>(app, p, "--stride", [](RunConfig& c, int v) { c.patching.stride = v; }, "Test-grid stride");
  override_opt<std::uint64_t>(app, p, "--seed",
                              [](RunConfig& c, std::uint64_t v) {
                                c.patching.seed = v;
                                c.training.seed = v;
                              },
                              "Seed for patch sampling, initialization and shuffling");
  override_opt<int>(app, p, "--max-train-images", [](RunConfig& c, int v) { c.patching.max_images = v; },
                    "Use only the first N training images (0 = all)");
  override_opt<int>(app, p, "--max-test-images", [](RunConfig& c, int v) { c.evaluation.max_images = v; },
                    "Use only the first N test images (0 = all)");
  override_opt<int>(app, p, "--base-channels", [](RunConfig& c, int v) { c.model.base_channels = v; },
                    "Channels at the first level");
  override_opt<int>(app, p, "--epochs", [](RunConfig& c, int v) { c.training.epochs = v; }, "Training epochs");
  override_opt<int>(app, p, "--batch-size", [](RunConfig& c, int v) { c.training.batch_size = v; }, "Batch size");
  override_opt<double>(app, p, "--val-fraction", [](RunConfig& c, double v) { c.training.val_fraction = v; },
                       "Validation fraction");
  override_opt<double>(app, p, "--lr", [](RunConfig& c, double v) { c.training.schedule.initial_lr = v; },
                       "Initial learning rate");
  override_opt<double>(app, p, "--threshold", [](RunConfig& c, double v) { c.evaluation.threshold = v; },
                       "Probability threshold for vessel pixels");
  app->add_flag_callback(
      "--include-border", [&p] { p.push_back([](RunConfig& c) { c.evaluation.fov_only = false; }); },
      "Score every pixel instead of the FOV only");
  override_opt<int>(app, p, "--threads", [](RunConfig& c, int v) { c.threads = v; },
                    "Worker threads for per-image stages");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vesselforge: retinal vessel segmentation with a compact U-net"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "vesselforge 1.0");

  std::string config_path;
  std::string out_dir = "vf_run";
  std::vector<Patch> patches;
  bool resume = false, save_optimizer = false, write_maps = false, per_layer = false;
  std::string report_path, plot_in, plot_out;

  auto stage = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Run configuration JSON")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Working directory for artifacts")->capture_default_str();
    add_config_options(sub, patches);
    return sub;
  };
  auto* pre = stage("preprocess", "Grayscale, negative, top-hat and CLAHE for every image");
  auto* ext = stage("extract", "Sample training patches inside the FOV");
  auto* trn = stage("train", "Train the U-net with best-validation checkpointing");
  trn->add_flag("--resume", resume, "Continue from train_state.sunw");
  trn->add_flag("--save-optimizer", save_optimizer, "Store ADAM moments in model.sunw");
  auto* prd = stage("predict", "Write probability and binary maps for the test images");
  auto* evl = stage("evaluate", "Score the test images and write report.json");
  evl->add_flag("--maps", write_maps, "Also write probability maps");
  evl->add_option("--report", report_path, "Report path (default <out>/report.json)");
  auto* plt = app.add_subcommand("plot", "Render history.csv or report.json as SVG");
  plt->add_option("input", plot_in, "history.csv or report.json")->required();
  plt->add_option("-o,--output", plot_out, "SVG path");
  auto* pc = app.add_subcommand("paramcount", "Print the number of trainable parameters");
  pc->add_option("--config", config_path, "Run configuration JSON")->check(CLI::ExistingFile);
  override_opt<int>(pc, patches, "--base-channels", [](RunConfig& c, int v) { c.model.base_channels = v; },
                    "Channels at the first level");
  pc->add_flag("--per-layer", per_layer, "List every layer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (plt->parsed()) return cmd_plot(plot_in, plot_out);

    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    for (const auto& p : patches) p(cfg);
    cfg.validate();
    if (pc->parsed()) return cmd_paramcount(cfg, per_layer);

    Context ctx{cfg, out_dir, {}};
    ctx.data_root = resolve_data_root(cfg);
    ctx.cfg.dataset_root = fs::absolute(ctx.data_root).lexically_normal().string();
    ctx.data_root = ctx.cfg.dataset_root;
    fs::create_directories(ctx.out);

    if (pre->parsed()) return cmd_preprocess(ctx);
    if (ext->parsed()) return cmd_extract(ctx);
    if (trn->parsed()) return cmd_train(ctx, resume, save_optimizer);
    if (prd->parsed()) return cmd_predict(ctx);
    if (evl->parsed()) return cmd_evaluate(ctx, write_maps, report_path.empty() ? ctx.out / "report.json" : fs::path(report_path));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoFailure: " << e.what() << std::endl;
    return kExitInternal;
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory" << std::endl;
    return kExitInternal;
  }
  return kExitInternal;
}
