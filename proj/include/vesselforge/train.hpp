#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/layers.hpp"
#include "vesselforge/optim.hpp"
#include "vesselforge/patch.hpp"
#include "vesselforge/unet.hpp"
#include "vesselforge/weights_io.hpp"

namespace vf {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double val_fraction = 0.10;
  LrSchedule schedule;
  std::uint64_t seed = 0;
  int patches_per_image = 9500;
  int patch_size = 48;

  void validate() const {
    require(epochs >= 1, Errc::ConfigError, "epochs must be >= 1");
    require(batch_size >= 1, Errc::ConfigError, "batch_size must be >= 1");
    require(val_fraction > 0.0 && val_fraction < 1.0, Errc::ConfigError, "val_fraction must be in (0, 1)");
    require(patches_per_image >= 1, Errc::ConfigError, "patches_per_image must be >= 1");
    require(patch_size >= 4 && patch_size % 4 == 0, Errc::ConfigError, "patch_size must be a multiple of 4");
    schedule.validate();
  }
};

/// One row of the training history. `epoch` is 1-based; the learning rate
/// used during it is lr_at(schedule, epoch - 1).
struct TrainRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  bool operator==(const TrainRecord&) const = default;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seeded shuffle, then the first round(n * fraction) (at least 1) indices
/// become validation. Both sides keep the shuffled order.
inline std::pair<PatchSet, PatchSet> split_train_val(const PatchSet& set, double val_fraction, std::uint64_t seed) {
  require(val_fraction > 0.0 && val_fraction < 1.0, Errc::InvalidArgument, "val_fraction must be in (0, 1)");
  const std::size_t n = set.size();
  const std::size_t n_val =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction)));
  require(n_val < n, Errc::TooFewPatches,
          std::to_string(n) + " patches cannot be split into non-empty train and validation sets");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(splitmix64(seed ^ 0x5EEDu));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return {subset(set, train), subset(set, val)};
}

struct Batch {
  Tensor<float> x;
  Tensor<float> y;
};

inline Batch make_batch(const PatchSet& set, const std::size_t* idx, std::size_t count) {
  require(set.labeled(), Errc::InvalidArgument, "training needs labeled patches");
  const std::size_t ps = set.patches.sample_size();
  Batch b{Tensor<float>(count, 1, set.patch_h(), set.patch_w()), Tensor<float>(count, 1, set.patch_h(), set.patch_w())};
  for (std::size_t k = 0; k < count; ++k) {
    std::copy_n(set.patches.sample(idx[k]), ps, b.x.sample(k));
    const auto* lab = set.labels.data() + idx[k] * ps;
    float* dst = b.y.sample(k);
    for (std::size_t i = 0; i < ps; ++i) dst[i] = static_cast<float>(lab[i]);
  }
  return b;
}

inline std::size_t count_correct(const Tensor<float>& logits, const Tensor<float>& labels) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) ok += ((logits[i] >= 0.0f) == (labels[i] > 0.5f));
  return ok;
}

/// One optimizer step on a batch: forward, loss, backward, ADAM update.
/// Accuracy counts pixels where (p >= 0.5) agrees with the label.
inline EpochStats train_step(ParamSet<float>& params, AdamState& state, const Batch& batch, double lr) {
  auto fwd = model_forward(batch.x, params);
  auto loss = nn::sigmoid_bce_loss(fwd.cache.logits, batch.y);
  require(std::isfinite(loss.loss), Errc::NonFinite, "training loss diverged (non-finite)");
  const double acc = static_cast<double>(count_correct(fwd.cache.logits, batch.y)) / batch.y.size();
  auto grads = model_backward(fwd.cache, loss.grad);
  adam_step(params, grads, state, lr);
  return {loss.loss, acc};
}

/// Shuffles the training set (seeded by config seed and epoch), then steps
/// through it in batch_size chunks, keeping the final short batch. Loss and
/// accuracy are averaged per pixel over the epoch.
inline EpochStats train_epoch(ParamSet<float>& params, AdamState& state, const PatchSet& train_set,
                              const TrainConfig& cfg, int epoch) {
  require(train_set.size() > 0, Errc::TooFewPatches, "empty training set");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(splitmix64(cfg.seed + 0x1000003ull * static_cast<std::uint64_t>(epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);

  const double lr = lr_at(cfg.schedule, epoch);
  double loss_sum = 0.0, correct = 0.0, pixels = 0.0;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t count = std::min(bs, order.size() - start);
    const Batch batch = make_batch(train_set, order.data() + start, count);
    const auto s = train_step(params, state, batch, lr);
    const double px = static_cast<double>(batch.y.size());
    loss_sum += s.loss * px;
    correct += s.accuracy * px;
    pixels += px;
  }
  return {loss_sum / pixels, correct / pixels};
}

/// Loss and pixel accuracy of `params` on a labeled set, no updates.
inline EpochStats evaluate_set(const ParamSet<float>& params, const PatchSet& set, int batch_size) {
  require(set.size() > 0, Errc::TooFewPatches, "empty evaluation set");
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss_sum = 0.0, correct = 0.0, pixels = 0.0;
  const std::size_t bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t count = std::min(bs, order.size() - start);
    const Batch batch = make_batch(set, order.data() + start, count);
    auto fwd = model_forward(batch.x, params);
    const auto loss = nn::sigmoid_bce_loss(fwd.cache.logits, batch.y);
    const double px = static_cast<double>(batch.y.size());
    loss_sum += loss.loss * px;
    correct += static_cast<double>(count_correct(fwd.cache.logits, batch.y));
    pixels += px;
  }
  return {loss_sum / pixels, correct / pixels};
}

/// Keeps a copy of the parameters with the lowest validation loss seen.
/// Ties keep the earlier epoch.
class BestTracker {
 public:
  bool update(int epoch, double val_loss, const ParamSet<float>& params) {
    if (best_epoch_ != 0 && !(val_loss < best_loss_)) return false;
    best_epoch_ = epoch;
    best_loss_ = val_loss;
    best_ = params;
    return true;
  }
  void restore(int epoch, double val_loss, ParamSet<float> params) {
    best_epoch_ = epoch;
    best_loss_ = val_loss;
    best_ = std::move(params);
  }

  int epoch() const { return best_epoch_; }
  double loss() const { return best_loss_; }
  const ParamSet<float>& params() const { return best_; }

 private:
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  ParamSet<float> best_;
};

// History CSV ----------------------------------------------------------------

inline const char* kHistoryHeader = "epoch,lr,train_loss,train_acc,val_loss,val_acc";

inline std::string format_history(const std::vector<TrainRecord>& rows) {
  std::ostringstream out;
  out << kHistoryHeader << '\n';
  out.precision(17);
  for (const auto& r : rows)
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.train_acc << ',' << r.val_loss << ','
        << r.val_acc << '\n';
  return out.str();
}

/// Parses a history CSV; malformed rows raise ParseError naming the line.
inline std::vector<TrainRecord> parse_history(std::istream& in, const std::string& source = "history") {
  std::vector<TrainRecord> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      require(line == kHistoryHeader, Errc::ParseError, source + ":1: unexpected header '" + line + "'");
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const auto where = source + ":" + std::to_string(lineno);
    require(cells.size() == 6, Errc::ParseError, where + ": expected 6 columns, got " + std::to_string(cells.size()));
    auto num = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == s.size() && used > 0, Errc::ParseError, where + ": not a number: '" + s + "'");
      return v;
    };
    TrainRecord r;
    const double e = num(cells[0]);
    require(e == std::floor(e) && e >= 1, Errc::ParseError, where + ": epoch must be a positive integer");
    r.epoch = static_cast<int>(e);
    r.lr = num(cells[1]);
    r.train_loss = num(cells[2]);
    r.train_acc = num(cells[3]);
    r.val_loss = num(cells[4]);
    r.val_acc = num(cells[5]);
    rows.push_back(r);
  }
  require(lineno >= 1, Errc::ParseError, source + ": empty file");
  return rows;
}

inline std::vector<TrainRecord> load_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::MissingFiles, "missing file " + path.string());
  return parse_history(in, path.string());
}

// fit -----------------------------------------------------------------------

struct FitOptions {
  ModelSpec spec;
  /// Best-validation weights, rewritten whenever validation loss improves.
  std::optional<std::filesystem::path> checkpoint;
  /// Written after every epoch: last weights, optimizer state and run
  /// position. Enables resume.
  std::optional<std::filesystem::path> state_file;
  std::optional<std::filesystem::path> history_csv;
  /// Continue from `state_file` (and `checkpoint`, `history_csv`) if present.
  bool resume = false;
  /// Also store optimizer moments in the best-weight checkpoint.
  bool save_optimizer = false;
  std::function<void(const TrainRecord&, bool improved)> on_epoch;
};

struct FitResult {
  ParamSet<float> best;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<TrainRecord> history;
};

namespace detail {

inline Tensor<float> scalar_entry(double v) {
  Tensor<float> t(2, 1, 1, 1);
  // High and low parts so doubles survive the f32 payload closely enough for bookkeeping.
  t[0] = static_cast<float>(v);
  t[1] = static_cast<float>(v - static_cast<double>(t[0]));
  return t;
}
inline double scalar_value(const Tensor<float>& t) { return static_cast<double>(t[0]) + static_cast<double>(t[1]); }

}  // namespace detail

/// Full training loop with best-validation checkpointing. The returned
/// parameters are the best epoch's, not the last.
inline FitResult fit(const TrainConfig& cfg, const PatchSet& train_set, const PatchSet& val_set,
                     const FitOptions& opt = {}) {
  cfg.validate();
  require(train_set.size() > 0 && val_set.size() > 0, Errc::TooFewPatches, "train and validation sets must be non-empty");

  ParamSet<float> params = init_params<float>(opt.spec, cfg.seed);
  AdamState state = AdamState::for_params(params);
  BestTracker best;
  std::vector<TrainRecord> history;
  int start_epoch = 0;

  if (opt.resume && opt.state_file && std::filesystem::exists(*opt.state_file)) {
    auto saved = load_model(*opt.state_file);
    validate_params(saved.params, opt.spec);
    params = std::move(saved.params);
    state = adam_from_entries(saved.extras, params);
    start_epoch = static_cast<int>(detail::scalar_value(saved.extras.get("meta.next_epoch")));
    const int best_epoch = static_cast<int>(detail::scalar_value(saved.extras.get("meta.best_epoch")));
    const double best_loss = detail::scalar_value(saved.extras.get("meta.best_val_loss"));
    require(opt.checkpoint.has_value(), Errc::ConfigError, "resume needs the best-weight checkpoint path");
    auto best_model = load_model(*opt.checkpoint);
    best.restore(best_epoch, best_loss, std::move(best_model.params));
    if (opt.history_csv && std::filesystem::exists(*opt.history_csv)) {
      for (const auto& r : load_history(*opt.history_csv))
        if (r.epoch <= start_epoch) history.push_back(r);
    }
    require(static_cast<int>(history.size()) == start_epoch, Errc::StaleArtifact,
            "history has " + std::to_string(history.size()) + " rows but the state file is at epoch " +
                std::to_string(start_epoch));
  }

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto tr = train_epoch(params, state, train_set, cfg, epoch);
    const auto va = evaluate_set(params, val_set, cfg.batch_size);
    require(std::isfinite(va.loss), Errc::NonFinite, "validation loss is non-finite");
    TrainRecord rec{epoch + 1, lr_at(cfg.schedule, epoch), tr.loss, tr.accuracy, va.loss, va.accuracy};
    history.push_back(rec);
    const bool improved = best.update(rec.epoch, va.loss, params);

    if (improved && opt.checkpoint) {
      auto entries = params;
      if (opt.save_optimizer)
        for (auto& e : adam_entries(state)) entries.add(e.name, e.value);
      save_tensors(*opt.checkpoint, entries);
    }
    if (opt.history_csv) bin::write_text_atomic(*opt.history_csv, format_history(history));
    if (opt.state_file) {
      auto entries = params;
      for (auto& e : adam_entries(state)) entries.add(e.name, e.value);
      entries.add("meta.next_epoch", detail::scalar_entry(epoch + 1));
      entries.add("meta.best_epoch", detail::scalar_entry(best.epoch()));
      entries.add("meta.best_val_loss", detail::scalar_entry(best.loss()));
      save_tensors(*opt.state_file, entries);
    }
    if (opt.on_epoch) opt.on_epoch(rec, improved);
  }
  return {best.params(), best.epoch(), best.loss(), std::move(history)};
}

}  // namespace vf
