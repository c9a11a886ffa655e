#pragma once

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trifuse/config.hpp"
#include "trifuse/dataset.hpp"
#include "trifuse/losses.hpp"
#include "trifuse/metrics.hpp"
#include "trifuse/model.hpp"

namespace trifuse {

/// Reduce-on-plateau learning rate plus early stopping, both keyed on validation loss.
class PlateauScheduler {
 public:
  struct Step {
    bool improved = false;
    bool lr_reduced = false;
    bool stop = false;
    double lr = 0.0;  // rate for the next epoch
  };

  PlateauScheduler(double lr, double factor, int lr_patience, int stop_patience, double min_delta = 0.0)
      : lr_(lr), factor_(factor), lr_patience_(lr_patience), stop_patience_(stop_patience), min_delta_(min_delta) {}

  Step observe(double val_loss) {
    ++epoch_;
    Step s;
    if (val_loss < best_ - min_delta_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      lr_wait_ = stop_wait_ = 0;
      s.improved = true;
    } else {
      if (++lr_wait_ >= lr_patience_) {
        lr_ *= factor_;
        lr_wait_ = 0;
        s.lr_reduced = true;
      }
      s.stop = ++stop_wait_ >= stop_patience_;
    }
    s.lr = lr_;
    return s;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epoch() const { return epoch_; }

 private:
  double lr_, factor_;
  int lr_patience_, stop_patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int epoch_ = 0;
  int lr_wait_ = 0, stop_wait_ = 0;
};

/// Mean over the samples of one epoch.
struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;  // rate used during this epoch
  LossBreakdown train;
  double val_total = 0.0;
  double val_dice = 0.0;
  double val_correlation = 0.0;
};

struct RegionSummary {
  double dice_mean = 0.0, dice_std = 0.0;
  double hd_mean = 0.0, hd_std = 0.0;
  int hd_defined = 0, hd_undefined = 0;
};

/// Mean and population std per region; Hausdorff statistics over defined values only.
struct MetricsSummary {
  std::array<RegionSummary, 3> regions{};  // indexed by metrics::Region

  const RegionSummary& operator[](metrics::Region r) const { return regions[static_cast<int>(r)]; }
  double avg_dice() const { return (regions[0].dice_mean + regions[1].dice_mean + regions[2].dice_mean) / 3.0; }
  double avg_hd() const { return (regions[0].hd_mean + regions[1].hd_mean + regions[2].hd_mean) / 3.0; }
};

inline MetricsSummary summarize(const std::vector<metrics::SampleMetrics>& rows) {
  MetricsSummary s;
  for (auto region : metrics::kReportRegions) {
    auto& r = s.regions[static_cast<int>(region)];
    std::vector<double> dice, hd;
    for (const auto& row : rows) {
      dice.push_back(row.metrics[region].dice);
      if (row.metrics[region].hausdorff_mm) hd.push_back(*row.metrics[region].hausdorff_mm);
      else ++r.hd_undefined;
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
      if (v.empty()) return;
      double sum = 0.0;
      for (double x : v) sum += x;
      mean = sum / double(v.size());
      double sq = 0.0;
      for (double x : v) sq += (x - mean) * (x - mean);
      sd = std::sqrt(sq / double(v.size()));
    };
    stats(dice, r.dice_mean, r.dice_std);
    stats(hd, r.hd_mean, r.hd_std);
    r.hd_defined = static_cast<int>(hd.size());
  }
  return s;
}

/// Dice and Hausdorff per region for one predicted mask triple.
inline metrics::RegionMetrics score_sample(const data::RegionMasks& pred, const data::RegionMasks& truth,
                                           const Spacing& spacing, double hd_percentile = 100.0) {
  metrics::RegionMetrics m;
  auto score = [&](metrics::Region r, const Mask& p, const Mask& t) {
    m[r].dice = metrics::dice_score(p, t);
    m[r].hausdorff_mm = metrics::hausdorff_distance(p, t, spacing, hd_percentile);
  };
  score(metrics::Region::et, pred.et, truth.et);
  score(metrics::Region::wt, pred.wt, truth.wt);
  score(metrics::Region::tc, pred.tc, truth.tc);
  return m;
}

/// Thresholds sigmoid outputs at 0.5 and scores each listed sample.
inline std::vector<metrics::SampleMetrics> evaluate(TriFuseNet& model, const Dataset& data,
                                                    const std::vector<std::size_t>& indices,
                                                    double hd_percentile = 100.0) {
  torch::NoGradGuard guard;
  model->eval();
  std::vector<metrics::SampleMetrics> out;
  for (auto i : indices) {
    const auto& s = data.at(i);
    if (s.input.sizes().slice(2) != model->config().net.input.as_array())
      throw Error(ErrorKind::shape_mismatch, "sample '" + s.id + "' does not match the checkpoint input shape");
    const auto probs = torch::sigmoid(model->forward(s.input).logits);
    out.push_back({s.id, score_sample(masks_from_probabilities(probs, s.spacing), s.masks, s.spacing, hd_percentile)});
  }
  return out;
}

inline std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> v(d.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

/// Everything a training or evaluation run emits.
struct RunReport {
  std::string title = "training run";
  std::string config_text;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string mode;
  std::vector<std::string> pair_names;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  bool early_stopped = false;
  std::vector<std::string> train_ids, test_ids;
  std::vector<metrics::SampleMetrics> test_metrics;
  MetricsSummary summary;
  bool deterministic = true;
  double wall_seconds = 0.0;

  std::string to_text() const {
    std::ostringstream os;
    char buf[256];
    os << "== " << title << " ==\n";
    std::snprintf(buf, sizeof buf, "config hash: %016llx\n", static_cast<unsigned long long>(config_hash));
    os << buf << "seed: " << seed << "\nmode: " << mode << '\n';
    if (deterministic)
      os << "wall time: omitted in deterministic mode (see timing.txt)\n";
    else {
      std::snprintf(buf, sizeof buf, "wall time: %.3f s\n", wall_seconds);
      os << buf;
    }
    os << "note: the validation set used for LR scheduling and early stopping is the test split\n";
    os << "train samples: " << train_ids.size() << ", test samples: " << test_ids.size() << '\n';
    if (!epochs.empty()) {
      os << "best epoch: " << best_epoch << (early_stopped ? " (early stopped)" : "") << '\n';
      os << "\nepoch  lr          train_dice  train_corr  train_total  val_total   val_dice    val_corr\n";
      for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%5d  %.4e  %.8f  %.8f  %.8f   %.8f  %.8f  %.8f\n", e.epoch, e.lr, e.train.dice,
                      e.train.correlation_sum(), e.train.total, e.val_total, e.val_dice, e.val_correlation);
        os << buf;
      }
    }
    os << "\nregion  dice_mean   dice_std    hd_mean_mm  hd_std_mm   hd_undefined\n";
    for (auto r : metrics::kReportRegions) {
      const auto& s = summary[r];
      std::snprintf(buf, sizeof buf, "%-6s  %.8f  %.8f  %.6f  %.6f  %d\n", metrics::region_name(r), s.dice_mean,
                    s.dice_std, s.hd_mean, s.hd_std, s.hd_undefined);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "avg     %.8f              %.6f\n", summary.avg_dice(), summary.avg_hd());
    os << buf;
    os << "\n-- config --\n" << config_text;
    return os.str();
  }

  void write_epochs_csv(std::ostream& os) const {
    os << "epoch,lr,train_dice";
    for (const auto& p : pair_names) os << ",train_corr_" << p;
    os << ",train_total,val_total,val_dice,val_correlation\n";
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      return std::string(buf);
    };
    for (const auto& e : epochs) {
      os << e.epoch << ',' << num(e.lr) << ',' << num(e.train.dice);
      for (double p : e.train.pairs) os << ',' << num(p);
      os << ',' << num(e.train.total) << ',' << num(e.val_total) << ',' << num(e.val_dice) << ','
         << num(e.val_correlation) << '\n';
    }
  }

  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
      std::ofstream f(dir / name);
      if (!f) throw Error(ErrorKind::io, "cannot write " + (dir / name).string());
      return f;
    };
    open("report.txt") << to_text();
    auto m = open("metrics.csv");
    metrics::write_metrics_csv(m, test_metrics);
    if (!epochs.empty()) {
      auto e = open("epochs.csv");
      write_epochs_csv(e);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f\n", wall_seconds);
    open("timing.txt") << buf;
  }
};

inline std::string pair_name(const ModalityPair& p, int level) {
  return std::string(modality_name(p.source)) + "-" + modality_name(p.target) + "@L" + std::to_string(level);
}

/// Applies thread count and determinism flags for a run.
inline void configure_runtime(const ExperimentConfig& cfg) {
  at::set_num_threads(cfg.threads);
  at::globalContext().setDeterministicAlgorithms(cfg.deterministic, false);
}

struct TrainHooks {
  /// Replaces the measured validation loss (epoch, measured) -> used.
  std::function<double(int, double)> validation_override;
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TriFuseNet model{nullptr};
  RunReport report;
};

namespace detail {

struct StepLoss {
  torch::Tensor value;
  LossBreakdown breakdown;
};

inline StepLoss compute_loss(TriFuseNet& model, const PreparedSample& s, double lambda,
                             std::vector<std::string>* pair_names = nullptr) {
  auto out = model->forward(s.input);
  const auto probs = torch::sigmoid(out.logits);
  const auto dice = dice_loss(probs, s.target);
  const auto pairs = correlation_loss(out.plain_couples());
  if (pair_names && pair_names->empty())
    for (const auto& c : out.couples) pair_names->push_back(pair_name(c.couple.pair, c.level));
  auto t = total_loss(dice, pairs, lambda);
  if (!std::isfinite(t.breakdown.dice))
    throw Error(ErrorKind::divergence, "dice loss became non-finite on sample '" + s.id + "'");
  for (std::size_t k = 0; k < t.breakdown.pairs.size(); ++k)
    if (!std::isfinite(t.breakdown.pairs[k]))
      throw Error(ErrorKind::divergence, "correlation loss for pair " +
                                             pair_name(out.couples[k].couple.pair, out.couples[k].level) +
                                             " became non-finite on sample '" + s.id + "'");
  return {t.value, t.breakdown};
}

inline void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
  acc.dice += b.dice;
  acc.total += b.total;
  acc.lambda = b.lambda;
  if (acc.pairs.size() < b.pairs.size()) acc.pairs.resize(b.pairs.size(), 0.0);
  for (std::size_t k = 0; k < b.pairs.size(); ++k) acc.pairs[k] += b.pairs[k];
}

inline void scale(LossBreakdown& acc, double n) {
  acc.dice /= n;
  acc.total /= n;
  for (auto& p : acc.pairs) p /= n;
}

using Snapshot = std::vector<std::pair<std::string, torch::Tensor>>;

inline Snapshot snapshot(TriFuseNet& model) {
  torch::NoGradGuard guard;
  Snapshot s;
  for (const auto& p : model->named_parameters()) s.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : model->named_buffers()) s.emplace_back(b.key(), b.value().detach().clone());
  return s;
}

inline void restore(TriFuseNet& model, const Snapshot& s) {
  torch::NoGradGuard guard;
  auto params = model->named_parameters();
  auto buffers = model->named_buffers();
  for (const auto& [name, t] : s) {
    if (auto* p = params.find(name)) p->copy_(t);
    else if (auto* b = buffers.find(name)) b->copy_(t);
  }
}

}  // namespace detail

/// Trains on the seeded train split, schedules on the test split, and restores the
/// best-validation weights before scoring the test split.
inline TrainResult train(const ExperimentConfig& cfg, const Dataset& data, const TrainHooks& hooks = {}) {
  cfg.validate();
  configure_runtime(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto split = split_dataset(data.size(), cfg.train_fraction, cfg.seed);
  const double lambda = cfg.mode == FusionMode::tri ? cfg.lambda : 0.0;

  TrainResult result;
  result.model = TriFuseNet(cfg.model_config(), derive_seed(cfg.seed, "init"));
  auto& model = result.model;
  torch::manual_seed(derive_seed(cfg.seed, "dropout"));
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  PlateauScheduler sched(cfg.learning_rate, cfg.lr_factor, cfg.lr_patience, cfg.early_stop_patience, cfg.min_delta);
  Rng order_rng(derive_seed(cfg.seed, "order"));

  auto& report = result.report;
  report.config_text = cfg.to_text();
  report.config_hash = cfg.hash();
  report.seed = cfg.seed;
  report.mode = to_string(cfg.mode);
  report.deterministic = cfg.deterministic;
  for (auto i : split.train) report.train_ids.push_back(data[i].id);
  for (auto i : split.test) report.test_ids.push_back(data[i].id);

  detail::Snapshot best;
  std::vector<std::size_t> order = split.train;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = sched.lr();
    model->train();
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    for (auto i : order) {
      optimizer.zero_grad();
      auto loss = detail::compute_loss(model, data[i], lambda, &report.pair_names);
      loss.value.backward();
      optimizer.step();
      detail::accumulate(rec.train, loss.breakdown);
    }
    detail::scale(rec.train, double(order.size()));

    {
      torch::NoGradGuard guard;
      model->eval();
      LossBreakdown val;
      for (auto i : split.test) detail::accumulate(val, detail::compute_loss(model, data[i], lambda).breakdown);
      detail::scale(val, double(split.test.size()));
      rec.val_total = val.total;
      rec.val_dice = val.dice;
      rec.val_correlation = val.correlation_sum();
    }
    const double monitored = hooks.validation_override ? hooks.validation_override(epoch, rec.val_total) : rec.val_total;
    const auto step = sched.observe(monitored);
    if (step.improved) best = detail::snapshot(model);
    for (auto& group : optimizer.param_groups())
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(step.lr);
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (step.stop) {
      report.early_stopped = true;
      break;
    }
  }
  report.best_epoch = sched.best_epoch();
  if (!best.empty()) detail::restore(model, best);

  report.test_metrics = evaluate(model, data, split.test);
  report.summary = summarize(report.test_metrics);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

inline constexpr const char* kConfigKey = "__config__";
inline constexpr const char* kConfigHashKey = "__config_hash__";

/// Config echo, its hash, and every named parameter and buffer in one torch archive.
inline void save_checkpoint(TriFuseNet& model, const ExperimentConfig& cfg, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  archive.write(kConfigKey, c10::IValue(cfg.to_text()));
  archive.write(kConfigHashKey, c10::IValue(static_cast<std::int64_t>(cfg.hash())));
  for (const auto& p : model->named_parameters()) archive.write(p.key(), p.value().detach(), false);
  for (const auto& b : model->named_buffers()) archive.write(b.key(), b.value().detach(), true);
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::io, "cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

struct Checkpoint {
  ExperimentConfig config;
  TriFuseNet model{nullptr};
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::io, "cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue text, hash;
  if (!archive.try_read(kConfigKey, text) || !archive.try_read(kConfigHashKey, hash))
    throw Error(ErrorKind::unsupported_format, "checkpoint has no embedded config");
  Checkpoint ck;
  ck.config = parse_config(text.toStringRef());
  if (static_cast<std::uint64_t>(hash.toInt()) != fnv1a64(text.toStringRef()))
    throw Error(ErrorKind::checksum, "checkpoint config hash does not match its config text");
  ck.model = TriFuseNet(ck.config.model_config(), 0);
  torch::NoGradGuard guard;
  for (auto& p : ck.model->named_parameters()) {
    torch::Tensor t;
    if (!archive.try_read(p.key(), t)) throw Error(ErrorKind::unsupported_format, "checkpoint lacks tensor " + p.key());
    p.value().copy_(t);
  }
  for (auto& b : ck.model->named_buffers()) {
    torch::Tensor t;
    if (!archive.try_read(b.key(), t, true))
      throw Error(ErrorKind::unsupported_format, "checkpoint lacks buffer " + b.key());
    b.value().copy_(t);
  }
  return ck;
}

/// Scores every sample of `data` with a checkpointed model.
inline RunReport evaluate_checkpoint(Checkpoint& ck, const Dataset& data) {
  const auto t0 = std::chrono::steady_clock::now();
  configure_runtime(ck.config);
  RunReport r;
  r.title = "evaluation";
  r.config_text = ck.config.to_text();
  r.config_hash = ck.config.hash();
  r.seed = ck.config.seed;
  r.mode = to_string(ck.config.mode);
  r.deterministic = ck.config.deterministic;
  for (const auto& s : data) r.test_ids.push_back(s.id);
  r.test_metrics = evaluate(ck.model, data, all_indices(data));
  r.summary = summarize(r.test_metrics);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace trifuse
