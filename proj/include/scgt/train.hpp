#pragma once

// Training protocol: mini-batch Adam on smooth-L1 / cross-entropy, plateau LR
// schedule, early stopping with best-epoch restore, and test-set evaluation.

#include "scgt/core.hpp"
#include "scgt/fc_graph.hpp"
#include "scgt/folds.hpp"
#include "scgt/gradients.hpp"
#include "scgt/io.hpp"
#include "scgt/metrics.hpp"
#include "scgt/model.hpp"
#include "scgt/optim.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace scgt {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-4;
  AdamConfig adam{};
  double plateau_factor = 0.3;
  int plateau_patience = 30;
  int early_stop_patience = 30;
  int folds = 5;
  double smooth_l1_delta = 1.0;
  std::uint64_t seed = 0;
  /// Random sign flips of positional-encoding columns per training sample.
  bool pe_sign_flip = false;
  /// Train regression heads on z-scored targets (fit on the training split);
  /// predictions and metrics are reported on the original scale.
  bool standardize_targets = true;
  /// Regress targets on one-hot group labels and keep the residuals.
  bool residualize = false;
  unsigned threads = 1;

  void validate() const {
    require(epochs >= 0, "epochs must be non-negative");
    require(batch_size >= 1, "batch_size must be positive");
    require(lr > 0.0, "lr must be positive");
    require(plateau_factor > 0.0 && plateau_factor < 1.0, "plateau_factor must lie in (0, 1)");
    require(plateau_patience >= 1, "plateau_patience must be positive");
    require(early_stop_patience >= 1, "early_stop_patience must be positive");
    require(folds >= 2, "folds must be at least 2");
    require(smooth_l1_delta > 0.0, "smooth_l1_delta must be positive");
    require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
            "Adam betas must lie in [0, 1)");
    require(adam.eps > 0.0, "Adam eps must be positive");
    require(threads >= 1, "threads must be positive");
  }
};

struct Sample {
  std::string id;
  BrainGraph graph;
  double target = 0.0;
  std::string group;
};

/// Reads a manifest and builds one graph per subject.
inline std::vector<Sample> load_dataset(const fs::path& manifest, double threshold) {
  std::vector<Sample> out;
  for (const ManifestRow& row : read_manifest(manifest)) {
    const FCMatrix fc = read_fc_csv(resolve_relative(manifest, row.fc_path));
    out.push_back({row.subject_id, fc_to_graph(fc, threshold, fc.n_nodes()), row.target, row.group_label});
  }
  return out;
}

/// Residuals of an OLS fit of targets on an intercept plus one-hot group indicators.
inline std::vector<double> residualize_targets(std::span<const double> targets,
                                               std::span<const std::string> groups) {
  require(targets.size() == groups.size(), "targets and groups differ in length");
  std::vector<std::string> levels(groups.begin(), groups.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const auto n = static_cast<Eigen::Index>(targets.size());
  // Intercept plus all but the first level (full-rank design).
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(levels.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    const auto it = std::lower_bound(levels.begin(), levels.end(), groups[static_cast<std::size_t>(i)]);
    const auto level = static_cast<Eigen::Index>(it - levels.begin());
    if (level > 0) design(i, level) = 1.0;
  }
  const Vec y = Eigen::Map<const Vec>(targets.data(), n);
  const Vec coef = design.colPivHouseholderQr().solve(y);
  const Vec res = y - design * coef;
  return {res.data(), res.data() + res.size()};
}

/// Affine map between the reported target scale and the training scale.
struct TargetScaler {
  double mean = 0.0;
  double scale = 1.0;

  [[nodiscard]] double to_train(double y) const { return (y - mean) / scale; }
  [[nodiscard]] double to_report(double y) const { return y * scale + mean; }

  static TargetScaler fit(std::span<const double> y) {
    TargetScaler s;
    if (y.empty()) return s;
    s.mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(y.size()));
    s.scale = sd > 0.0 ? sd : 1.0;
    return s;
  }
};

struct Metrics {
  Task task = Task::Regression;
  std::size_t n = 0;
  double loss = 0.0;  ///< mean training-scale loss
  double mse = 0.0;
  double pearson_r = 0.0;
  bool pearson_degenerate = false;
  double accuracy = 0.0;
  double f1 = 0.0;

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j{{"n", n}, {"loss", loss}};
    if (task == Task::Regression) {
      j["mse"] = mse;
      j["pearson_r"] = pearson_r;
      if (pearson_degenerate) j["pearson_r_warning"] = "zero-variance predictions or targets; r reported as 0";
    } else {
      j["accuracy"] = accuracy;
      j["f1"] = f1;
    }
    return j;
  }
};

struct Evaluation {
  Metrics metrics;
  std::vector<double> predictions;  ///< reported scale (regression) or predicted class
};

/// Metrics of `params` on the given samples. Targets are on the reported scale.
inline Evaluation evaluate(const Params& params, const ModelConfig& cfg, std::span<const Sample> samples,
                           std::span<const std::size_t> idx, const TargetScaler& scaler = {},
                           const LossConfig& lc = {}) {
  require(!idx.empty(), "evaluation split is empty");
  Evaluation ev;
  ev.metrics.task = cfg.task;
  ev.metrics.n = idx.size();
  std::vector<double> targets;
  std::vector<int> pred_cls, true_cls;
  double loss = 0.0;
  for (std::size_t i : idx) {
    const Sample& s = samples[i];
    const ForwardTrace tr = forward(s.graph, params, cfg);
    if (cfg.task == Task::Regression) {
      loss += sample_loss(tr.prediction, scaler.to_train(s.target), cfg.task, lc).loss;
      ev.predictions.push_back(scaler.to_report(tr.prediction(0)));
      targets.push_back(s.target);
    } else {
      loss += sample_loss(tr.prediction, s.target, cfg.task, lc).loss;
      const int c = tr.prediction(1) > tr.prediction(0) ? 1 : 0;
      ev.predictions.push_back(c);
      pred_cls.push_back(c);
      true_cls.push_back(class_label(s.target));
    }
  }
  ev.metrics.loss = loss / static_cast<double>(idx.size());
  if (cfg.task == Task::Regression) {
    ev.metrics.mse = mean_squared_error(ev.predictions, targets);
    const Correlation c = pearson(ev.predictions, targets);
    ev.metrics.pearson_r = c.r;
    ev.metrics.pearson_degenerate = c.degenerate;
  } else {
    ev.metrics.accuracy = accuracy(pred_cls, true_cls);
    ev.metrics.f1 = f1_score(pred_cls, true_cls);
  }
  return ev;
}

inline Evaluation evaluate(const Params& params, const ModelConfig& cfg, std::span<const Sample> samples,
                           const TargetScaler& scaler = {}, const LossConfig& lc = {}) {
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  return evaluate(params, cfg, samples, all, scaler, lc);
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  Metrics val_metrics;
  double wall_seconds = 0.0;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"epoch", epoch},     {"train_loss", train_loss}, {"val_loss", val_loss},
            {"lr", lr},           {"metrics", val_metrics.to_json()},
            {"wall_seconds", wall_seconds}};
  }
};

struct TrainResult {
  Params params;  ///< best-validation-epoch parameters
  TargetScaler scaler;
  std::vector<EpochRecord> history;
  int best_epoch = 0;  ///< 0 means the initial parameters
  int epochs_run = 0;
  bool early_stopped = false;
  bool diverged = false;
  std::string divergence_message;
  Metrics validation;
  Metrics test;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline Mat sign_flipped(const Mat& pe, std::mt19937_64& rng) {
  Mat out = pe;
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    if (coin(rng)) out.col(c) *= -1.0;
  return out;
}

}  // namespace detail

/// Runs the full protocol on one split. Never throws on divergence: the result
/// carries diverged = true and the last good (best) parameters.
inline TrainResult train(std::span<const Sample> samples, const Split& split, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, const EpochCallback& on_epoch = {},
                         std::optional<Params> initial = std::nullopt) {
  mcfg.validate();
  tcfg.validate();
  require(!split.train.empty(), "training split is empty");
  require(!split.validation.empty(), "validation split is empty");
  for (const Sample& s : samples) check_graph(s.graph, mcfg);

  TrainResult res;
  const LossConfig lc{tcfg.smooth_l1_delta};
  Params params = initial ? std::move(*initial) : init_params(mcfg, tcfg.seed);
  validate_params(params, mcfg);

  if (mcfg.task == Task::Regression && tcfg.standardize_targets) {
    std::vector<double> ytrain;
    for (std::size_t i : split.train) ytrain.push_back(samples[i].target);
    res.scaler = TargetScaler::fit(ytrain);
  }
  auto train_target = [&](const Sample& s) {
    return mcfg.task == Task::Regression ? res.scaler.to_train(s.target) : s.target;
  };

  std::vector<BatchItem> val_items;
  for (std::size_t i : split.validation)
    val_items.push_back({&samples[i].graph, train_target(samples[i]), samples[i].id});

  AdamState opt = adam_init(params);
  PlateauScheduler sched(tcfg.lr, tcfg.plateau_factor, tcfg.plateau_patience);
  EarlyStopping stopper(tcfg.early_stop_patience);
  std::mt19937_64 rng(splitmix64(tcfg.seed));

  Params best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(split.train.begin(), split.train.end());
  std::vector<BrainGraph> flipped;

  try {
    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      const double lr = sched.lr();
      std::shuffle(order.begin(), order.end(), rng);
      double loss_sum = 0.0;
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(tcfg.batch_size)) {
        const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(tcfg.batch_size));
        std::vector<BatchItem> batch;
        if (tcfg.pe_sign_flip) flipped.clear(), flipped.reserve(e - b);
        for (std::size_t k = b; k < e; ++k) {
          const Sample& s = samples[order[k]];
          const BrainGraph* g = &s.graph;
          if (tcfg.pe_sign_flip) {
            flipped.push_back(s.graph);
            flipped.back().pos_enc = detail::sign_flipped(s.graph.pos_enc, rng);
            g = &flipped.back();
          }
          batch.push_back({g, train_target(s), s.id});
        }
        const LossAndGrads lg = loss_and_gradients(batch, params, mcfg, lc, tcfg.threads);
        loss_sum += lg.loss * static_cast<double>(batch.size());
        adam_step(params, lg.grads, opt, lr, tcfg.adam);
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.train_loss = loss_sum / static_cast<double>(order.size());
      const Evaluation val = evaluate(params, mcfg, samples, split.validation, res.scaler, lc);
      rec.val_loss = val.metrics.loss;
      rec.val_metrics = val.metrics;
      if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
        throw NumericError("loss became non-finite at epoch " + std::to_string(epoch));
      }
      if (rec.val_loss < best_val) {
        best_val = rec.val_loss;
        best = params;
        res.best_epoch = epoch;
      }
      sched.step(rec.val_loss);
      const bool stop = stopper.step(rec.val_loss);
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res.history.push_back(rec);
      res.epochs_run = epoch;
      if (on_epoch) on_epoch(rec);
      if (stop) {
        res.early_stopped = true;
        break;
      }
    }
  } catch (const NumericError& e) {
    res.diverged = true;
    res.divergence_message = e.what();
  }

  res.params = std::move(best);
  if (!res.diverged) {
    res.validation = evaluate(res.params, mcfg, samples, split.validation, res.scaler, lc).metrics;
    if (!split.test.empty()) res.test = evaluate(res.params, mcfg, samples, split.test, res.scaler, lc).metrics;
  }
  return res;
}

}  // namespace scgt
