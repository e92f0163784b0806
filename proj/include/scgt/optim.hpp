#pragma once

// Adam with bias correction, reduce-on-plateau learning-rate schedule and
// early stopping on validation loss.

#include "scgt/core.hpp"
#include "scgt/model.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace scgt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Params m;  ///< first moments
  Params v;  ///< second moments
  std::int64_t step = 0;
};

inline AdamState adam_init(const Params& params) { return {zeros_like(params), zeros_like(params), 0}; }

/// One Adam update in place.
inline void adam_step(Params& params, const Params& grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  std::vector<double*> p, m, v;
  std::vector<const double*> g;
  std::vector<Eigen::Index> sizes;
  for_each_tensor(params, [&](const std::string&, auto& t) {
    p.push_back(t.data());
    sizes.push_back(t.size());
  });
  for_each_tensor(grads, [&](const std::string&, const auto& t) { g.push_back(t.data()); });
  for_each_tensor(state.m, [&](const std::string&, auto& t) { m.push_back(t.data()); });
  for_each_tensor(state.v, [&](const std::string&, auto& t) { v.push_back(t.data()); });
  require(g.size() == p.size() && m.size() == p.size() && v.size() == p.size(),
          "Adam: params, grads and moments disagree");

  for (std::size_t k = 0; k < p.size(); ++k) {
    for (Eigen::Index i = 0; i < sizes[k]; ++i) {
      const double gi = g[k][i];
      m[k][i] = cfg.beta1 * m[k][i] + (1.0 - cfg.beta1) * gi;
      v[k][i] = cfg.beta2 * v[k][i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[k][i] / bc1;
      const double vhat = v[k][i] / bc2;
      p[k][i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

/// Multiplies the learning rate by `factor` once the monitored loss has not
/// strictly improved for more than `patience` consecutive epochs; the counter
/// then restarts. Mirrors the usual "min" mode plateau scheduler with no
/// improvement threshold and no cooldown.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience) : lr_(lr), factor_(factor), patience_(patience) {
    require(lr > 0.0, "learning rate must be positive");
    require(factor > 0.0 && factor < 1.0, "plateau factor must lie in (0, 1)");
    require(patience >= 1, "plateau patience must be positive");
  }

  /// Returns true when the learning rate was reduced by this call.
  bool step(double loss) {
    if (loss < best_) {
      best_ = loss;
      bad_epochs_ = 0;
      return false;
    }
    if (++bad_epochs_ > patience_) {
      lr_ *= factor_;
      bad_epochs_ = 0;
      return true;
    }
    return false;
  }

  [[nodiscard]] double lr() const { return lr_; }
  [[nodiscard]] int bad_epochs() const { return bad_epochs_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

/// Signals a stop once `patience` consecutive epochs pass without a strict
/// improvement of the validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    require(patience >= 1, "early-stopping patience must be positive");
  }

  /// Records one epoch; returns true when training should stop.
  bool step(double loss) {
    if (loss < best_) {
      best_ = loss;
      bad_epochs_ = 0;
      improved_ = true;
      return false;
    }
    improved_ = false;
    return ++bad_epochs_ >= patience_;
  }

  [[nodiscard]] bool improved() const { return improved_; }
  [[nodiscard]] double best() const { return best_; }
  [[nodiscard]] int bad_epochs() const { return bad_epochs_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
  bool improved_ = false;
};

}  // namespace scgt
