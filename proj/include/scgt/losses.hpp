#pragma once

#include "scgt/core.hpp"

#include <algorithm>
#include <cmath>

namespace scgt {

/// Huber-style loss: 0.5 r^2 / delta for |r| < delta, |r| - 0.5 delta otherwise.
inline double smooth_l1(double pred, double target, double delta = 1.0) {
  require(delta > 0.0, "smooth_l1 delta must be positive");
  const double r = std::abs(pred - target);
  return r < delta ? 0.5 * r * r / delta : r - 0.5 * delta;
}

/// d smooth_l1 / d pred.
inline double smooth_l1_grad(double pred, double target, double delta = 1.0) {
  const double r = pred - target;
  if (std::abs(r) < delta) return r / delta;
  return r > 0.0 ? 1.0 : -1.0;
}

struct LossGrad {
  double loss = 0.0;
  Vec dlogits;
};

/// Softmax cross-entropy over logits for the integer class `label`.
inline LossGrad cross_entropy(const Vec& logits, int label) {
  require(label >= 0 && label < logits.size(), "class label out of range");
  const double mx = logits.maxCoeff();
  Vec p = (logits.array() - mx).exp();
  const double z = p.sum();
  p /= z;
  LossGrad out;
  out.loss = std::log(z) + mx - logits(label);
  out.dlogits = p;
  out.dlogits(label) -= 1.0;
  return out;
}

}  // namespace scgt
