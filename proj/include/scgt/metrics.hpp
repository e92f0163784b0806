#pragma once

#include "scgt/core.hpp"

#include <cmath>
#include <span>

namespace scgt {

inline double mean_squared_error(std::span<const double> pred, std::span<const double> target) {
  require(pred.size() == target.size() && !pred.empty(), "MSE needs equal, non-empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    s += r * r;
  }
  return s / static_cast<double>(pred.size());
}

struct Correlation {
  double r = 0.0;
  bool degenerate = false;  ///< one side had zero variance; r reported as 0
};

inline Correlation pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && !a.empty(), "Pearson r needs equal, non-empty inputs");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  return {sab / std::sqrt(saa * sbb), false};
}

inline double accuracy(std::span<const int> pred, std::span<const int> label) {
  require(pred.size() == label.size() && !pred.empty(), "accuracy needs equal, non-empty inputs");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == label[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// F1 of the positive class (label 1); 0 when there are no true positives.
inline double f1_score(std::span<const int> pred, std::span<const int> label) {
  require(pred.size() == label.size() && !pred.empty(), "F1 needs equal, non-empty inputs");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && label[i] == 1) ++tp;
    else if (pred[i] == 1) ++fp;
    else if (label[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

}  // namespace scgt
