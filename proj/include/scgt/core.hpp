#pragma once

// Shared matrix aliases and the error hierarchy used across the library.

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace scgt {

/// All matrices are row-major so that node rows are contiguous and flattening
/// (readout concatenation, projection reshapes, checkpoints) is plain memory order.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

/// Bad input: shape mismatch, violated type invariant, unknown config key.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf, eigensolver failure or divergence.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system and parse failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer; derives well-mixed sub-seeds from a base seed.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace scgt
