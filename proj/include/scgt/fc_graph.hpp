#pragma once

// Functional-connectivity matrices and the graph objects derived from them:
// thresholded adjacency, node features, normalized Laplacian and Laplacian
// eigenvector positional encodings.

#include "scgt/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

namespace scgt {

/// Symmetric N x N Pearson correlation matrix of one subject.
struct FCMatrix {
  Mat values;

  [[nodiscard]] Eigen::Index n_nodes() const { return values.rows(); }
};

/// Adjacency, node features and positional encodings of one subject.
struct BrainGraph {
  Mat adjacency;      ///< N x N, weighted, zero diagonal
  Mat node_features;  ///< N x N, row i is h_i
  Mat pos_enc;        ///< N x d_pe, row i is lambda_i

  [[nodiscard]] Eigen::Index n_nodes() const { return adjacency.rows(); }
};

/// Tolerance on the unit diagonal. Off-diagonal symmetry is checked exactly.
inline constexpr double kDiagonalTolerance = 1e-9;

inline void validate_fc(const FCMatrix& fc) {
  const Mat& v = fc.values;
  if (v.rows() != v.cols() || v.rows() == 0) {
    std::ostringstream os;
    os << "FC matrix must be square and non-empty, got " << v.rows() << "x" << v.cols();
    throw ValidationError(os.str());
  }
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double x = v(i, j);
      if (!std::isfinite(x) || x < -1.0 || x > 1.0) {
        std::ostringstream os;
        os << "FC entry (" << i << "," << j << ") = " << x << " is outside [-1, 1]";
        throw ValidationError(os.str());
      }
      if (x != v(j, i)) {
        std::ostringstream os;
        os << "FC matrix is not symmetric at (" << i << "," << j << "): " << x << " vs "
           << v(j, i);
        throw ValidationError(os.str());
      }
    }
    if (std::abs(v(i, i) - 1.0) > kDiagonalTolerance) {
      std::ostringstream os;
      os << "FC diagonal entry (" << i << "," << i << ") = " << v(i, i) << " is not 1";
      throw ValidationError(os.str());
    }
  }
}

/// Pearson correlation matrix of the columns of `series` (T x N), exactly
/// symmetric with a unit diagonal.
inline Mat pearson_correlation(const Mat& series) {
  const Eigen::Index t = series.rows();
  const Eigen::Index n = series.cols();
  require(t >= 2, "need at least two time points");
  Mat centered = series.rowwise() - series.colwise().mean();
  Vec norms = centered.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(norms(j) > 0.0)) throw NumericError("constant series in column " + std::to_string(j));
  }
  Mat cov = centered.transpose() * centered;
  Mat corr(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    corr(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = std::clamp(cov(i, j) / (norms(i) * norms(j)), -1.0, 1.0);
      corr(i, j) = r;
      corr(j, i) = r;
    }
  }
  return corr;
}

/// Keeps entries with |fc[i][j]| >= threshold, zeroes the diagonal.
/// threshold = 0 gives the fully connected graph.
inline Mat build_adjacency(const FCMatrix& fc, double threshold) {
  require(threshold >= 0.0 && threshold < 1.0, "threshold must lie in [0, 1)");
  validate_fc(fc);
  const Eigen::Index n = fc.n_nodes();
  Mat adj = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double e = fc.values(i, j);
      if (std::abs(e) >= threshold) adj(i, j) = e;
    }
  }
  return adj;
}

/// L = I - D^{-1/2} A D^{-1/2} with degrees D[i] = sum_j |A[i][j]|.
/// Isolated nodes get L[i][i] = 1 and a zero off-diagonal row.
inline Mat normalized_laplacian(const Mat& adjacency) {
  const Eigen::Index n = adjacency.rows();
  require(adjacency.cols() == n, "adjacency must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    require(adjacency(i, i) == 0.0, "adjacency diagonal must be zero");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      require(adjacency(i, j) == adjacency(j, i), "adjacency must be symmetric");
    }
  }
  Vec inv_sqrt_deg(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double deg = adjacency.row(i).cwiseAbs().sum();
    inv_sqrt_deg(i) = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Mat lap = -(inv_sqrt_deg.asDiagonal() * adjacency * inv_sqrt_deg.asDiagonal());
  lap.diagonal().array() += 1.0;
  // Exact symmetry regardless of the order of the scaling products.
  Mat sym = 0.5 * (lap + lap.transpose());
  return sym;
}

/// Flips each column so that its largest-magnitude entry (first on ties) is positive.
inline void fix_eigenvector_signs(Mat& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, c) < 0.0) vectors.col(c) *= -1.0;
  }
}

struct Spectrum {
  Vec eigenvalues;  ///< ascending
  Mat eigenvectors; ///< columns, sign-fixed
};

inline Spectrum symmetric_spectrum(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(sym);
  if (solver.info() != Eigen::Success) {
    std::ostringstream os;
    os << "symmetric eigendecomposition did not converge (n=" << sym.rows()
       << ", max iterations per eigenvalue="
       << Eigen::SelfAdjointEigenSolver<Mat>::m_maxIterations << ")";
    throw NumericError(os.str());
  }
  Spectrum s{solver.eigenvalues(), solver.eigenvectors()};
  fix_eigenvector_signs(s.eigenvectors);
  return s;
}

/// The d_pe eigenvectors of L with the smallest eigenvalues. The trivial
/// (smallest) one is dropped when d_pe < N and kept when d_pe == N.
inline Mat laplacian_positional_encodings(const Mat& laplacian, Eigen::Index d_pe) {
  const Eigen::Index n = laplacian.rows();
  require(laplacian.cols() == n, "Laplacian must be square");
  require(d_pe >= 1 && d_pe <= n, "d_pe must lie in [1, N]");
  Spectrum s = symmetric_spectrum(laplacian);
  const Eigen::Index first = d_pe < n ? 1 : 0;
  return s.eigenvectors.middleCols(first, d_pe);
}

/// node_features are the FC rows with the diagonal zeroed.
inline BrainGraph fc_to_graph(const FCMatrix& fc, double threshold, Eigen::Index d_pe) {
  BrainGraph g;
  g.adjacency = build_adjacency(fc, threshold);
  g.node_features = fc.values;
  g.node_features.diagonal().setZero();
  g.pos_enc = laplacian_positional_encodings(normalized_laplacian(g.adjacency), d_pe);
  return g;
}

}  // namespace scgt
