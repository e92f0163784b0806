#pragma once

// Hard community assignment from the learned membership generator, partition
// agreement (adjusted Rand index) and export of the node-by-community
// membership matrix.

#include "scgt/core.hpp"
#include "scgt/io.hpp"
#include "scgt/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace scgt {

/// Label given to nodes whose membership row is all zero.
inline constexpr int kUnassigned = 0;

struct ClusterAssignment {
  std::vector<int> labels;  ///< 1..k_r, or kUnassigned
  Mat membership;           ///< N x k_r, non-negative
  int layer = 0;

  [[nodiscard]] int n_unassigned() const {
    return static_cast<int>(std::count(labels.begin(), labels.end(), kUnassigned));
  }
};

/// Row-wise argmax with the lowest index winning ties.
inline ClusterAssignment assign_from_membership(Mat membership, int layer = 0) {
  ClusterAssignment a;
  a.layer = layer;
  a.labels.resize(static_cast<std::size_t>(membership.rows()), kUnassigned);
  for (Eigen::Index i = 0; i < membership.rows(); ++i) {
    double best = 0.0;
    for (Eigen::Index c = 0; c < membership.cols(); ++c) {
      if (membership(i, c) > best) {
        best = membership(i, c);
        a.labels[static_cast<std::size_t>(i)] = static_cast<int>(c) + 1;
      }
    }
  }
  a.membership = std::move(membership);
  return a;
}

/// Assignment from layer `layer`'s theta1 (layer 0's when tied).
inline ClusterAssignment assign_clusters(const Params& params, const ModelConfig& cfg, const Mat& pos_enc,
                                         int layer = 0) {
  require(cfg.mode == Mode::Scgt, "cluster assignment needs an scgt model");
  require(layer >= 0 && layer < cfg.n_layers(), "layer index out of range");
  return assign_from_membership(cluster_membership(theta1_for(params, cfg, layer), pos_enc), layer);
}

inline double choose2(double n) { return n * (n - 1.0) / 2.0; }

/// Adjusted Rand index from the pair-counting contingency table. Two
/// single-cluster partitions (index and expectation coincide) count as 1.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size(), "label vectors differ in length");
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cells[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : cells) index += choose2(v);
  for (const auto& [k, v] : rows) sum_a += choose2(v);
  for (const auto& [k, v] : cols) sum_b += choose2(v);
  const double total = choose2(static_cast<double>(a.size()));
  if (total == 0.0) return 1.0;
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// CSV with header `node,label,m_1..m_k`; nodes are numbered from 1.
inline void export_membership(const ClusterAssignment& a, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "node,label";
  for (Eigen::Index c = 0; c < a.membership.cols(); ++c) out << ",m_" << (c + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < a.membership.rows(); ++i) {
    out << (i + 1) << ',' << a.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < a.membership.cols(); ++c) out << ',' << format_double(a.membership(i, c));
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline ClusterAssignment read_membership(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "node" || header[1] != "label") {
    throw IoError(path.string() + ": header must start with 'node,label'");
  }
  const auto k = static_cast<Eigen::Index>(header.size() - 2);
  std::vector<std::vector<double>> rows;
  ClusterAssignment a;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != k + 2) throw IoError(path.string() + ": ragged row");
    a.labels.push_back(static_cast<int>(parse_double(cells[1], path.string())));
    std::vector<double> r;
    for (Eigen::Index c = 0; c < k; ++c) r.push_back(parse_double(cells[static_cast<std::size_t>(c + 2)], path.string()));
    rows.push_back(std::move(r));
  }
  a.membership.resize(static_cast<Eigen::Index>(rows.size()), k);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index c = 0; c < k; ++c) a.membership(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
  return a;
}

/// {ari, n_unassigned, per_cluster_sizes}; unassigned nodes form their own
/// group when computing the ARI.
inline nlohmann::json recovery_report(const ClusterAssignment& a, std::span<const int> reference) {
  std::vector<int> sizes(static_cast<std::size_t>(a.membership.cols()), 0);
  for (int l : a.labels)
    if (l != kUnassigned) ++sizes[static_cast<std::size_t>(l - 1)];
  nlohmann::json j{{"n_unassigned", a.n_unassigned()}, {"per_cluster_sizes", sizes}};
  if (!reference.empty()) j["ari"] = adjusted_rand_index(a.labels, reference);
  return j;
}

}  // namespace scgt
