#pragma once

// Planted-subnetwork FC datasets. Node time series are driven by one latent
// factor per community; community factors share a global factor so that the
// expected correlation is rho_in inside a community and rho_out across
// communities. FC matrices are always Pearson correlations of sampled series.

#include "scgt/core.hpp"
#include "scgt/fc_graph.hpp"
#include "scgt/io.hpp"
#include "scgt/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace scgt {

struct SynthSpec {
  int n_nodes = 60;
  int k_true = 4;
  /// Empty means as equal as possible, larger communities first.
  std::vector<int> community_sizes;
  double rho_in = 0.6;
  double rho_out = 0.1;
  /// Per-subject, per-community standard deviation of the within-community
  /// level around rho_in. 0 gives identical expected FC for every subject.
  double rho_in_sd = 0.0;
  int t_len = 2000;
  int n_subjects = 300;
  Task task = Task::Regression;
  double signal_strength = 1.0;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::vector<int> sizes() const {
    if (!community_sizes.empty()) return community_sizes;
    std::vector<int> s(static_cast<std::size_t>(std::max(k_true, 1)), n_nodes / std::max(k_true, 1));
    for (int i = 0; i < n_nodes % std::max(k_true, 1); ++i) s[static_cast<std::size_t>(i)] += 1;
    return s;
  }

  /// rho_in == rho_out is accepted as the no-structure control.
  void validate() const {
    require(n_nodes >= 2, "n_nodes must be at least 2");
    require(k_true >= 1, "k_true must be positive");
    require(rho_in >= 0.0 && rho_in < 1.0, "rho_in must lie in [0, 1)");
    require(rho_out >= 0.0 && rho_out < 1.0, "rho_out must lie in [0, 1)");
    require(rho_in >= rho_out, "rho_in must not be below rho_out");
    require(t_len > n_nodes, "t_len must exceed n_nodes");
    require(n_subjects >= 1, "n_subjects must be positive");
    require(noise_sd >= 0.0, "noise_sd must be non-negative");
    require(rho_in_sd >= 0.0, "rho_in_sd must be non-negative");
    const auto s = sizes();
    require(static_cast<int>(s.size()) == k_true, "community_sizes must have k_true entries");
    for (int v : s) require(v >= 1, "community sizes must be positive");
    require(std::accumulate(s.begin(), s.end(), 0) == n_nodes, "community sizes must sum to n_nodes");
  }
};

/// Contiguous community blocks, 0-based labels.
inline std::vector<int> planted_labels(const SynthSpec& spec) {
  std::vector<int> labels;
  const auto s = spec.sizes();
  for (std::size_t c = 0; c < s.size(); ++c) labels.insert(labels.end(), static_cast<std::size_t>(s[c]), static_cast<int>(c));
  return labels;
}

inline std::uint64_t subject_seed(const SynthSpec& spec, int subject) {
  return splitmix64(spec.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(subject) + 1);
}

struct Subject {
  FCMatrix fc;
  std::vector<int> labels;
};

inline constexpr int kMaxSubjectAttempts = 5;
inline constexpr double kMaxRho = 0.95;

/// One subject's FC matrix from freshly sampled latent series.
inline Subject generate_subject(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto labels = planted_labels(spec);
  const int n = spec.n_nodes, t = spec.t_len, k = spec.k_true;
  for (int attempt = 0; attempt < kMaxSubjectAttempts; ++attempt) {
    std::mt19937_64 rng(splitmix64(seed + static_cast<std::uint64_t>(attempt)));
    std::normal_distribution<double> normal(0.0, 1.0);
    // Within-community level per community, kept in [rho_out, kMaxRho].
    Vec rho(k);
    for (int c = 0; c < k; ++c) {
      const double jitter = spec.rho_in_sd > 0.0 ? spec.rho_in_sd * normal(rng) : 0.0;
      rho(c) = std::clamp(spec.rho_in + jitter, spec.rho_out, std::max(spec.rho_in, kMaxRho));
    }
    Vec global(t);
    for (int i = 0; i < t; ++i) global(i) = normal(rng);
    // Factor c loads sqrt(rho_out / rho_c) on the global factor, so nodes of
    // different communities correlate at rho_out in expectation.
    Mat factors(t, k);
    for (int c = 0; c < k; ++c) {
      const double share = rho(c) > 0.0 ? spec.rho_out / rho(c) : 1.0;
      for (int i = 0; i < t; ++i)
        factors(i, c) = std::sqrt(share) * global(i) + std::sqrt(1.0 - share) * normal(rng);
    }
    Mat series(t, n);
    for (int j = 0; j < n; ++j) {
      const double a = std::sqrt(rho(labels[j])), b = std::sqrt(1.0 - rho(labels[j]));
      for (int i = 0; i < t; ++i) series(i, j) = a * factors(i, labels[j]) + b * normal(rng);
    }
    try {
      return {FCMatrix{pearson_correlation(series)}, labels};
    } catch (const NumericError&) {
      continue;  // constant series: resample with the next sub-seed
    }
  }
  throw NumericError("degenerate series after " + std::to_string(kMaxSubjectAttempts) + " attempts");
}

/// Mean of the off-diagonal FC entries inside each community.
inline Vec within_community_means(const FCMatrix& fc, const std::vector<int>& labels, int k) {
  Vec sum = Vec::Zero(k), count = Vec::Zero(k);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (i != j && labels[i] == labels[j]) {
        sum(labels[i]) += fc.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        count(labels[i]) += 1.0;
      }
  for (int c = 0; c < k; ++c) sum(c) = count(c) > 0 ? sum(c) / count(c) : 0.0;
  return sum;
}

struct SynthDataset {
  SynthSpec spec;
  std::vector<std::string> ids;
  std::vector<FCMatrix> fcs;
  std::vector<double> scores;   ///< sum_c beta_c * within-community mean FC
  std::vector<double> targets;  ///< regression value or class 0/1
  Vec beta;
  std::vector<int> labels;      ///< planted community per node
};

inline std::string subject_id(int s) {
  std::ostringstream os;
  os << "sub" << std::setw(4) << std::setfill('0') << s;
  return os.str();
}

inline SynthDataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  SynthDataset ds;
  ds.spec = spec;
  ds.labels = planted_labels(spec);
  std::mt19937_64 rng(splitmix64(spec.seed ^ 0x5eed5eed5eed5eedULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  ds.beta = Vec(spec.k_true);
  for (int c = 0; c < spec.k_true; ++c) ds.beta(c) = normal(rng);

  std::vector<double> raw(static_cast<std::size_t>(spec.n_subjects));
  for (int s = 0; s < spec.n_subjects; ++s) {
    Subject sub = generate_subject(spec, subject_seed(spec, s));
    const double score = ds.beta.dot(within_community_means(sub.fc, ds.labels, spec.k_true));
    ds.ids.push_back(subject_id(s));
    ds.fcs.push_back(std::move(sub.fc));
    ds.scores.push_back(score);
    raw[static_cast<std::size_t>(s)] = spec.signal_strength * score + spec.noise_sd * normal(rng);
  }
  if (spec.task == Task::Regression) {
    ds.targets = raw;
  } else {
    // Median split by rank: the lower ceil(n/2) are class 0.
    std::vector<std::size_t> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });
    ds.targets.assign(raw.size(), 1.0);
    const std::size_t lower = (raw.size() + 1) / 2;
    for (std::size_t r = 0; r < lower; ++r) ds.targets[order[r]] = 0.0;
  }
  return ds;
}

inline nlohmann::json spec_to_json(const SynthSpec& s) {
  return {{"n_nodes", s.n_nodes},       {"k_true", s.k_true},
          {"community_sizes", s.sizes()}, {"rho_in", s.rho_in},
          {"rho_out", s.rho_out},       {"rho_in_sd", s.rho_in_sd},
          {"t_len", s.t_len},
          {"n_subjects", s.n_subjects}, {"task", std::string(to_string(s.task))},
          {"signal_strength", s.signal_strength}, {"noise_sd", s.noise_sd},
          {"seed", s.seed}};
}

/// Writes `manifest.csv`, `fc/<id>.csv` and `spec.json` (spec, beta, planted labels).
inline void write_dataset(const SynthDataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "fc");
  std::vector<ManifestRow> rows;
  for (std::size_t s = 0; s < ds.ids.size(); ++s) {
    const std::string rel = "fc/" + ds.ids[s] + ".csv";
    write_matrix_csv(dir / rel, ds.fcs[s].values);
    rows.push_back({ds.ids[s], rel, ds.targets[s], "synthetic"});
  }
  write_manifest(dir / "manifest.csv", rows);
  nlohmann::json j;
  j["spec"] = spec_to_json(ds.spec);
  j["beta"] = std::vector<double>(ds.beta.data(), ds.beta.data() + ds.beta.size());
  j["planted_labels"] = ds.labels;
  std::ofstream out(dir / "spec.json");
  if (!out) throw IoError("cannot write " + (dir / "spec.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace scgt
