#pragma once

// Plain-text CSV matrices, the subject manifest and graph debug snapshots.
//
// Matrix CSV: one row per line, comma-separated reals, no header.
// Manifest CSV: header `subject_id,fc_path,target,group_label`; fc_path is
// resolved relative to the manifest's directory unless absolute.

#include "scgt/core.hpp"
#include "scgt/fc_graph.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace scgt {

namespace fs = std::filesystem;

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    std::string_view cell = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
      cell.remove_suffix(1);
    out.emplace_back(cell);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  // strtod accepts the 17-digit output of write_matrix_csv exactly.
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw IoError(where + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

inline Mat read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (const std::string& cell : split_csv_line(line)) {
      row.push_back(parse_double(cell, path.string() + ":" + std::to_string(lineno)));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  Mat m(static_cast<Eigen::Index>(rows.size()),
        rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_matrix_csv(const fs::path& path, const Mat& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline FCMatrix read_fc_csv(const fs::path& path) {
  FCMatrix fc{read_matrix_csv(path)};
  try {
    validate_fc(fc);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return fc;
}

struct ManifestRow {
  std::string subject_id;
  std::string fc_path;  ///< as written in the manifest
  double target = 0.0;
  std::string group_label;
};

inline const char* kManifestHeader = "subject_id,fc_path,target,group_label";

inline std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty manifest " + path.string());
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "fc_path" || header[2] != "target") {
    throw IoError(path.string() + ": manifest header must be '" + kManifestHeader + "'");
  }
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 3) throw IoError(path.string() + ":" + std::to_string(lineno) + ": too few columns");
    ManifestRow r;
    r.subject_id = cells[0];
    r.fc_path = cells[1];
    r.target = parse_double(cells[2], path.string() + ":" + std::to_string(lineno));
    if (cells.size() > 3) r.group_label = cells[3];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_manifest(const fs::path& path, const std::vector<ManifestRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : rows) {
    out << r.subject_id << ',' << r.fc_path << ',' << format_double(r.target) << ',' << r.group_label
        << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline fs::path resolve_relative(const fs::path& manifest, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : manifest.parent_path() / q;
}

/// Writes `<id>.adj.csv`, `<id>.feat.csv`, `<id>.pe.csv` under dir.
inline void write_graph_snapshot(const fs::path& dir, const std::string& id, const BrainGraph& g) {
  write_matrix_csv(dir / (id + ".adj.csv"), g.adjacency);
  write_matrix_csv(dir / (id + ".feat.csv"), g.node_features);
  write_matrix_csv(dir / (id + ".pe.csv"), g.pos_enc);
}

}  // namespace scgt
