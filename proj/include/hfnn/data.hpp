#ifndef HFNN_DATA_HPP
#define HFNN_DATA_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hfnn/common.hpp"
#include "hfnn/rng.hpp"

namespace hfnn {

struct CsvData {
  Matrix X;
  Vector y;
  std::vector<std::string> feature_names;
  std::string target_name;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

// Reads a comma-separated numeric table. The target column is selected by
// name (requires a header) or by 0-based index prefixed with '#',
// e.g. "#3". Row order is preserved; rows are numbered from 1 in errors.
inline CsvData ingest_csv(const std::string& path,
                          const std::string& target_column, bool has_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv: " + path);

  std::string line;
  std::vector<std::string> names;
  std::size_t n_cols = 0;

  if (has_header) {
    if (!std::getline(in, line)) throw ParseError(path + ": missing header");
    for (auto& cell : detail::split_csv_line(line)) {
      names.push_back(detail::trim(cell));
    }
    n_cols = names.size();
  }

  std::vector<std::vector<double>> rows;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row_no;
    const auto cells = detail::split_csv_line(line);
    if (n_cols == 0) n_cols = cells.size();
    if (cells.size() != n_cols) {
      throw ParseError(path + ": row " + std::to_string(row_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(n_cols));
    }
    std::vector<double> row(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) {
      const std::string cell = detail::trim(cells[c]);
      try {
        row[c] = parse_double(cell);
      } catch (const ParseError&) {
        throw ParseError(path + ": row " + std::to_string(row_no) +
                         ", column " + std::to_string(c + 1) +
                         ": cannot parse '" + cell + "'");
      }
      if (!std::isfinite(row[c])) {
        throw ParseError(path + ": row " + std::to_string(row_no) +
                         ", column " + std::to_string(c + 1) +
                         ": value is not finite");
      }
    }
    rows.push_back(std::move(row));
  }

  if (names.empty()) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      names.push_back("c" + std::to_string(c));
    }
  }

  std::size_t target_idx = n_cols;
  if (!target_column.empty() && target_column[0] == '#') {
    long idx = -1;
    try {
      idx = std::stol(target_column.substr(1));
    } catch (const std::exception&) {
      throw ConfigError("invalid target column index: " + target_column);
    }
    if (idx < 0 || static_cast<std::size_t>(idx) >= n_cols) {
      throw ConfigError("target column index out of range: " + target_column);
    }
    target_idx = static_cast<std::size_t>(idx);
  } else {
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (names[c] == target_column) {
        target_idx = c;
        break;
      }
    }
    if (target_idx == n_cols) {
      throw ConfigError("target column '" + target_column +
                        "' not found in " + path);
    }
  }

  CsvData data;
  data.target_name = names[target_idx];
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (c != target_idx) data.feature_names.push_back(names[c]);
  }
  data.X.resize(static_cast<Eigen::Index>(rows.size()),
                static_cast<Eigen::Index>(n_cols - 1));
  data.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::Index out_c = 0;
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (c == target_idx) {
        data.y(static_cast<Eigen::Index>(i)) = rows[i][c];
      } else {
        data.X(static_cast<Eigen::Index>(i), out_c++) = rows[i][c];
      }
    }
  }
  return data;
}

inline void write_csv(const std::string& path, const Matrix& X,
                      const Vector& y,
                      const std::vector<std::string>& feature_names,
                      const std::string& target_name) {
  require_shape(X.rows() == y.size(), "write_csv: X/y row mismatch");
  require_shape(feature_names.size() == static_cast<std::size_t>(X.cols()),
                "write_csv: name count mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open csv for writing: " + path);
  for (std::size_t c = 0; c < feature_names.size(); ++c) {
    out << feature_names[c] << ",";
  }
  out << target_name << "\n";
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      out << format_double(X(i, c)) << ",";
    }
    out << format_double(y(i)) << "\n";
  }
}

// Disjoint, exhaustive, contiguous groups; any remainder goes to the
// leading groups.
inline std::vector<std::vector<int>> equal_chunks(int n_features,
                                                  int n_groups) {
  require(n_groups >= 1, "equal_chunks: need at least one group");
  require(n_features >= n_groups,
          "equal_chunks: more groups than features");
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(n_groups));
  const int base = n_features / n_groups;
  const int remainder = n_features % n_groups;
  int next = 0;
  for (int g = 0; g < n_groups; ++g) {
    const int size = base + (g < remainder ? 1 : 0);
    for (int j = 0; j < size; ++j) {
      groups[static_cast<std::size_t>(g)].push_back(next++);
    }
  }
  return groups;
}

inline void validate_feature_groups(
    const std::vector<std::vector<int>>& groups, int n_features) {
  require(!groups.empty(), "feature groups: need at least one group");
  std::set<int> seen;
  for (const auto& group : groups) {
    require(!group.empty(), "feature groups: empty group");
    for (int idx : group) {
      if (idx < 0 || idx >= n_features) {
        throw ConfigError("feature groups: index " + std::to_string(idx) +
                          " out of range");
      }
      if (!seen.insert(idx).second) {
        throw ConfigError("feature groups: index " + std::to_string(idx) +
                          " appears in more than one group");
      }
    }
  }
  if (static_cast<int>(seen.size()) != n_features) {
    throw ConfigError("feature groups: groups must cover every feature");
  }
}

// Seeded uniform shuffle, then contiguous blocks of near-equal size.
inline std::vector<int> distribute_samples(int n_samples, int n_agents,
                                           std::uint64_t seed) {
  require(n_agents >= 1, "distribute_samples: need at least one agent");
  if (n_agents > n_samples) {
    throw InvalidParameterError(
        "distribute_samples: more agents than samples");
  }
  std::vector<int> order(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<int> assignment(static_cast<std::size_t>(n_samples));
  const int base = n_samples / n_agents;
  const int remainder = n_samples % n_agents;
  std::size_t pos = 0;
  for (int a = 0; a < n_agents; ++a) {
    const int size = base + (a < remainder ? 1 : 0);
    for (int j = 0; j < size; ++j) {
      assignment[static_cast<std::size_t>(order[pos++])] = a;
    }
  }
  return assignment;
}

struct PartitionPlan {
  std::vector<std::vector<int>> feature_groups;
  std::vector<int> agent_assignment;
  std::uint64_t seed = 0;
};

struct NormalizationStats {
  Vector mean;
  Vector scale;  // population std, floored at 1e-12
};

inline NormalizationStats fit_normalization(const Matrix& X) {
  require(X.rows() >= 1, "fit_normalization: empty training matrix");
  NormalizationStats stats;
  stats.mean.resize(X.cols());
  stats.scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    const double var =
        (X.col(j).array() - mean).square().sum() / static_cast<double>(X.rows());
    stats.mean(j) = mean;
    stats.scale(j) = std::max(std::sqrt(var), 1e-12);
  }
  return stats;
}

inline Matrix apply_normalization(const Matrix& X,
                                  const NormalizationStats& stats) {
  require_shape(X.cols() == stats.mean.size(),
                "apply_normalization: feature count mismatch");
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    out.col(j) = (X.col(j).array() - stats.mean(j)) / stats.scale(j);
  }
  return out;
}

inline Vector column_ranges(const Matrix& X) {
  Vector ranges = Vector::Zero(X.cols());
  if (X.rows() == 0) return ranges;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    ranges(j) = X.col(j).maxCoeff() - X.col(j).minCoeff();
  }
  return ranges;
}

// Perturbs a seeded fraction of entries per feature column with draws from
// Normal(0.1 R_j, (0.1 R_j)^2), R_j the column range of the input.
inline Matrix inject_noise(const Matrix& X, double level, std::uint64_t seed) {
  require(level >= 0.0 && level <= 1.0, "inject_noise: level must be in [0,1]");
  Matrix out = X;
  if (level == 0.0 || X.rows() == 0) return out;
  const Vector ranges = column_ranges(X);
  Rng rng(seed);
  const auto n_rows = static_cast<std::size_t>(X.rows());
  const auto k = static_cast<std::size_t>(
      std::llround(level * static_cast<double>(n_rows)));
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double scale = 0.1 * ranges(j);
    const auto picked = rng.sample_indices(n_rows, k);
    for (std::size_t idx : picked) {
      out(static_cast<Eigen::Index>(idx), j) += scale + scale * rng.normal();
    }
  }
  return out;
}

// A seeded fraction of rows receives, per feature, an additive draw from
// Normal(R_j, (0.1 R_j)^2).
inline Matrix inject_outliers(const Matrix& X, double fraction,
                              std::uint64_t seed) {
  require(fraction >= 0.0 && fraction <= 1.0,
          "inject_outliers: fraction must be in [0,1]");
  Matrix out = X;
  if (fraction == 0.0 || X.rows() == 0) return out;
  const Vector ranges = column_ranges(X);
  Rng rng(seed);
  const auto n_rows = static_cast<std::size_t>(X.rows());
  const auto k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n_rows)));
  const auto picked = rng.sample_indices(n_rows, k);
  for (std::size_t idx : picked) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      out(static_cast<Eigen::Index>(idx), j) +=
          ranges(j) + 0.1 * ranges(j) * rng.normal();
    }
  }
  return out;
}

// Two-branch artificial regression dataset: three features per branch drawn
// from fixed Gaussians, target 0.3 * sum cos^2(x1) + 0.7 * sum cos(x2),
// with optional noise/outlier injection into the features only.
struct SyntheticSpec {
  int n_samples = 50000;
  double branch1_mean[3] = {1.0, 5.0, 9.0};
  double branch1_std[3] = {0.1, 0.2, 0.3};
  double branch2_mean[3] = {3.0, 7.0, 2.0};
  double branch2_std[3] = {0.2, 0.4, 0.1};
  double noise_level = 0.0;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_samples >= 1, "SyntheticSpec: n_samples must be >= 1");
    require(noise_level >= 0.0 && noise_level <= 1.0,
            "SyntheticSpec: noise_level must be in [0,1]");
    require(outlier_fraction >= 0.0 && outlier_fraction <= 1.0,
            "SyntheticSpec: outlier_fraction must be in [0,1]");
  }
};

inline double synthetic_target(const Vector& x) {
  require_shape(x.size() == 6, "synthetic_target: expects 6 features");
  double y = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double c = std::cos(x(j));
    y += 0.3 * c * c;
  }
  for (int j = 3; j < 6; ++j) y += 0.7 * std::cos(x(j));
  return y;
}

struct SyntheticData {
  Matrix X;  // N x 6, branch 1 in columns 0..2, branch 2 in columns 3..5
  Vector y;
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData data;
  data.X.resize(spec.n_samples, 6);
  data.y.resize(spec.n_samples);
  Rng rng(spec.seed);
  for (int i = 0; i < spec.n_samples; ++i) {
    for (int j = 0; j < 3; ++j) {
      data.X(i, j) = spec.branch1_mean[j] + spec.branch1_std[j] * rng.normal();
    }
    for (int j = 0; j < 3; ++j) {
      data.X(i, 3 + j) =
          spec.branch2_mean[j] + spec.branch2_std[j] * rng.normal();
    }
    data.y(i) = synthetic_target(data.X.row(i).transpose());
  }
  if (spec.noise_level > 0.0) {
    data.X = inject_noise(data.X, spec.noise_level, derive_seed(spec.seed, 1));
  }
  if (spec.outlier_fraction > 0.0) {
    data.X = inject_outliers(data.X, spec.outlier_fraction,
                             derive_seed(spec.seed, 2));
  }
  return data;
}

}  // namespace hfnn

#endif
