#ifndef HFNN_CLUSTERING_HPP
#define HFNN_CLUSTERING_HPP

#include <limits>
#include <string>
#include <vector>

#include "hfnn/common.hpp"
#include "hfnn/rng.hpp"

namespace hfnn {

enum class MUpdateMode { Exact, Mean };
enum class PooledDenominator { Cluster, All };

struct ConvergenceCriteria {
  double eps_primal = 1e-4;
  double eps_dual = 1e-4;
  int max_iters = 50;

  void validate() const {
    require(eps_primal > 0.0 && eps_dual > 0.0,
            "ConvergenceCriteria: tolerances must be positive");
    require(max_iters >= 1, "ConvergenceCriteria: max_iters must be >= 1");
  }
};

// Nearest center under Euclidean distance, ties toward the lowest index.
inline int nearest_center(const Vector& x, const Matrix& centers) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    const double d = (x - centers.row(k).transpose()).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

inline std::vector<int> admm_assign(const Matrix& X, const Matrix& centers) {
  require(centers.allFinite(), "admm_assign: centers must be finite");
  std::vector<int> assignment(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    assignment[static_cast<std::size_t>(i)] =
        nearest_center(X.row(i).transpose(), centers);
  }
  return assignment;
}

// Per-feature standard deviation of a cluster against a supplied center
// (the consensus center in distributed mode).
inline Vector local_std(const Matrix& X_cluster, const Vector& center) {
  require(X_cluster.rows() >= 1, "local_std: cluster is empty");
  require_shape(X_cluster.cols() == center.size(),
                "local_std: center dimension mismatch");
  Vector out(center.size());
  for (Eigen::Index j = 0; j < center.size(); ++j) {
    out(j) = std::sqrt(
        (X_cluster.col(j).array() - center(j)).square().sum() /
        static_cast<double>(X_cluster.rows()));
  }
  return out;
}

// Exact minimizer of the per-cluster augmented Lagrangian over the local
// center: (sum_of_cluster_rows - beta + rho * r) / (count + rho). Degrades
// to (rho * r - beta) / rho when the cluster is empty.
inline Vector admm_local_m_update(const Vector& cluster_sum, int cluster_count,
                                  const Vector& beta, const Vector& r,
                                  double rho) {
  require(rho > 0.0, "admm_local_m_update: rho must be positive");
  require(cluster_count >= 0, "admm_local_m_update: negative count");
  return (cluster_sum - beta + rho * r) /
         (static_cast<double>(cluster_count) + rho);
}

// Closed-form consensus update r = (1 / (L * rho)) * sum_l (beta_l + rho m_l),
// accumulated in fixed agent order.
inline Vector admm_global_update(const std::vector<Vector>& m_all,
                                 const std::vector<Vector>& beta_all,
                                 double rho) {
  require(!m_all.empty(), "admm_global_update: needs at least one agent");
  require_shape(m_all.size() == beta_all.size(),
                "admm_global_update: m/beta agent count mismatch");
  Vector acc = Vector::Zero(m_all[0].size());
  for (std::size_t l = 0; l < m_all.size(); ++l) {
    acc += beta_all[l] + rho * m_all[l];
  }
  return acc / (static_cast<double>(m_all.size()) * rho);
}

// Scaled dual ascent per (agent, cluster) pair.
inline Vector admm_dual_update(const Vector& beta, const Vector& m,
                               const Vector& r, double rho) {
  require(rho > 0.0, "admm_dual_update: rho must be positive");
  return beta + rho * (m - r);
}

// Snapshot of one branch's consensus state across agents.
struct AdmmState {
  std::vector<Matrix> local_centers;  // L entries, K x F
  Matrix global_centers;              // K x F
  std::vector<Matrix> duals;          // L entries, K x F
  double rho = 1.0;
  int t = 0;
};

inline bool check_convergence(const AdmmState& state,
                              const std::vector<Matrix>& prev_duals,
                              const ConvergenceCriteria& crit) {
  require(state.t >= 1, "check_convergence: requires at least one round");
  require_shape(prev_duals.size() == state.duals.size(),
                "check_convergence: dual history size mismatch");
  double max_primal = 0.0;
  double max_dual = 0.0;
  for (std::size_t l = 0; l < state.local_centers.size(); ++l) {
    for (Eigen::Index k = 0; k < state.global_centers.rows(); ++k) {
      const double primal = (state.local_centers[l].row(k) -
                             state.global_centers.row(k))
                                .squaredNorm();
      const double dual =
          (state.duals[l].row(k) - prev_duals[l].row(k)).squaredNorm();
      if (primal > max_primal) max_primal = primal;
      if (dual > max_dual) max_dual = dual;
    }
  }
  return max_primal <= crit.eps_primal && max_dual <= crit.eps_dual;
}

struct PooledWidths {
  Matrix widths;                  // K x F
  std::vector<int> empty_clusters;  // clusters with zero total count
};

// Counts-weighted pooling of per-agent widths:
//   sigma_k = sqrt(sum_l count_{l,k} sigma_{l,k}^2 / denom).
// denom is the cluster's total count, or the full sample count when
// PooledDenominator::All is selected. Widths are floored elementwise.
inline PooledWidths pooled_std(const std::vector<Matrix>& local_stds,
                               const std::vector<IntVector>& local_counts,
                               PooledDenominator denom = PooledDenominator::Cluster,
                               const Vector& width_floor = Vector()) {
  require(!local_stds.empty(), "pooled_std: needs at least one agent");
  require_shape(local_stds.size() == local_counts.size(),
                "pooled_std: stds/counts agent count mismatch");
  const Eigen::Index k_rules = local_stds[0].rows();
  const Eigen::Index f = local_stds[0].cols();

  double total_samples = 0.0;
  for (const auto& counts : local_counts) {
    require_shape(counts.size() == k_rules, "pooled_std: count length mismatch");
    total_samples += static_cast<double>(counts.sum());
  }

  PooledWidths out;
  out.widths = Matrix::Zero(k_rules, f);
  for (Eigen::Index k = 0; k < k_rules; ++k) {
    Vector weighted = Vector::Zero(f);
    double cluster_count = 0.0;
    for (std::size_t l = 0; l < local_stds.size(); ++l) {
      const double c = static_cast<double>(local_counts[l](k));
      weighted += c * local_stds[l].row(k).transpose().array().square().matrix();
      cluster_count += c;
    }
    if (cluster_count == 0.0) {
      out.empty_clusters.push_back(static_cast<int>(k));
      out.widths.row(k).setZero();
    } else {
      const double d =
          denom == PooledDenominator::Cluster ? cluster_count : total_samples;
      out.widths.row(k) = (weighted / d).array().sqrt().transpose();
    }
  }
  if (width_floor.size() > 0) {
    require_shape(width_floor.size() == f, "pooled_std: floor length mismatch");
    for (Eigen::Index k = 0; k < k_rules; ++k) {
      for (Eigen::Index j = 0; j < f; ++j) {
        if (out.widths(k, j) < width_floor(j)) out.widths(k, j) = width_floor(j);
      }
    }
  }
  return out;
}

// K initial centers drawn as distinct samples (seeded, without replacement).
inline Matrix init_centers_from_data(const Matrix& X, int k_rules, Rng& rng) {
  require(k_rules >= 1, "init_centers_from_data: K must be >= 1");
  const auto order = rng.sample_indices(static_cast<std::size_t>(X.rows()),
                                        static_cast<std::size_t>(X.rows()));
  Matrix centers(k_rules, X.cols());
  int found = 0;
  for (std::size_t idx : order) {
    const auto row = X.row(static_cast<Eigen::Index>(idx));
    bool duplicate = false;
    for (int c = 0; c < found; ++c) {
      if ((centers.row(c).array() == row.array()).all()) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    centers.row(found++) = row;
    if (found == k_rules) break;
  }
  if (found < k_rules) {
    throw InvalidParameterError(
        "init_centers_from_data: fewer distinct samples than clusters");
  }
  return centers;
}

struct KmeansResult {
  Matrix centers;               // K x F
  std::vector<int> assignment;  // per sample, in [0, K)
  int iters = 0;
  bool converged = false;
};

namespace detail {

// Re-seed an empty cluster to the sample farthest from its current center.
inline void reseed_empty_cluster(const Matrix& X, Matrix& centers, int k) {
  Eigen::Index farthest = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double d = (X.row(i) - centers.row(k)).squaredNorm();
    if (d > best) {
      best = d;
      farthest = i;
    }
  }
  centers.row(k) = X.row(farthest);
}

}  // namespace detail

// Lloyd iteration from an explicit initialization, assignments-stable stop.
inline KmeansResult kmeans_centralized(const Matrix& X, const Matrix& init,
                                       int max_iters) {
  const int k_rules = static_cast<int>(init.rows());
  require(X.rows() >= k_rules, "kmeans_centralized: fewer samples than clusters");
  KmeansResult result;
  result.centers = init;
  std::vector<int> prev;
  for (int it = 0; it < max_iters; ++it) {
    result.assignment = admm_assign(X, result.centers);
    result.iters = it + 1;
    if (it > 0 && result.assignment == prev) {
      result.converged = true;
      break;
    }
    prev = result.assignment;
    Matrix sums = Matrix::Zero(k_rules, X.cols());
    IntVector counts = IntVector::Zero(k_rules);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const int k = result.assignment[static_cast<std::size_t>(i)];
      sums.row(k) += X.row(i);
      counts(k) += 1;
    }
    for (int k = 0; k < k_rules; ++k) {
      if (counts(k) == 0) {
        detail::reseed_empty_cluster(X, result.centers, k);
      } else {
        result.centers.row(k) = sums.row(k) / static_cast<double>(counts(k));
      }
    }
  }
  return result;
}

inline KmeansResult kmeans_centralized(const Matrix& X, int k_rules,
                                       std::uint64_t seed, int max_iters) {
  Rng rng(seed);
  return kmeans_centralized(X, init_centers_from_data(X, k_rules, rng),
                            max_iters);
}

// Lloyd's clustering objective, 0.5 * sum of squared distances to centers.
inline double kmeans_objective(const Matrix& X, const Matrix& centers,
                               const std::vector<int>& assignment) {
  double obj = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    obj += 0.5 * (X.row(i) -
                  centers.row(assignment[static_cast<std::size_t>(i)]))
                     .squaredNorm();
  }
  return obj;
}

// ---- Shared per-round steps. Both the single-loop driver below and the
// message-passing simulation call exactly these, in the same order, so the
// two execution paths agree bitwise.

struct LocalUpdate {
  Matrix m;          // K x F local centers after the update
  Matrix contrib;    // K x F, beta + rho * m (the uploaded payload)
  IntVector counts;  // K cluster sizes
  bool assignments_changed = false;
};

inline LocalUpdate agent_local_update(const Matrix& X, const Matrix& m_prev,
                                      const Matrix& beta, const Matrix& r,
                                      double rho, MUpdateMode mode,
                                      std::vector<int>& assignment) {
  const int k_rules = static_cast<int>(m_prev.rows());
  std::vector<int> next = admm_assign(X, m_prev);
  LocalUpdate out;
  out.assignments_changed = assignment.empty() || next != assignment;
  assignment = std::move(next);

  Matrix sums = Matrix::Zero(k_rules, X.cols());
  out.counts = IntVector::Zero(k_rules);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int k = assignment[static_cast<std::size_t>(i)];
    sums.row(k) += X.row(i);
    out.counts(k) += 1;
  }

  out.m.resize(k_rules, X.cols());
  for (int k = 0; k < k_rules; ++k) {
    if (mode == MUpdateMode::Exact) {
      out.m.row(k) = admm_local_m_update(sums.row(k).transpose(),
                                         out.counts(k), beta.row(k).transpose(),
                                         r.row(k).transpose(), rho)
                         .transpose();
    } else {
      // Plain-mean update; an empty cluster keeps its previous center.
      if (out.counts(k) > 0) {
        out.m.row(k) = sums.row(k) / static_cast<double>(out.counts(k));
      } else {
        out.m.row(k) = m_prev.row(k);
      }
    }
  }
  out.contrib = beta + rho * out.m;
  return out;
}

struct DualResidual {
  Vector primal_sq;  // per cluster, ||m_k - r_k||^2
  Vector dual_sq;    // per cluster, ||beta_new - beta_old||^2
};

inline DualResidual agent_dual_update(Matrix& beta, const Matrix& m,
                                      const Matrix& r, double rho) {
  const Eigen::Index k_rules = m.rows();
  DualResidual res;
  res.primal_sq.resize(k_rules);
  res.dual_sq.resize(k_rules);
  for (Eigen::Index k = 0; k < k_rules; ++k) {
    const Vector next = admm_dual_update(beta.row(k).transpose(),
                                         m.row(k).transpose(),
                                         r.row(k).transpose(), rho);
    res.primal_sq(k) = (m.row(k) - r.row(k)).squaredNorm();
    res.dual_sq(k) = (next - beta.row(k).transpose()).squaredNorm();
    beta.row(k) = next.transpose();
  }
  return res;
}

struct WidthStats {
  Matrix sigma;      // K x F local widths against the final global centers
  IntVector counts;  // K cluster sizes under that assignment
};

inline WidthStats agent_width_stats(const Matrix& X, const Matrix& r) {
  const int k_rules = static_cast<int>(r.rows());
  WidthStats out;
  out.sigma = Matrix::Zero(k_rules, X.cols());
  out.counts = IntVector::Zero(k_rules);
  const std::vector<int> assignment = admm_assign(X, r);
  Matrix ssd = Matrix::Zero(k_rules, X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int k = assignment[static_cast<std::size_t>(i)];
    ssd.row(k) += (X.row(i) - r.row(k)).array().square().matrix();
    out.counts(k) += 1;
  }
  for (int k = 0; k < k_rules; ++k) {
    if (out.counts(k) > 0) {
      out.sigma.row(k) =
          (ssd.row(k) / static_cast<double>(out.counts(k))).array().sqrt();
    }
  }
  return out;
}

struct ConsensusKmeansResult {
  Matrix centers;                    // final global centers, K x F
  Matrix widths;                     // pooled widths (unfloored), K x F
  std::vector<int> empty_clusters;   // clusters empty on every agent
  int rounds = 0;
  bool converged = false;
  AdmmState state;                   // final per-agent state
  std::vector<Matrix> local_sigmas;  // per agent, K x F
  std::vector<IntVector> local_counts;
};

// Direct single-loop execution of the distributed clustering algebra:
// rounds of (assign, local update, consensus update, dual ascent) until the
// residual criteria hold with stable assignments, then width pooling.
inline ConsensusKmeansResult consensus_kmeans(
    const std::vector<Matrix>& agent_data, const Matrix& init_r, double rho,
    const ConvergenceCriteria& crit, MUpdateMode mode = MUpdateMode::Exact,
    PooledDenominator denom = PooledDenominator::Cluster) {
  require(!agent_data.empty(), "consensus_kmeans: needs at least one agent");
  require(rho > 0.0, "consensus_kmeans: rho must be positive");
  crit.validate();
  const std::size_t n_agents = agent_data.size();
  const int k_rules = static_cast<int>(init_r.rows());
  for (const auto& X : agent_data) {
    require(X.rows() >= 1, "consensus_kmeans: agent with no samples");
    require_shape(X.cols() == init_r.cols(),
                  "consensus_kmeans: feature dimension mismatch");
  }

  ConsensusKmeansResult result;
  result.state.rho = rho;
  result.state.global_centers = init_r;
  result.state.local_centers.assign(n_agents, init_r);
  result.state.duals.assign(n_agents, Matrix::Zero(k_rules, init_r.cols()));
  std::vector<std::vector<int>> assignments(n_agents);

  for (int t = 1; t <= crit.max_iters; ++t) {
    std::vector<Vector> m_rows(n_agents), beta_rows(n_agents);
    std::vector<LocalUpdate> updates(n_agents);
    bool all_stable = true;
    for (std::size_t l = 0; l < n_agents; ++l) {
      updates[l] = agent_local_update(agent_data[l],
                                      result.state.local_centers[l],
                                      result.state.duals[l],
                                      result.state.global_centers, rho, mode,
                                      assignments[l]);
      result.state.local_centers[l] = updates[l].m;
      if (updates[l].assignments_changed) all_stable = false;
    }
    for (Eigen::Index k = 0; k < k_rules; ++k) {
      for (std::size_t l = 0; l < n_agents; ++l) {
        m_rows[l] = result.state.local_centers[l].row(k).transpose();
        beta_rows[l] = result.state.duals[l].row(k).transpose();
      }
      result.state.global_centers.row(k) =
          admm_global_update(m_rows, beta_rows, rho).transpose();
    }
    double max_primal = 0.0, max_dual = 0.0;
    for (std::size_t l = 0; l < n_agents; ++l) {
      const DualResidual res =
          agent_dual_update(result.state.duals[l],
                            result.state.local_centers[l],
                            result.state.global_centers, rho);
      max_primal = std::max(max_primal, res.primal_sq.maxCoeff());
      max_dual = std::max(max_dual, res.dual_sq.maxCoeff());
    }
    result.state.t = t;
    result.rounds = t;
    if (all_stable && max_primal <= crit.eps_primal &&
        max_dual <= crit.eps_dual) {
      result.converged = true;
      break;
    }
  }

  result.centers = result.state.global_centers;
  result.local_sigmas.resize(n_agents);
  result.local_counts.resize(n_agents);
  for (std::size_t l = 0; l < n_agents; ++l) {
    const WidthStats stats = agent_width_stats(agent_data[l], result.centers);
    result.local_sigmas[l] = stats.sigma;
    result.local_counts[l] = stats.counts;
  }
  const PooledWidths pooled =
      pooled_std(result.local_sigmas, result.local_counts, denom);
  result.widths = pooled.widths;
  result.empty_clusters = pooled.empty_clusters;
  return result;
}

}  // namespace hfnn

#endif
