#ifndef HFNN_AO_HPP
#define HFNN_AO_HPP

#include <cmath>
#include <vector>

#include <Eigen/Cholesky>

#include "hfnn/common.hpp"
#include "hfnn/rng.hpp"

namespace hfnn {

// Solves (A^T A + reg I) x = A^T y through a Cholesky factorization of the
// regularized normal matrix; reg > 0 keeps it positive definite.
inline Vector ridge_solve(const Matrix& A, const Vector& y, double reg) {
  require(reg > 0.0, "ridge_solve: regularizer must be positive");
  require_shape(A.rows() == y.size(), "ridge_solve: row count mismatch");
  if (!A.allFinite() || !y.allFinite()) {
    throw NumericError("ridge_solve: non-finite entries in the system");
  }
  Matrix normal = A.transpose() * A;
  normal.diagonal().array() += reg;
  const Eigen::LLT<Matrix> llt(normal);
  if (llt.info() != Eigen::Success) {
    throw NumericError("ridge_solve: Cholesky factorization failed");
  }
  return llt.solve(A.transpose() * y);
}

// Column-wise concatenation [v_1 H^1, ..., v_B H^B].
inline Matrix build_Hw(const std::vector<Matrix>& H_blocks, const Vector& v) {
  require(!H_blocks.empty(), "build_Hw: no design blocks");
  require_shape(static_cast<Eigen::Index>(H_blocks.size()) == v.size(),
                "build_Hw: coordination weight length mismatch");
  const Eigen::Index rows = H_blocks[0].rows();
  Eigen::Index cols = 0;
  for (const auto& block : H_blocks) {
    require_shape(block.rows() == rows, "build_Hw: block row count mismatch");
    cols += block.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (std::size_t b = 0; b < H_blocks.size(); ++b) {
    out.middleCols(offset, H_blocks[b].cols()) =
        v(static_cast<Eigen::Index>(b)) * H_blocks[b];
    offset += H_blocks[b].cols();
  }
  return out;
}

// Ridge solve of the stacked system, split back into per-branch weights.
inline std::vector<Vector> update_w(const std::vector<Matrix>& H_blocks,
                                    const Vector& v, const Vector& Y,
                                    double lambda) {
  const Vector flat = ridge_solve(build_Hw(H_blocks, v), Y, lambda);
  std::vector<Vector> per_branch(H_blocks.size());
  Eigen::Index offset = 0;
  for (std::size_t b = 0; b < H_blocks.size(); ++b) {
    per_branch[b] = flat.segment(offset, H_blocks[b].cols());
    offset += H_blocks[b].cols();
  }
  return per_branch;
}

// Branch outputs as columns of Z, then ridge solve for v.
inline Matrix branch_outputs(const std::vector<Matrix>& H_blocks,
                             const std::vector<Vector>& w) {
  require_shape(H_blocks.size() == w.size(),
                "branch_outputs: weight count mismatch");
  Matrix Z(H_blocks[0].rows(), static_cast<Eigen::Index>(H_blocks.size()));
  for (std::size_t b = 0; b < H_blocks.size(); ++b) {
    require_shape(H_blocks[b].cols() == w[b].size(),
                  "branch_outputs: weight length mismatch");
    Z.col(static_cast<Eigen::Index>(b)) = H_blocks[b] * w[b];
  }
  return Z;
}

inline Vector update_v(const std::vector<Matrix>& H_blocks,
                       const std::vector<Vector>& w, const Vector& Y,
                       double mu) {
  return ridge_solve(branch_outputs(H_blocks, w), Y, mu);
}

// Pooled training objective:
//   0.5 ||Y - sum_b v_b H^b w^b||^2 + (lambda/2) ||w||^2 + (mu/2) ||v||^2.
inline double objective(const std::vector<Matrix>& H_blocks,
                        const std::vector<Vector>& w, const Vector& v,
                        const Vector& Y, double lambda, double mu) {
  Vector fit = Vector::Zero(Y.size());
  double w_norm_sq = 0.0;
  for (std::size_t b = 0; b < H_blocks.size(); ++b) {
    fit += v(static_cast<Eigen::Index>(b)) * (H_blocks[b] * w[b]);
    w_norm_sq += w[b].squaredNorm();
  }
  return 0.5 * (Y - fit).squaredNorm() + 0.5 * lambda * w_norm_sq +
         0.5 * mu * v.squaredNorm();
}

struct AoConfig {
  double lambda = 1e-3;
  double mu = 1e-3;
  int iterations = 30;
  double rel_tol = 0.0;  // 0 disables the optional early stop

  void validate() const {
    require(lambda > 0.0 && mu > 0.0,
            "AoConfig: lambda and mu must be strictly positive");
    require(iterations >= 1, "AoConfig: iterations must be >= 1");
    require(rel_tol >= 0.0, "AoConfig: rel_tol must be >= 0");
  }
};

struct AoResult {
  std::vector<Vector> w;
  Vector v;
  std::vector<double> objective_history;  // initial value, then per half-step
  int iterations_run = 0;
};

// Alternating closed-form ridge solves of the bi-convex problem from an
// explicit initial v; w needs no initialization since the first half-step
// solves it exactly.
inline AoResult run_stage2(const std::vector<Matrix>& H_blocks,
                           const Vector& Y, const AoConfig& config,
                           const Vector& v_init) {
  config.validate();
  require(!H_blocks.empty(), "run_stage2: no design blocks");
  require_shape(v_init.size() == static_cast<Eigen::Index>(H_blocks.size()),
                "run_stage2: v initialization length mismatch");

  AoResult result;
  result.v = v_init;
  result.w.assign(H_blocks.size(), Vector());
  for (std::size_t b = 0; b < H_blocks.size(); ++b) {
    result.w[b] = Vector::Zero(H_blocks[b].cols());
  }

  result.objective_history.push_back(objective(
      H_blocks, result.w, result.v, Y, config.lambda, config.mu));
  for (int it = 0; it < config.iterations; ++it) {
    result.w = update_w(H_blocks, result.v, Y, config.lambda);
    result.objective_history.push_back(objective(
        H_blocks, result.w, result.v, Y, config.lambda, config.mu));
    result.v = update_v(H_blocks, result.w, Y, config.mu);
    result.objective_history.push_back(objective(
        H_blocks, result.w, result.v, Y, config.lambda, config.mu));
    result.iterations_run = it + 1;
    if (config.rel_tol > 0.0) {
      const auto n = result.objective_history.size();
      const double prev = result.objective_history[n - 3];
      const double curr = result.objective_history[n - 1];
      if (std::fabs(prev - curr) <= config.rel_tol * std::fabs(prev)) break;
    }
  }
  return result;
}

// Seeded variant: v starts from a standard-normal draw scaled by 1/B.
inline Vector stage2_v_init(std::size_t n_branches, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5747414532ULL));
  Vector v(static_cast<Eigen::Index>(n_branches));
  for (Eigen::Index b = 0; b < v.size(); ++b) {
    v(b) = rng.normal() / static_cast<double>(n_branches);
  }
  return v;
}

inline AoResult run_stage2(const std::vector<Matrix>& H_blocks,
                           const Vector& Y, const AoConfig& config,
                           std::uint64_t seed) {
  return run_stage2(H_blocks, Y, config,
                    stage2_v_init(H_blocks.size(), seed));
}

}  // namespace hfnn

#endif
