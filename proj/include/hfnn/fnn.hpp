#ifndef HFNN_FNN_HPP
#define HFNN_FNN_HPP

#include <cmath>
#include <string>
#include <vector>

#include "hfnn/common.hpp"

namespace hfnn {

struct GaussianFuzzySet {
  double center = 0.0;
  double width = 1.0;  // strictly positive
};

// Gaussian membership exp(-((x - center) / width)^2), always in (0, 1].
inline double membership(double x, const GaussianFuzzySet& set) {
  if (!std::isfinite(x)) {
    throw InvalidParameterError("membership: input is not finite");
  }
  if (!std::isfinite(set.width) || set.width <= 0.0 ||
      !std::isfinite(set.center)) {
    throw InvalidParameterError("membership: width must be finite and > 0");
  }
  const double z = (x - set.center) / set.width;
  return std::exp(-z * z);
}

// Antecedent parameters of one branch: K rules over that branch's features,
// each rule a Gaussian fuzzy set per feature.
struct RuleBank {
  int branch_id = 0;
  Matrix centers;  // K x F
  Matrix widths;   // K x F

  int rule_count() const { return static_cast<int>(centers.rows()); }
  int feature_count() const { return static_cast<int>(centers.cols()); }

  GaussianFuzzySet fuzzy_set(int rule, int feature) const {
    return {centers(rule, feature), widths(rule, feature)};
  }

  void validate() const {
    require(centers.rows() >= 1, "RuleBank: needs at least one rule");
    require_shape(centers.rows() == widths.rows() &&
                      centers.cols() == widths.cols(),
                  "RuleBank: centers/widths shape mismatch");
    require((widths.array() > 0.0).all(),
            "RuleBank: all widths must be strictly positive");
    require(centers.allFinite() && widths.allFinite(),
            "RuleBank: parameters must be finite");
  }
};

struct FiringStrengths {
  Vector raw;         // K, each >= 0
  Vector normalized;  // K, sums to 1
};

// Rule firing: product of per-feature memberships, then normalized across
// rules. A fully underflowed sum falls back to uniform 1/K so the output
// stays defined for far-out samples.
inline FiringStrengths firing_strengths(const Vector& x,
                                        const RuleBank& bank) {
  require_shape(x.size() == bank.feature_count(),
                "firing_strengths: expected " +
                    std::to_string(bank.feature_count()) + " features, got " +
                    std::to_string(x.size()));
  const int k_rules = bank.rule_count();
  FiringStrengths out;
  out.raw.resize(k_rules);
  for (int k = 0; k < k_rules; ++k) {
    double product = 1.0;
    for (int j = 0; j < bank.feature_count(); ++j) {
      product *= membership(x(j), bank.fuzzy_set(k, j));
    }
    out.raw(k) = product;
  }
  const double total = out.raw.sum();
  if (total < 1e-300) {
    out.normalized = Vector::Constant(k_rules, 1.0 / k_rules);
  } else {
    out.normalized = out.raw / total;
  }
  return out;
}

// Design matrix: one row per sample, one block of (1 + F) columns per rule,
// block k = normalized_firing_k * [1, x_1, ..., x_F].
inline Matrix build_design_matrix(const Matrix& X, const RuleBank& bank) {
  require_shape(X.cols() == bank.feature_count(),
                "build_design_matrix: feature count mismatch");
  const int k_rules = bank.rule_count();
  const int f = bank.feature_count();
  Matrix h(X.rows(), static_cast<Eigen::Index>(k_rules) * (f + 1));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const FiringStrengths fs = firing_strengths(x, bank);
    for (int k = 0; k < k_rules; ++k) {
      const double phi = fs.normalized(k);
      const Eigen::Index base = static_cast<Eigen::Index>(k) * (f + 1);
      h(i, base) = phi;
      for (int j = 0; j < f; ++j) h(i, base + 1 + j) = phi * x(j);
    }
  }
  return h;
}

// Branch output Z^b = H^b w^b.
inline Vector branch_output(const Matrix& H, const Vector& w) {
  require_shape(H.cols() == w.size(), "branch_output: weight length mismatch");
  return H * w;
}

// High-level coordination Y = Z v.
inline Vector hierarchy_output(const Matrix& Z, const Vector& v) {
  require_shape(Z.cols() == v.size(),
                "hierarchy_output: coordination weight length mismatch");
  return Z * v;
}

// Per-branch consequent weights plus the coordination vector.
struct HierarchyWeights {
  std::vector<Vector> w;  // B entries, length K_b * (F_b + 1)
  Vector v;               // length B
};

}  // namespace hfnn

#endif
