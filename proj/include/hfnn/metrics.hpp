#ifndef HFNN_METRICS_HPP
#define HFNN_METRICS_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "hfnn/common.hpp"

namespace hfnn {

enum class NmseDenominator { Variance, Std };

namespace detail {

// Continued fraction for the regularized incomplete beta (Lentz's method).
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3.0e-15;
  constexpr double kFpMin = 1.0e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, "incomplete_beta: a, b must be positive");
  require(x >= 0.0 && x <= 1.0, "incomplete_beta: x must be in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::betacf(a, b, x) / a;
  }
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided tail probability P(|T| > t) for Student's t with df degrees.
inline double student_t_two_sided(double t, double df) {
  require(df > 0.0, "student_t_two_sided: df must be positive");
  if (!std::isfinite(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

// Variance-normalized mean squared error over one evaluation split.
inline double nmse(const Vector& y_true, const Vector& y_pred,
                   NmseDenominator denom = NmseDenominator::Variance) {
  require_shape(y_true.size() == y_pred.size(), "nmse: length mismatch");
  require(y_true.size() >= 2, "nmse: needs at least two samples");
  const double n = static_cast<double>(y_true.size());
  const double mean = y_true.mean();
  const double variance = (y_true.array() - mean).square().sum() / n;
  if (variance <= 0.0) {
    throw InvalidParameterError("nmse: target is constant, metric undefined");
  }
  const double scale =
      denom == NmseDenominator::Variance ? variance : std::sqrt(variance);
  const double sse = (y_pred - y_true).squaredNorm();
  return sse / (n * scale);
}

inline double accuracy_pct(const std::vector<double>& labels_true,
                           const std::vector<double>& labels_pred) {
  require_shape(labels_true.size() == labels_pred.size(),
                "accuracy: length mismatch");
  require(!labels_true.empty(), "accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels_true.size(); ++i) {
    if (labels_true[i] == labels_pred[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(labels_true.size());
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// Two-sample Welch t-test with Welch-Satterthwaite degrees of freedom.
inline TTestResult welch_t_test(const std::vector<double>& a,
                                const std::vector<double>& b) {
  require(a.size() >= 2 && b.size() >= 2,
          "welch_t_test: both samples need size >= 2");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (double x : a) mean_a += x;
  for (double x : b) mean_b += x;
  mean_a /= na;
  mean_b /= nb;
  double var_a = 0.0, var_b = 0.0;
  for (double x : a) var_a += (x - mean_a) * (x - mean_a);
  for (double x : b) var_b += (x - mean_b) * (x - mean_b);
  var_a /= (na - 1.0);
  var_b /= (nb - 1.0);

  const double se2 = var_a / na + var_b / nb;
  TTestResult result;
  if (se2 == 0.0) {
    // Degenerate: no variance in either sample.
    result.t = mean_a == mean_b ? 0.0 : std::numeric_limits<double>::infinity();
    result.df = na + nb - 2.0;
    result.p = mean_a == mean_b ? 1.0 : 0.0;
    return result;
  }
  result.t = (mean_a - mean_b) / std::sqrt(se2);
  const double num = se2 * se2;
  const double den = (var_a / na) * (var_a / na) / (na - 1.0) +
                     (var_b / nb) * (var_b / nb) / (nb - 1.0);
  result.df = num / den;
  result.p = student_t_two_sided(result.t, result.df);
  return result;
}

}  // namespace hfnn

#endif
