#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hfnn/clustering.hpp"
#include "hfnn/rng.hpp"

using namespace hfnn;

namespace {

// Exhaustive oracle: best 2-cluster split of a tiny 1-D set by trying every
// assignment and scoring the clustering objective with cluster means.
std::vector<double> brute_force_two_centers(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<double> best_centers;
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    double sum0 = 0.0, sum1 = 0.0;
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        sum1 += xs[i];
        ++n1;
      } else {
        sum0 += xs[i];
        ++n0;
      }
    }
    const double c0 = sum0 / n0, c1 = sum1 / n1;
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = (mask & (1u << i)) ? c1 : c0;
      obj += 0.5 * (xs[i] - c) * (xs[i] - c);
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_centers = {std::min(c0, c1), std::max(c0, c1)};
    }
  }
  return best_centers;
}

Matrix column(const std::vector<double>& xs) {
  Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = xs[i];
  }
  return m;
}

}  // namespace

TEST_CASE("centralized k-means matches the exhaustive 2-cluster oracle") {
  const std::vector<double> xs = {0.0, 1.0, 10.0, 11.0};
  const auto expected = brute_force_two_centers(xs);
  REQUIRE(expected.size() == 2);
  CHECK(expected[0] == Approx(0.5));
  CHECK(expected[1] == Approx(10.5));

  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 17ULL}) {
    const auto result = kmeans_centralized(column(xs), 2, seed, 100);
    std::vector<double> got = {result.centers(0, 0), result.centers(1, 0)};
    std::sort(got.begin(), got.end());
    CHECK(got[0] == Approx(expected[0]).margin(1e-12));
    CHECK(got[1] == Approx(expected[1]).margin(1e-12));
    CHECK(result.converged);
  }
}

TEST_CASE("k-means with one cluster returns the global mean") {
  Matrix X(4, 2);
  X << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0;
  const auto result = kmeans_centralized(X, 1, 5, 50);
  CHECK(result.centers(0, 0) == Approx(4.0).margin(1e-12));
  CHECK(result.centers(0, 1) == Approx(5.0).margin(1e-12));
}

TEST_CASE("k-means with K distinct points recovers the points exactly") {
  Matrix X(3, 1);
  X << -4.0, 0.0, 9.0;
  const auto result = kmeans_centralized(X, 3, 11, 50);
  std::vector<double> got = {result.centers(0, 0), result.centers(1, 0),
                             result.centers(2, 0)};
  std::sort(got.begin(), got.end());
  CHECK(got[0] == -4.0);
  CHECK(got[1] == 0.0);
  CHECK(got[2] == 9.0);
  CHECK(kmeans_objective(X, result.centers, result.assignment) == 0.0);
}

TEST_CASE("k-means rejects more clusters than distinct samples") {
  Matrix X(3, 1);
  X << 1.0, 1.0, 1.0;
  CHECK_THROWS_AS(kmeans_centralized(X, 2, 1, 10), InvalidParameterError);
}

TEST_CASE("lloyd objective is non-increasing along the iteration") {
  Rng rng(23);
  Matrix X(60, 2);
  for (int i = 0; i < 60; ++i) {
    X(i, 0) = rng.normal() + (i % 3) * 4.0;
    X(i, 1) = rng.normal() - (i % 2) * 3.0;
  }
  Rng init_rng(5);
  const Matrix init = init_centers_from_data(X, 4, init_rng);
  double prev = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 12; ++iters) {
    const auto result = kmeans_centralized(X, init, iters);
    const double obj = kmeans_objective(X, result.centers, result.assignment);
    CHECK(obj <= prev + 1e-9);
    prev = obj;
  }
}

TEST_CASE("local standard deviation against a supplied center") {
  CHECK(local_std(column({1.0, 3.0}), Vector::Constant(1, 2.0))(0) ==
        Approx(1.0).margin(1e-15));
  CHECK(local_std(column({2.0}), Vector::Constant(1, 2.0))(0) == 0.0);
  CHECK(local_std(column({0.0, 0.0, 3.0, 3.0}), Vector::Constant(1, 1.5))(0) ==
        Approx(1.5).margin(1e-15));
}

TEST_CASE("assignment ties break toward the lowest cluster index") {
  Matrix centers(2, 1);
  centers << 0.0, 2.0;
  Matrix X(3, 1);
  X << 1.0, 0.4, 1.7;
  const auto assignment = admm_assign(X, centers);
  CHECK(assignment[0] == 0);  // equidistant
  CHECK(assignment[1] == 0);
  CHECK(assignment[2] == 1);
}

TEST_CASE("permuting center order permutes labels consistently") {
  Rng rng(3);
  Matrix X(40, 2);
  for (int i = 0; i < 40; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
  }
  Matrix centers(3, 2);
  centers << 0.0, 0.0, 2.0, 1.0, -1.0, 3.0;
  Matrix flipped(3, 2);
  flipped.row(0) = centers.row(2);
  flipped.row(1) = centers.row(1);
  flipped.row(2) = centers.row(0);
  const auto a = admm_assign(X, centers);
  const auto b = admm_assign(X, flipped);
  const int remap[3] = {2, 1, 0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(b[i] == remap[a[i]]);
  }
}

TEST_CASE("local m-update solves the augmented Lagrangian exactly") {
  // Hand-solved stationarity fixtures.
  Vector sum1 = Vector::Constant(1, 4.0);
  CHECK(admm_local_m_update(sum1, 1, Vector::Zero(1), Vector::Zero(1), 1.0)(0) ==
        Approx(2.0).margin(1e-15));
  CHECK(admm_local_m_update(sum1, 1, Vector::Constant(1, 2.0), Vector::Zero(1),
                            1.0)(0) == Approx(1.0).margin(1e-15));
}

TEST_CASE("local m-update approaches the plain mean as rho vanishes") {
  Vector sum = Vector::Constant(1, 12.0);  // cluster {3, 4, 5}
  const double m = admm_local_m_update(sum, 3, Vector::Zero(1),
                                       Vector::Constant(1, 100.0), 1e-12)(0);
  CHECK(m == Approx(4.0).margin(1e-9));
}

TEST_CASE("empty cluster degrades to (rho r - beta) / rho") {
  Vector beta = Vector::Constant(1, 0.5);
  Vector r = Vector::Constant(1, 2.0);
  const double m = admm_local_m_update(Vector::Zero(1), 0, beta, r, 2.0)(0);
  CHECK(m == Approx((2.0 * 2.0 - 0.5) / 2.0).margin(1e-15));
}

TEST_CASE("m-update gradient of the augmented Lagrangian vanishes") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const int count = static_cast<int>(rng.uniform_below(20));
    const int dim = 1 + static_cast<int>(rng.uniform_below(4));
    Matrix cluster(count, dim);
    for (int i = 0; i < count; ++i) {
      for (int j = 0; j < dim; ++j) cluster(i, j) = 3.0 * rng.normal();
    }
    Vector beta(dim), r(dim);
    for (int j = 0; j < dim; ++j) {
      beta(j) = rng.normal();
      r(j) = rng.normal();
    }
    const double rho = 0.1 + 5.0 * rng.uniform01();
    const Vector sum = count > 0 ? cluster.colwise().sum().transpose()
                                 : Vector::Zero(dim).eval();
    const Vector m = admm_local_m_update(sum, count, beta, r, rho);
    // gradient: -sum(X - m) + beta + rho (m - r)
    Vector grad = beta + rho * (m - r);
    for (int i = 0; i < count; ++i) {
      grad -= (cluster.row(i).transpose() - m);
    }
    CHECK(grad.norm() <= 1e-10);
  }
}

TEST_CASE("global update averages and shifts by scaled duals") {
  const double rho = 0.7;
  std::vector<Vector> m = {Vector::Constant(1, 1.0), Vector::Constant(1, 3.0)};
  std::vector<Vector> beta = {Vector::Zero(1), Vector::Zero(1)};
  CHECK(admm_global_update(m, beta, rho)(0) == Approx(2.0).margin(1e-15));

  beta = {Vector::Constant(1, rho), Vector::Constant(1, rho)};
  CHECK(admm_global_update(m, beta, rho)(0) == Approx(3.0).margin(1e-12));

  std::vector<Vector> single_m = {Vector::Constant(1, -4.2)};
  std::vector<Vector> single_b = {Vector::Zero(1)};
  CHECK(admm_global_update(single_m, single_b, rho)(0) ==
        Approx(-4.2).margin(1e-12));
}

TEST_CASE("dual ascent arithmetic") {
  Vector beta = Vector::Zero(1);
  Vector m = Vector::Constant(1, 3.0);
  Vector r = Vector::Constant(1, 1.0);
  CHECK(admm_dual_update(beta, m, m, 2.0)(0) == 0.0);
  const Vector once = admm_dual_update(beta, m, r, 2.0);
  CHECK(once(0) == Approx(4.0).margin(1e-15));
  const Vector twice = admm_dual_update(once, m, r, 2.0);
  CHECK(twice(0) == Approx(8.0).margin(1e-15));
}

TEST_CASE("convergence check is a conjunction of both criteria") {
  AdmmState state;
  state.rho = 1.0;
  state.t = 1;
  state.global_centers = Matrix::Zero(1, 1);
  state.local_centers = {Matrix::Zero(1, 1)};
  state.duals = {Matrix::Zero(1, 1)};
  std::vector<Matrix> prev_duals = {Matrix::Zero(1, 1)};
  ConvergenceCriteria crit{1e-4, 1e-4, 10};

  CHECK(check_convergence(state, prev_duals, crit));

  // primal residual at 2 * eps fails
  state.local_centers[0](0, 0) = std::sqrt(2e-4);
  CHECK_FALSE(check_convergence(state, prev_duals, crit));

  // primal met, dual not
  state.local_centers[0](0, 0) = 0.0;
  state.duals[0](0, 0) = 1.0;
  CHECK_FALSE(check_convergence(state, prev_duals, crit));
}

TEST_CASE("pooled widths combine counts-weighted local variances") {
  // Single agent: pooled equals local.
  std::vector<Matrix> stds = {Matrix::Constant(1, 1, 0.8)};
  std::vector<IntVector> counts = {IntVector::Constant(1, 7)};
  CHECK(pooled_std(stds, counts).widths(0, 0) == Approx(0.8).margin(1e-15));

  // Two agents, counts {2, 2}, sigmas {1, 3} -> sqrt(5).
  stds = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 3.0)};
  counts = {IntVector::Constant(1, 2), IntVector::Constant(1, 2)};
  CHECK(pooled_std(stds, counts).widths(0, 0) ==
        Approx(std::sqrt(5.0)).margin(1e-12));

  // Identical sigma everywhere stays put.
  stds = {Matrix::Constant(1, 1, 0.4), Matrix::Constant(1, 1, 0.4)};
  counts = {IntVector::Constant(1, 5), IntVector::Constant(1, 9)};
  CHECK(pooled_std(stds, counts).widths(0, 0) == Approx(0.4).margin(1e-12));
}

TEST_CASE("pooled widths with the all-samples denominator") {
  std::vector<Matrix> stds = {Matrix::Constant(2, 1, 1.0)};
  std::vector<IntVector> counts(1);
  counts[0] = IntVector(2);
  counts[0] << 3, 1;
  // cluster 0: sqrt(3 * 1 / 4), cluster 1: sqrt(1 * 1 / 4)
  const auto pooled = pooled_std(stds, counts, PooledDenominator::All);
  CHECK(pooled.widths(0, 0) == Approx(std::sqrt(0.75)).margin(1e-12));
  CHECK(pooled.widths(1, 0) == Approx(std::sqrt(0.25)).margin(1e-12));
}

TEST_CASE("pooled widths flag clusters empty on every agent") {
  std::vector<Matrix> stds = {Matrix::Zero(2, 1)};
  std::vector<IntVector> counts(1);
  counts[0] = IntVector(2);
  counts[0] << 4, 0;
  Vector floor = Vector::Constant(1, 1e-3);
  const auto pooled =
      pooled_std(stds, counts, PooledDenominator::Cluster, floor);
  REQUIRE(pooled.empty_clusters.size() == 1);
  CHECK(pooled.empty_clusters[0] == 1);
  CHECK(pooled.widths(1, 0) == 1e-3);
}

TEST_CASE("pooled widths with identical shards equal local widths on union") {
  // counts-weighted identity: same data on both agents.
  Matrix cluster(4, 1);
  cluster << 0.0, 1.0, 2.0, 3.0;
  const Vector center = Vector::Constant(1, 1.5);
  const Vector sigma = local_std(cluster, center);
  std::vector<Matrix> stds = {sigma.transpose(), sigma.transpose()};
  std::vector<IntVector> counts = {IntVector::Constant(1, 4),
                                   IntVector::Constant(1, 4)};
  CHECK(pooled_std(stds, counts).widths(0, 0) ==
        Approx(sigma(0)).margin(1e-12));
}

TEST_CASE("consensus rounds are permutation-equivariant in the agents") {
  Rng rng(77);
  std::vector<Matrix> agents;
  for (int l = 0; l < 3; ++l) {
    Matrix X(30, 2);
    for (int i = 0; i < 30; ++i) {
      X(i, 0) = rng.normal() + (i % 2) * 3.0;
      X(i, 1) = rng.normal();
    }
    agents.push_back(X);
  }
  Rng init_rng(5);
  const Matrix init = init_centers_from_data(agents[0], 2, init_rng);
  ConvergenceCriteria crit{1e-10, 1e-10, 15};

  const auto direct = consensus_kmeans(agents, init, 0.5, crit);
  std::vector<Matrix> permuted = {agents[2], agents[0], agents[1]};
  const auto shuffled = consensus_kmeans(permuted, init, 0.5, crit);

  CHECK((direct.centers - shuffled.centers).cwiseAbs().maxCoeff() <= 1e-12);
  // Local states follow their agents (up to reduction-order rounding in the
  // consensus center they track).
  CHECK((direct.state.local_centers[0] - shuffled.state.local_centers[1])
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
  CHECK((direct.state.local_centers[2] - shuffled.state.local_centers[0])
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
}

TEST_CASE("a full consensus round maps the Lloyd fixed point to itself") {
  // Stationarity: start at m = r = exact centroids of a stable assignment
  // with zero duals; one more round must not move anything.
  Matrix X(6, 1);
  X << 0.0, 0.2, 0.4, 10.0, 10.2, 10.4;
  Matrix init(2, 1);
  init << 0.2, 10.2;  // exact centroids
  // Round 1 establishes the assignment; round 2 confirms stability.
  ConvergenceCriteria crit{1e-12, 1e-12, 3};
  const auto result = consensus_kmeans({X}, init, 1.0, crit);
  CHECK(result.converged);
  CHECK(result.rounds == 2);
  CHECK(std::fabs(result.centers(0, 0) - 0.2) <= 1e-12);
  CHECK(std::fabs(result.centers(1, 0) - 10.2) <= 1e-12);
  // With L = 1 the consensus center tracks the local center exactly.
  CHECK(result.state.local_centers[0] == result.state.global_centers);
}
