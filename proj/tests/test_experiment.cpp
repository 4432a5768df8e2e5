#include <catch2/catch.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "hfnn/experiment.hpp"

using namespace hfnn;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.task = "regression";
  config.branches = 2;
  config.rules = {3};
  config.agents = 2;
  config.lambda = 1e-4;
  config.mu = 1e-4;
  config.rho = 1.0;
  config.max_rounds = 25;
  config.ao_iterations = 8;
  config.seed = 11;
  config.report_timing = false;
  return config;
}

SyntheticData small_synthetic(int n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_samples = n;
  spec.seed = seed;
  return generate_synthetic(spec);
}

}  // namespace

TEST_CASE("config json round-trip preserves fields") {
  ExperimentConfig config = small_config();
  config.feature_groups = {{0, 2}, {1, 3, 4}, {5}};
  config.rules = {2, 3, 4};
  config.nmse_denominator = "std";
  config.pool_denominator = "all";
  config.m_update = "mean";
  const Json j = config_to_json(config);
  const ExperimentConfig back = config_from_json(j);
  CHECK(back.task == config.task);
  CHECK(back.feature_groups == config.feature_groups);
  CHECK(back.rules == config.rules);
  CHECK(back.agents == config.agents);
  CHECK(back.lambda == config.lambda);
  CHECK(back.nmse_denominator == "std");
  CHECK(back.pool_denominator == "all");
  CHECK(back.m_update == "mean");
  CHECK(back.report_timing == false);
}

TEST_CASE("config validation rejects bad values") {
  ExperimentConfig config = small_config();
  config.lambda = 0.0;
  CHECK_THROWS_AS(config.validate(), InvalidParameterError);
  config = small_config();
  config.task = "ranking";
  CHECK_THROWS_AS(config.validate(), InvalidParameterError);
  config = small_config();
  config.rules = {0};
  CHECK_THROWS_AS(config.validate(), InvalidParameterError);
}

TEST_CASE("k-fold plans partition the samples") {
  const FoldPlan plan = make_kfold(23, 5, 3);
  REQUIRE(plan.size() == 5);
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto& fold : plan.test_indices) {
    total += fold.size();
    for (int i : fold) {
      CHECK(seen.insert(i).second);
    }
    CHECK(fold.size() >= 4);
    CHECK(fold.size() <= 5);
  }
  CHECK(total == 23);
  // train/test complement
  const auto train = plan.train_indices(0, 23);
  CHECK(train.size() + plan.test_indices[0].size() == 23);
}

TEST_CASE("leave-one-group-out never splits a group") {
  Vector groups(8);
  groups << 1, 1, 2, 2, 2, 3, 3, 1;
  const FoldPlan plan = make_leave_one_group_out(groups);
  REQUIRE(plan.size() == 3);
  for (std::size_t f = 0; f < plan.size(); ++f) {
    std::set<double> values;
    for (int i : plan.test_indices[f]) values.insert(groups(i));
    CHECK(values.size() == 1);
  }
}

TEST_CASE("training on a constant target predicts that constant") {
  const int n = 240;
  Rng rng(2);
  Matrix X(n, 4);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) X(i, j) = rng.normal();
  }
  const Vector y = Vector::Constant(n, 3.25);

  ExperimentConfig config = small_config();
  config.branches = 2;
  config.rules = {2};
  config.lambda = 1e-8;
  config.mu = 1e-8;
  const TrainOutput fit = train_model(X, y, config);
  const Vector pred = predict_regression(fit.model, X);
  for (int i = 0; i < n; ++i) {
    CHECK(std::fabs(pred(i) - 3.25) <= 1e-6);
  }
}

TEST_CASE("objective history from training is non-increasing") {
  const auto data = small_synthetic(300, 5);
  const TrainOutput fit = train_model(data.X, data.y, small_config());
  REQUIRE(fit.objective_histories.size() == 1);
  const auto& history = fit.objective_histories[0];
  REQUIRE(history.size() >= 3);
  for (std::size_t i = 1; i < history.size(); ++i) {
    CHECK(history[i] <= history[i - 1] * (1.0 + 1e-10) + 1e-12);
  }
}

TEST_CASE("run_experiment emits per-fold rows plus aggregates") {
  const auto data = small_synthetic(400, 8);
  const FoldPlan plan = make_kfold(400, 4, 21);
  const auto result =
      run_experiment("synthetic", data.X, data.y, small_config(), plan);

  // 4 folds x 2 splits + 4 aggregate rows.
  REQUIRE(result.rows.size() == 12);
  for (const auto& row : result.rows) {
    CHECK(row.dataset == "synthetic");
    CHECK(row.metric == "nmse");
    CHECK(row.value >= 0.0);
  }

  // Aggregates equal the mean/std of the per-fold rows.
  std::vector<double> test_values;
  for (const auto& row : result.rows) {
    if (row.split == "test" && row.fold != "mean" && row.fold != "std") {
      test_values.push_back(row.value);
    }
  }
  REQUIRE(test_values.size() == 4);
  double mean = 0.0;
  for (double v : test_values) mean += v;
  mean /= 4.0;
  double var = 0.0;
  for (double v : test_values) var += (v - mean) * (v - mean);
  var /= 4.0;
  for (const auto& row : result.rows) {
    if (row.split == "test" && row.fold == "mean") {
      CHECK(row.value == Approx(mean).epsilon(1e-12));
    }
    if (row.split == "test" && row.fold == "std") {
      CHECK(row.value == Approx(std::sqrt(var)).epsilon(1e-12));
    }
  }
}

TEST_CASE("experiments are deterministic when timing is suppressed") {
  const auto data = small_synthetic(300, 4);
  const FoldPlan plan = make_kfold(300, 3, 9);
  const auto a =
      run_experiment("synthetic", data.X, data.y, small_config(), plan);
  const auto b =
      run_experiment("synthetic", data.X, data.y, small_config(), plan);
  std::ostringstream csv_a, csv_b;
  write_results_csv(a.rows, csv_a);
  write_results_csv(b.rows, csv_b);
  CHECK(csv_a.str() == csv_b.str());
}

TEST_CASE("classification experiment reports accuracy and separates blobs") {
  Rng rng(19);
  const int n = 300;
  Matrix X(n, 4);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    const double cls = (i % 2 == 0) ? -1.0 : 1.0;
    for (int j = 0; j < 4; ++j) X(i, j) = 3.0 * cls + rng.normal();
    y(i) = cls;
  }
  ExperimentConfig config = small_config();
  config.task = "classification";
  config.rules = {2};
  const FoldPlan plan = make_kfold(n, 3, 2);
  const auto result = run_experiment("blobs", X, y, config, plan);
  for (const auto& row : result.rows) {
    CHECK(row.metric == "accuracy_pct");
    if (row.fold != "std") CHECK(row.value >= 95.0);
  }
}

TEST_CASE("multi-class one-vs-rest training predicts all classes") {
  Rng rng(29);
  const int per = 60;
  Matrix X(3 * per, 2);
  Vector y(3 * per);
  const double centers[3][2] = {{0, 0}, {6, 0}, {0, 6}};
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < per; ++i) {
      X(c * per + i, 0) = centers[c][0] + 0.5 * rng.normal();
      X(c * per + i, 1) = centers[c][1] + 0.5 * rng.normal();
      y(c * per + i) = static_cast<double>(c * 2);  // labels 0, 2, 4
    }
  }
  ExperimentConfig config = small_config();
  config.task = "classification";
  config.branches = 1;
  config.rules = {3};
  config.agents = 1;
  const TrainOutput fit = train_model(X, y, config);
  REQUIRE(fit.model.heads.size() == 3);
  const auto labels = predict_labels(fit.model, X);
  int correct = 0;
  for (int i = 0; i < 3 * per; ++i) {
    if (labels[static_cast<std::size_t>(i)] == y(i)) ++correct;
  }
  CHECK(correct >= 3 * per - 2);
}

TEST_CASE("parameter sweep selects the dominant cell and lists every cell") {
  const auto data = small_synthetic(240, 31);
  ExperimentConfig config = small_config();
  config.ao_iterations = 6;
  const FoldPlan plan = make_kfold(240, 3, 5);
  // A huge lambda cripples the fit; the small one must win.
  const std::vector<double> lambdas = {1e-4, 1e6};
  const std::vector<double> mus = {1e-4};
  const auto sweep =
      parameter_sweep("synthetic", data.X, data.y, config, lambdas, mus, plan);
  REQUIRE(sweep.cells.size() == 2);
  CHECK(sweep.best_index == 0);
  CHECK(sweep.best_config.lambda == 1e-4);
  CHECK(sweep.cells[0].test_mean < sweep.cells[1].test_mean);

  const auto single = parameter_sweep("synthetic", data.X, data.y, config,
                                      {0.5}, {0.25}, plan);
  REQUIRE(single.cells.size() == 1);
  CHECK(single.best_config.lambda == 0.5);
  CHECK(single.best_config.mu == 0.25);
}

TEST_CASE("results csv has the fixed column order") {
  std::vector<ResultRow> rows = {
      {"d", "regression", "0", "test", "nmse", 0.5, 1.25}};
  std::ostringstream out;
  write_results_csv(rows, out);
  CHECK(out.str() ==
        "dataset,task,fold,split,metric,value,time_s\n"
        "d,regression,0,test,nmse,0.5,1.25\n");
}
