#ifndef HFNN_EXPERIMENT_HPP
#define HFNN_EXPERIMENT_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hfnn/agent_sim.hpp"
#include "hfnn/ao.hpp"
#include "hfnn/clustering.hpp"
#include "hfnn/common.hpp"
#include "hfnn/data.hpp"
#include "hfnn/fnn.hpp"
#include "hfnn/json_util.hpp"
#include "hfnn/metrics.hpp"
#include "hfnn/model.hpp"
#include "hfnn/parallel.hpp"

namespace hfnn {

struct ExperimentConfig {
  std::string task = "regression";  // or "classification"
  int branches = 1;                 // ignored when feature_groups is explicit
  std::vector<std::vector<int>> feature_groups;
  std::vector<int> rules = {10};  // per branch; a single value broadcasts
  int agents = 1;
  double lambda = 1e-3;
  double mu = 1e-3;
  double rho = 1.0;
  double eps_primal = 1e-4;
  double eps_dual = 1e-4;
  int max_rounds = 50;
  int ao_iterations = 30;
  double ao_rel_tol = 0.0;
  std::uint64_t seed = 0;
  std::string m_update = "exact";            // or "mean"
  std::string pool_denominator = "cluster";  // or "all"
  std::string nmse_denominator = "variance";  // or "std"
  double width_floor_scale = 1e-6;
  bool normalize = true;
  int threads = 1;
  bool report_timing = true;

  void validate() const {
    require(task == "regression" || task == "classification",
            "config: task must be regression or classification");
    require(agents >= 1, "config: agents must be >= 1");
    require(lambda > 0.0 && mu > 0.0,
            "config: lambda and mu must be strictly positive");
    require(rho > 0.0, "config: rho must be positive");
    require(eps_primal > 0.0 && eps_dual > 0.0,
            "config: tolerances must be positive");
    require(max_rounds >= 1, "config: max_rounds must be >= 1");
    require(ao_iterations >= 1, "config: ao_iterations must be >= 1");
    require(!rules.empty(), "config: rules must not be empty");
    for (int k : rules) require(k >= 1, "config: rules must be >= 1");
    require(m_update == "exact" || m_update == "mean",
            "config: m_update must be exact or mean");
    require(pool_denominator == "cluster" || pool_denominator == "all",
            "config: pool_denominator must be cluster or all");
    require(nmse_denominator == "variance" || nmse_denominator == "std",
            "config: nmse_denominator must be variance or std");
    require(width_floor_scale > 0.0, "config: width_floor_scale must be > 0");
    require(threads >= 1, "config: threads must be >= 1");
  }

  std::vector<std::vector<int>> resolve_feature_groups(int n_features) const {
    if (!feature_groups.empty()) {
      validate_feature_groups(feature_groups, n_features);
      return feature_groups;
    }
    return equal_chunks(n_features, branches);
  }

  std::vector<int> resolve_rules(std::size_t n_branches) const {
    if (rules.size() == n_branches) return rules;
    if (rules.size() == 1) {
      return std::vector<int>(n_branches, rules[0]);
    }
    throw ConfigError("config: rules must have one entry or one per branch");
  }

  MUpdateMode m_update_mode() const {
    return m_update == "mean" ? MUpdateMode::Mean : MUpdateMode::Exact;
  }
  PooledDenominator pool_denominator_mode() const {
    return pool_denominator == "all" ? PooledDenominator::All
                                     : PooledDenominator::Cluster;
  }
  NmseDenominator nmse_denominator_mode() const {
    return nmse_denominator == "std" ? NmseDenominator::Std
                                     : NmseDenominator::Variance;
  }
};

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["task"] = c.task;
  j["branches"] = c.branches;
  j["feature_groups"] = c.feature_groups;
  j["rules"] = c.rules;
  j["agents"] = c.agents;
  j["lambda"] = c.lambda;
  j["mu"] = c.mu;
  j["rho"] = c.rho;
  j["eps_primal"] = c.eps_primal;
  j["eps_dual"] = c.eps_dual;
  j["max_rounds"] = c.max_rounds;
  j["ao_iterations"] = c.ao_iterations;
  j["ao_rel_tol"] = c.ao_rel_tol;
  j["seed"] = c.seed;
  j["m_update"] = c.m_update;
  j["pool_denominator"] = c.pool_denominator;
  j["nmse_denominator"] = c.nmse_denominator;
  j["width_floor_scale"] = c.width_floor_scale;
  j["normalize"] = c.normalize;
  j["threads"] = c.threads;
  j["report_timing"] = c.report_timing;
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  c.task = j.value("task", c.task);
  c.branches = j.value("branches", c.branches);
  if (j.contains("feature_groups")) {
    c.feature_groups =
        j.at("feature_groups").get<std::vector<std::vector<int>>>();
  }
  if (j.contains("rules")) {
    if (j.at("rules").is_array()) {
      c.rules = j.at("rules").get<std::vector<int>>();
    } else {
      c.rules = {j.at("rules").get<int>()};
    }
  }
  c.agents = j.value("agents", c.agents);
  c.lambda = j.value("lambda", c.lambda);
  c.mu = j.value("mu", c.mu);
  c.rho = j.value("rho", c.rho);
  c.eps_primal = j.value("eps_primal", c.eps_primal);
  c.eps_dual = j.value("eps_dual", c.eps_dual);
  c.max_rounds = j.value("max_rounds", c.max_rounds);
  c.ao_iterations = j.value("ao_iterations", c.ao_iterations);
  c.ao_rel_tol = j.value("ao_rel_tol", c.ao_rel_tol);
  c.seed = j.value("seed", c.seed);
  c.m_update = j.value("m_update", c.m_update);
  c.pool_denominator = j.value("pool_denominator", c.pool_denominator);
  c.nmse_denominator = j.value("nmse_denominator", c.nmse_denominator);
  c.width_floor_scale = j.value("width_floor_scale", c.width_floor_scale);
  c.normalize = j.value("normalize", c.normalize);
  c.threads = j.value("threads", c.threads);
  c.report_timing = j.value("report_timing", c.report_timing);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": invalid config: " + e.what());
  }
  return config_from_json(j);
}

struct TrainOutput {
  FnnModel model;
  Transcript transcript;
  std::vector<int> stage1_rounds;
  std::vector<char> stage1_converged;
  std::vector<std::vector<int>> empty_clusters;
  std::vector<std::vector<double>> objective_histories;  // per head
};

namespace detail {

inline std::vector<double> distinct_sorted(const Vector& y) {
  std::set<double> values;
  for (Eigen::Index i = 0; i < y.size(); ++i) values.insert(y(i));
  return {values.begin(), values.end()};
}

}  // namespace detail

// Full two-stage fit: distributed antecedent identification over simulated
// agents, then pooled alternating optimization of the hierarchy weights.
inline TrainOutput train_model(const Matrix& X, const Vector& y,
                               const ExperimentConfig& config) {
  config.validate();
  require(X.rows() >= 1, "train_model: empty training set");
  require_shape(X.rows() == y.size(), "train_model: X/y row mismatch");

  const auto groups = config.resolve_feature_groups(static_cast<int>(X.cols()));
  const auto rules = config.resolve_rules(groups.size());

  TrainOutput out;
  out.model.task = config.task;
  out.model.normalized = config.normalize;
  out.model.config_echo = config_to_json(config);
  // Execution-environment knobs do not describe the model; dropping them
  // keeps artifacts byte-identical at any parallelism degree.
  out.model.config_echo.erase("threads");
  out.model.config_echo.erase("report_timing");

  // Classification trains on a {-1,+1} encoding, one head per class
  // beyond binary.
  std::vector<Vector> targets;
  std::vector<double> head_labels;
  if (config.task == "classification") {
    out.model.classes = detail::distinct_sorted(y);
    require(out.model.classes.size() >= 2,
            "train_model: classification needs at least two distinct labels");
    if (out.model.classes.size() == 2) {
      Vector t(y.size());
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        t(i) = y(i) == out.model.classes[1] ? 1.0 : -1.0;
      }
      targets.push_back(std::move(t));
      head_labels.push_back(out.model.classes[1]);
    } else {
      for (double cls : out.model.classes) {
        Vector t(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i) {
          t(i) = y(i) == cls ? 1.0 : -1.0;
        }
        targets.push_back(std::move(t));
        head_labels.push_back(cls);
      }
    }
  } else {
    targets.push_back(y);
    head_labels.push_back(0.0);
  }

  Matrix Xn;
  if (config.normalize) {
    out.model.norm = fit_normalization(X);
    Xn = apply_normalization(X, out.model.norm);
  } else {
    Xn = X;
  }

  const auto assignment = distribute_samples(
      static_cast<int>(X.rows()), config.agents, derive_seed(config.seed, 17));
  const auto shards = make_shards(Xn, groups, assignment, config.agents);

  Stage1Options opts;
  opts.rules = rules;
  opts.rho = config.rho;
  opts.eps_primal = config.eps_primal;
  opts.eps_dual = config.eps_dual;
  opts.max_rounds = config.max_rounds;
  opts.m_update = config.m_update_mode();
  opts.pool_denominator = config.pool_denominator_mode();
  opts.seed = config.seed;
  opts.threads = config.threads;

  Stage1Result stage1 = run_stage1(shards, opts);
  out.stage1_rounds = stage1.rounds;
  out.stage1_converged = stage1.converged;
  out.empty_clusters = stage1.empty_clusters;

  std::vector<Matrix> H_blocks(groups.size());
  for (std::size_t b = 0; b < groups.size(); ++b) {
    const Matrix branch_X = detail::slice_columns(Xn, groups[b]);
    // Width floor: a fraction of the per-feature data range keeps the
    // Gaussians strictly positive-width.
    Vector floor = config.width_floor_scale * column_ranges(branch_X);
    for (Eigen::Index j = 0; j < floor.size(); ++j) {
      floor(j) = std::max(floor(j), 1e-12);
    }
    Matrix widths = stage1.widths[b];
    for (Eigen::Index k = 0; k < widths.rows(); ++k) {
      for (Eigen::Index j = 0; j < widths.cols(); ++j) {
        if (widths(k, j) < floor(j)) widths(k, j) = floor(j);
      }
    }
    BranchModel branch;
    branch.feature_indices = groups[b];
    branch.bank.branch_id = static_cast<int>(b);
    branch.bank.centers = stage1.centers[b];
    branch.bank.widths = std::move(widths);
    branch.bank.validate();
    out.model.branches.push_back(std::move(branch));
    H_blocks[b] = build_design_matrix(branch_X, out.model.branches[b].bank);
  }

  AoConfig ao;
  ao.lambda = config.lambda;
  ao.mu = config.mu;
  ao.iterations = config.ao_iterations;
  ao.rel_tol = config.ao_rel_tol;
  for (std::size_t h = 0; h < targets.size(); ++h) {
    const AoResult fit = run_stage2(H_blocks, targets[h], ao,
                                    derive_seed(config.seed, 1000 + h));
    PredictionHead head;
    head.label = head_labels[h];
    head.w = fit.w;
    head.v = fit.v;
    out.model.heads.push_back(std::move(head));
    out.objective_histories.push_back(fit.objective_history);
  }
  out.transcript = std::move(stage1.transcript);
  out.model.validate();
  return out;
}

// ---- Cross-validation plans.

struct FoldPlan {
  std::vector<std::vector<int>> test_indices;  // per fold, ascending
  std::vector<std::string> fold_names;

  std::size_t size() const { return test_indices.size(); }

  std::vector<int> train_indices(std::size_t fold, int n) const {
    std::vector<char> is_test(static_cast<std::size_t>(n), 0);
    for (int i : test_indices[fold]) is_test[static_cast<std::size_t>(i)] = 1;
    std::vector<int> train;
    train.reserve(static_cast<std::size_t>(n) - test_indices[fold].size());
    for (int i = 0; i < n; ++i) {
      if (!is_test[static_cast<std::size_t>(i)]) train.push_back(i);
    }
    return train;
  }
};

inline FoldPlan make_kfold(int n_samples, int n_folds, std::uint64_t seed) {
  require(n_folds >= 2, "make_kfold: need at least two folds");
  require(n_samples >= n_folds, "make_kfold: more folds than samples");
  std::vector<int> order(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan;
  plan.test_indices.resize(static_cast<std::size_t>(n_folds));
  const int base = n_samples / n_folds;
  const int remainder = n_samples % n_folds;
  std::size_t pos = 0;
  for (int f = 0; f < n_folds; ++f) {
    const int size = base + (f < remainder ? 1 : 0);
    auto& fold = plan.test_indices[static_cast<std::size_t>(f)];
    for (int j = 0; j < size; ++j) fold.push_back(order[pos++]);
    std::sort(fold.begin(), fold.end());
    plan.fold_names.push_back(std::to_string(f));
  }
  return plan;
}

// One fold per distinct group value; a group is never split across sides.
inline FoldPlan make_leave_one_group_out(const Vector& groups) {
  require(groups.size() >= 2, "leave_one_group_out: needs >= 2 samples");
  std::map<double, std::vector<int>> by_group;
  for (Eigen::Index i = 0; i < groups.size(); ++i) {
    by_group[groups(i)].push_back(static_cast<int>(i));
  }
  require(by_group.size() >= 2, "leave_one_group_out: needs >= 2 groups");
  FoldPlan plan;
  for (auto& [value, indices] : by_group) {
    plan.test_indices.push_back(indices);
    plan.fold_names.push_back("group=" + format_double(value));
  }
  return plan;
}

// ---- Experiment harness.

struct ResultRow {
  std::string dataset;
  std::string task;
  std::string fold;  // fold name, or "mean"/"std" for aggregates
  std::string split;
  std::string metric;
  double value = 0.0;
  double time_s = 0.0;
};

inline void write_results_csv(const std::vector<ResultRow>& rows,
                              std::ostream& out) {
  out << "dataset,task,fold,split,metric,value,time_s\n";
  for (const auto& row : rows) {
    out << row.dataset << "," << row.task << "," << row.fold << ","
        << row.split << "," << row.metric << "," << format_double(row.value)
        << "," << format_double(row.time_s) << "\n";
  }
}

inline void write_results_csv(const std::vector<ResultRow>& rows,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open results csv for writing: " + path);
  write_results_csv(rows, out);
}

// Aggregate view of one split across folds.
struct MetricReport {
  std::string split;
  std::string metric;
  double mean = 0.0;
  double std_dev = 0.0;
  double wall_time_s = 0.0;  // mean per-fold wall time
  int ao_iters = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<MetricReport> reports;  // train and test aggregates
  // Mean test metric across folds (nmse or accuracy_pct).
  double test_metric_mean = 0.0;
  double train_metric_mean = 0.0;
};

namespace detail {

inline Matrix take_rows(const Matrix& X, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
  }
  return out;
}

inline Vector take(const Vector& y, const std::vector<int>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = y(idx[i]);
  }
  return out;
}

inline double evaluate_split(const FnnModel& model, const Matrix& X,
                             const Vector& y, const ExperimentConfig& config) {
  if (config.task == "classification") {
    std::vector<double> truth(y.data(), y.data() + y.size());
    return accuracy_pct(truth, predict_labels(model, X));
  }
  return nmse(y, predict_regression(model, X),
              config.nmse_denominator_mode());
}

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n;
  return {mean, std::sqrt(var)};
}

}  // namespace detail

// Runs the two-stage pipeline per fold and emits per-fold rows followed by
// mean/std aggregate rows. Per-fold artifacts (model, transcript) are written
// when directories are provided.
inline ExperimentResult run_experiment(const std::string& dataset_name,
                                       const Matrix& X, const Vector& y,
                                       const ExperimentConfig& config,
                                       const FoldPlan& plan,
                                       const std::string& model_dir = "",
                                       const std::string& transcript_dir = "") {
  config.validate();
  require(plan.size() >= 1, "run_experiment: empty fold plan");
  const std::string metric_name =
      config.task == "classification" ? "accuracy_pct" : "nmse";

  ExperimentResult result;
  std::vector<double> train_scores, test_scores, times;
  for (std::size_t f = 0; f < plan.size(); ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto train_idx = plan.train_indices(f, static_cast<int>(X.rows()));
      const auto& test_idx = plan.test_indices[f];
      const Matrix X_train = detail::take_rows(X, train_idx);
      const Vector y_train = detail::take(y, train_idx);
      const Matrix X_test = detail::take_rows(X, test_idx);
      const Vector y_test = detail::take(y, test_idx);

      const TrainOutput fit = train_model(X_train, y_train, config);
      const double train_score =
          detail::evaluate_split(fit.model, X_train, y_train, config);
      const double test_score =
          detail::evaluate_split(fit.model, X_test, y_test, config);

      if (!model_dir.empty()) {
        save_model(fit.model, model_dir + "/fold_" + std::to_string(f) +
                                  ".model.json");
      }
      if (!transcript_dir.empty()) {
        write_transcript(fit.transcript,
                         transcript_dir + "/fold_" + std::to_string(f) +
                             ".transcript.jsonl");
      }

      const double elapsed =
          config.report_timing
              ? std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count()
              : 0.0;
      train_scores.push_back(train_score);
      test_scores.push_back(test_score);
      times.push_back(elapsed);
      result.rows.push_back({dataset_name, config.task, plan.fold_names[f],
                             "train", metric_name, train_score, elapsed});
      result.rows.push_back({dataset_name, config.task, plan.fold_names[f],
                             "test", metric_name, test_score, elapsed});
    } catch (const Error& e) {
      throw Error("fold " + plan.fold_names[f] + ": " + e.what());
    }
  }

  const auto [train_mean, train_std] = detail::mean_std(train_scores);
  const auto [test_mean, test_std] = detail::mean_std(test_scores);
  const auto [time_mean, time_std] = detail::mean_std(times);
  result.rows.push_back({dataset_name, config.task, "mean", "train",
                         metric_name, train_mean, time_mean});
  result.rows.push_back({dataset_name, config.task, "std", "train",
                         metric_name, train_std, time_std});
  result.rows.push_back({dataset_name, config.task, "mean", "test",
                         metric_name, test_mean, time_mean});
  result.rows.push_back({dataset_name, config.task, "std", "test", metric_name,
                         test_std, time_std});
  result.reports.push_back({"train", metric_name, train_mean, train_std,
                            time_mean, config.ao_iterations});
  result.reports.push_back({"test", metric_name, test_mean, test_std,
                            time_mean, config.ao_iterations});
  result.train_metric_mean = train_mean;
  result.test_metric_mean = test_mean;
  return result;
}

// ---- Regularization sweep.

struct SweepCell {
  double lambda = 0.0;
  double mu = 0.0;
  double train_mean = 0.0;
  double train_std = 0.0;
  double test_mean = 0.0;
  double test_std = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // row-major: lambda outer, mu inner
  std::size_t best_index = 0;
  ExperimentConfig best_config;
};

inline void write_sweep_csv(const SweepResult& sweep, std::ostream& out) {
  out << "lambda,mu,train_mean,train_std,test_mean,test_std\n";
  for (const auto& cell : sweep.cells) {
    out << format_double(cell.lambda) << "," << format_double(cell.mu) << ","
        << format_double(cell.train_mean) << ","
        << format_double(cell.train_std) << ","
        << format_double(cell.test_mean) << "," << format_double(cell.test_std)
        << "\n";
  }
}

inline void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open sweep csv for writing: " + path);
  write_sweep_csv(sweep, out);
}

// Cross-validated grid over (lambda, mu); best cell by test-fold mean
// (lowest nmse, or highest accuracy for classification).
inline SweepResult parameter_sweep(const std::string& dataset_name,
                                   const Matrix& X, const Vector& y,
                                   const ExperimentConfig& base,
                                   const std::vector<double>& lambdas,
                                   const std::vector<double>& mus,
                                   const FoldPlan& plan) {
  require(!lambdas.empty() && !mus.empty(), "parameter_sweep: empty grid");
  SweepResult sweep;
  const bool maximize = base.task == "classification";
  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  for (double lambda : lambdas) {
    for (double mu : mus) {
      ExperimentConfig config = base;
      config.lambda = lambda;
      config.mu = mu;
      const ExperimentResult res =
          run_experiment(dataset_name, X, y, config, plan);
      SweepCell cell;
      cell.lambda = lambda;
      cell.mu = mu;
      for (const auto& row : res.rows) {
        if (row.fold == "mean" && row.split == "train") cell.train_mean = row.value;
        if (row.fold == "std" && row.split == "train") cell.train_std = row.value;
        if (row.fold == "mean" && row.split == "test") cell.test_mean = row.value;
        if (row.fold == "std" && row.split == "test") cell.test_std = row.value;
      }
      sweep.cells.push_back(cell);
      const bool better = maximize ? cell.test_mean > best : cell.test_mean < best;
      if (better) {
        best = cell.test_mean;
        sweep.best_index = sweep.cells.size() - 1;
        sweep.best_config = config;
      }
    }
  }
  return sweep;
}

}  // namespace hfnn

#endif
