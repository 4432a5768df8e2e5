// Command-line front end for the hierarchical fuzzy network trainer:
// synthetic data generation, two-stage training, prediction, cross-validated
// evaluation, stage-1 simulation with transcripts, and regularization sweeps.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hfnn/agent_sim.hpp"
#include "hfnn/data.hpp"
#include "hfnn/experiment.hpp"
#include "hfnn/metrics.hpp"
#include "hfnn/model.hpp"
#include "hfnn/transcript.hpp"

namespace {

using namespace hfnn;

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": invalid spec: " + e.what());
  }
  SyntheticSpec spec;
  spec.n_samples = j.value("n_samples", spec.n_samples);
  spec.noise_level = j.value("noise_level", spec.noise_level);
  spec.outlier_fraction = j.value("outlier_fraction", spec.outlier_fraction);
  spec.seed = j.value("seed", spec.seed);
  auto read_triplet = [&](const char* key, double* out) {
    if (j.contains(key)) {
      const auto values = j.at(key).get<std::vector<double>>();
      require(values.size() == 3, std::string(key) + " must have 3 entries");
      for (int i = 0; i < 3; ++i) out[i] = values[static_cast<std::size_t>(i)];
    }
  };
  read_triplet("branch1_mean", spec.branch1_mean);
  read_triplet("branch1_std", spec.branch1_std);
  read_triplet("branch2_mean", spec.branch2_mean);
  read_triplet("branch2_std", spec.branch2_std);
  spec.validate();
  return spec;
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> values;
  std::string token;
  std::stringstream ss(csv);
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) values.push_back(parse_double(token));
  }
  require(!values.empty(), "empty grid: " + csv);
  return values;
}

struct CommonDataArgs {
  std::string data_path;
  std::string target = "y";
  bool no_header = false;
};

void add_data_options(CLI::App* cmd, CommonDataArgs& args) {
  cmd->add_option("--data", args.data_path, "input CSV file")->required();
  cmd->add_option("--target", args.target,
                  "target column name, or #index for headerless files");
  cmd->add_flag("--no-header", args.no_header,
                "the CSV has no header row");
}

struct ConfigArgs {
  std::string config_path;
  std::string task;
  int agents = -1;
  int branches = -1;
  std::vector<int> rules;
  double lambda = -1.0, mu = -1.0, rho = -1.0;
  double eps_primal = -1.0, eps_dual = -1.0;
  int max_rounds = -1, ao_iterations = -1;
  std::int64_t seed = -1;
  int threads = -1;
  bool no_timing = false;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config JSON");
  cmd->add_option("--task", args.task, "regression or classification");
  cmd->add_option("--agents", args.agents, "number of agents");
  cmd->add_option("--branches", args.branches,
                  "number of branches (equal feature chunks)");
  cmd->add_option("--rules", args.rules, "rules per branch");
  cmd->add_option("--lambda", args.lambda, "consequent regularization");
  cmd->add_option("--mu", args.mu, "coordination regularization");
  cmd->add_option("--rho", args.rho, "ADMM penalty");
  cmd->add_option("--eps1", args.eps_primal, "primal tolerance");
  cmd->add_option("--eps2", args.eps_dual, "dual tolerance");
  cmd->add_option("--max-rounds", args.max_rounds, "stage-1 round budget");
  cmd->add_option("--ao-iters", args.ao_iterations, "stage-2 iterations");
  cmd->add_option("--seed", args.seed, "random seed");
  cmd->add_option("--threads", args.threads, "worker threads");
  cmd->add_flag("--no-timing", args.no_timing,
                "write zero wall times for byte-stable outputs");
}

ExperimentConfig resolve_config(const ConfigArgs& args) {
  ExperimentConfig config;
  if (!args.config_path.empty()) config = load_config(args.config_path);
  if (!args.task.empty()) config.task = args.task;
  if (args.agents > 0) config.agents = args.agents;
  if (args.branches > 0) config.branches = args.branches;
  if (!args.rules.empty()) config.rules = args.rules;
  if (args.lambda > 0) config.lambda = args.lambda;
  if (args.mu > 0) config.mu = args.mu;
  if (args.rho > 0) config.rho = args.rho;
  if (args.eps_primal > 0) config.eps_primal = args.eps_primal;
  if (args.eps_dual > 0) config.eps_dual = args.eps_dual;
  if (args.max_rounds > 0) config.max_rounds = args.max_rounds;
  if (args.ao_iterations > 0) config.ao_iterations = args.ao_iterations;
  if (args.seed >= 0) config.seed = static_cast<std::uint64_t>(args.seed);
  if (args.threads > 0) config.threads = args.threads;
  if (args.no_timing) config.report_timing = false;
  config.validate();
  return config;
}

int run(int argc, char** argv) {
  CLI::App app{"hierarchical fuzzy neural network trainer"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand(
      "gen-data", "generate the artificial two-branch dataset");
  std::string spec_path, gen_out;
  gen->add_option("--spec", spec_path, "synthetic spec JSON")->required();
  gen->add_option("--out", gen_out, "output CSV path")->required();

  // train
  auto* train = app.add_subcommand("train", "fit a model on a full dataset");
  CommonDataArgs train_data;
  ConfigArgs train_config;
  std::string train_model_path, train_transcript;
  add_data_options(train, train_data);
  add_config_options(train, train_config);
  train->add_option("--model", train_model_path, "output model JSON")
      ->required();
  train->add_option("--transcript", train_transcript,
                    "optional stage-1 transcript output");

  // predict
  auto* predict = app.add_subcommand("predict", "score a dataset");
  std::string predict_model, predict_out;
  CommonDataArgs predict_data;
  bool predict_drop_target = false;
  predict->add_option("--model", predict_model, "model JSON")->required();
  predict->add_option("--data", predict_data.data_path, "input CSV")
      ->required();
  predict->add_option("--target", predict_data.target,
                      "target column to drop if present");
  predict->add_flag("--no-header", predict_data.no_header,
                    "the CSV has no header row");
  predict->add_flag("--drop-target", predict_drop_target,
                    "input contains the target column; drop it");
  predict->add_option("--out", predict_out, "predictions CSV")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "cross-validated experiment");
  CommonDataArgs eval_data;
  ConfigArgs eval_config;
  std::string eval_results, eval_name = "dataset", eval_group;
  std::string eval_model_dir, eval_transcript_dir;
  int eval_folds = 5;
  add_data_options(eval, eval_data);
  add_config_options(eval, eval_config);
  eval->add_option("--results", eval_results, "results CSV path")->required();
  eval->add_option("--folds", eval_folds, "number of folds");
  eval->add_option("--name", eval_name, "dataset name for the report");
  eval->add_option("--group-column", eval_group,
                   "leave-one-group-out on this column");
  eval->add_option("--model-dir", eval_model_dir,
                   "directory for per-fold models");
  eval->add_option("--transcript-dir", eval_transcript_dir,
                   "directory for per-fold transcripts");

  // simulate
  auto* simulate =
      app.add_subcommand("simulate", "run stage 1 only and log the protocol");
  CommonDataArgs sim_data;
  ConfigArgs sim_config;
  std::string sim_transcript, sim_replay, sim_audit;
  bool sim_drop_target = false;
  sim_data.data_path.clear();
  simulate->add_option("--data", sim_data.data_path, "input CSV");
  simulate->add_option("--target", sim_data.target,
                       "target column to drop if present");
  simulate->add_flag("--no-header", sim_data.no_header,
                     "the CSV has no header row");
  simulate->add_flag("--drop-target", sim_drop_target,
                     "input contains the target column; drop it");
  add_config_options(simulate, sim_config);
  simulate->add_option("--transcript", sim_transcript,
                       "transcript output path");
  simulate->add_option("--replay", sim_replay,
                       "replay an existing transcript instead of running");
  simulate->add_option("--audit", sim_audit,
                       "privacy-audit an existing transcript");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "grid search over lambda and mu");
  CommonDataArgs sweep_data;
  ConfigArgs sweep_config;
  std::string sweep_results, sweep_lambdas, sweep_mus, sweep_name = "dataset";
  int sweep_folds = 5;
  add_data_options(sweep, sweep_data);
  add_config_options(sweep, sweep_config);
  sweep->add_option("--lambda-grid", sweep_lambdas,
                    "comma-separated lambda grid")
      ->required();
  sweep->add_option("--mu-grid", sweep_mus, "comma-separated mu grid")
      ->required();
  sweep->add_option("--results", sweep_results, "sweep table CSV")->required();
  sweep->add_option("--folds", sweep_folds, "number of folds");
  sweep->add_option("--name", sweep_name, "dataset name");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    const SyntheticSpec spec = load_synthetic_spec(spec_path);
    const SyntheticData data = generate_synthetic(spec);
    write_csv(gen_out, data.X, data.y, {"x1", "x2", "x3", "x4", "x5", "x6"},
              "y");
    std::cout << "wrote " << spec.n_samples << " samples to " << gen_out
              << "\n";
    return 0;
  }

  if (train->parsed()) {
    const ExperimentConfig config = resolve_config(train_config);
    const CsvData data =
        ingest_csv(train_data.data_path, train_data.target,
                   !train_data.no_header);
    const TrainOutput fit = train_model(data.X, data.y, config);
    save_model(fit.model, train_model_path);
    if (!train_transcript.empty()) {
      write_transcript(fit.transcript, train_transcript);
    }
    for (std::size_t b = 0; b < fit.stage1_rounds.size(); ++b) {
      std::cout << "branch " << b << ": stage-1 rounds="
                << fit.stage1_rounds[b]
                << (fit.stage1_converged[b] ? " (converged)" : " (budget)")
                << "\n";
      for (int k : fit.empty_clusters[b]) {
        std::cerr << "warning: branch " << b << " cluster " << k
                  << " is empty on every agent; width floored\n";
      }
    }
    std::cout << "model written to " << train_model_path << "\n";
    return 0;
  }

  if (predict->parsed()) {
    const FnnModel model = load_model(predict_model);
    Matrix X;
    if (predict_drop_target) {
      const CsvData data = ingest_csv(predict_data.data_path,
                                      predict_data.target,
                                      !predict_data.no_header);
      X = data.X;
    } else {
      // No target column: read every column as a feature.
      std::ifstream probe(predict_data.data_path);
      if (!probe) throw IoError("cannot open csv: " + predict_data.data_path);
      // Reuse the ingest path by appending a synthetic target of zeros.
      const CsvData data = ingest_csv(predict_data.data_path, "#0",
                                      !predict_data.no_header);
      X.resize(data.X.rows(), data.X.cols() + 1);
      X.col(0) = data.y;
      X.rightCols(data.X.cols()) = data.X;
    }
    std::ofstream out(predict_out);
    if (!out) throw IoError("cannot open output: " + predict_out);
    out << "prediction\n";
    if (model.task == "classification") {
      for (double label : predict_labels(model, X)) {
        out << format_double(label) << "\n";
      }
    } else {
      const Vector y = predict_regression(model, X);
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        out << format_double(y(i)) << "\n";
      }
    }
    std::cout << "wrote " << X.rows() << " predictions to " << predict_out
              << "\n";
    return 0;
  }

  if (eval->parsed()) {
    const ExperimentConfig config = resolve_config(eval_config);
    const CsvData data =
        ingest_csv(eval_data.data_path, eval_data.target,
                   !eval_data.no_header);
    Matrix X = data.X;
    FoldPlan plan;
    if (!eval_group.empty()) {
      // Pull the group column out of the features.
      std::size_t group_idx = data.feature_names.size();
      for (std::size_t c = 0; c < data.feature_names.size(); ++c) {
        if (data.feature_names[c] == eval_group) group_idx = c;
      }
      require(group_idx < data.feature_names.size(),
              "group column not found: " + eval_group);
      const Vector groups = X.col(static_cast<Eigen::Index>(group_idx));
      Matrix trimmed(X.rows(), X.cols() - 1);
      Eigen::Index out_c = 0;
      for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if (c != static_cast<Eigen::Index>(group_idx)) {
          trimmed.col(out_c++) = X.col(c);
        }
      }
      X = trimmed;
      plan = make_leave_one_group_out(groups);
    } else {
      plan = make_kfold(static_cast<int>(X.rows()), eval_folds,
                        derive_seed(config.seed, 99));
    }
    const ExperimentResult result = run_experiment(
        eval_name, X, data.y, config, plan, eval_model_dir,
        eval_transcript_dir);
    write_results_csv(result.rows, eval_results);
    for (const auto& rep : result.reports) {
      std::cout << rep.split << " " << rep.metric << ": "
                << format_double(rep.mean) << " / "
                << format_double(rep.std_dev)
                << " (time_s=" << format_double(rep.wall_time_s)
                << ", ao_iters=" << rep.ao_iters << ")\n";
    }
    std::cout << "results written to " << eval_results << "\n";
    return 0;
  }

  if (simulate->parsed()) {
    if (!sim_audit.empty()) {
      const auto report = privacy_audit(read_transcript(sim_audit));
      std::cout << "messages audited: rounds=" << report.rows.size()
                << " raw_sample_fields=" << report.raw_sample_fields << "\n";
      for (const auto& row : report.rows) {
        std::cout << "branch " << row.b << " round " << row.t
                  << ": upload_reals=" << row.upload_reals
                  << " broadcast_reals=" << row.broadcast_reals
                  << " ack_reals=" << row.ack_reals << "\n";
      }
      for (const auto& field : report.flagged_fields) {
        std::cerr << "flagged payload field: " << field << "\n";
      }
      return report.clean() ? 0 : 1;
    }
    if (!sim_replay.empty()) {
      const ReplayResult replayed = replay(read_transcript(sim_replay));
      for (std::size_t b = 0; b < replayed.centers.size(); ++b) {
        std::cout << "branch " << b << ": rounds=" << replayed.rounds[b]
                  << (replayed.converged[b] ? " (converged)" : " (budget)")
                  << "\n";
        std::cout << "centers:\n" << replayed.centers[b] << "\n";
        std::cout << "widths:\n" << replayed.widths[b] << "\n";
      }
      return 0;
    }
    require(!sim_data.data_path.empty(), "simulate: --data is required");
    const ExperimentConfig config = resolve_config(sim_config);
    Matrix X;
    if (sim_drop_target) {
      X = ingest_csv(sim_data.data_path, sim_data.target, !sim_data.no_header)
              .X;
    } else {
      const CsvData data =
          ingest_csv(sim_data.data_path, "#0", !sim_data.no_header);
      X.resize(data.X.rows(), data.X.cols() + 1);
      X.col(0) = data.y;
      X.rightCols(data.X.cols()) = data.X;
    }
    const auto groups =
        config.resolve_feature_groups(static_cast<int>(X.cols()));
    const auto assignment =
        distribute_samples(static_cast<int>(X.rows()), config.agents,
                           derive_seed(config.seed, 17));
    const auto shards = make_shards(X, groups, assignment, config.agents);
    Stage1Options opts;
    opts.rules = config.resolve_rules(groups.size());
    opts.rho = config.rho;
    opts.eps_primal = config.eps_primal;
    opts.eps_dual = config.eps_dual;
    opts.max_rounds = config.max_rounds;
    opts.m_update = config.m_update_mode();
    opts.pool_denominator = config.pool_denominator_mode();
    opts.seed = config.seed;
    opts.threads = config.threads;
    const Stage1Result result = run_stage1(shards, opts);
    for (std::size_t b = 0; b < result.rounds.size(); ++b) {
      std::cout << "branch " << b << ": rounds=" << result.rounds[b]
                << (result.converged[b] ? " (converged)" : " (budget)")
                << "\n";
    }
    if (!sim_transcript.empty()) {
      write_transcript(result.transcript, sim_transcript);
      std::cout << "transcript written to " << sim_transcript << "\n";
    }
    return 0;
  }

  if (sweep->parsed()) {
    const ExperimentConfig config = resolve_config(sweep_config);
    const CsvData data = ingest_csv(sweep_data.data_path, sweep_data.target,
                                    !sweep_data.no_header);
    const FoldPlan plan =
        make_kfold(static_cast<int>(data.X.rows()), sweep_folds,
                   derive_seed(config.seed, 99));
    const SweepResult result =
        parameter_sweep(sweep_name, data.X, data.y, config,
                        parse_grid(sweep_lambdas), parse_grid(sweep_mus), plan);
    write_sweep_csv(result, sweep_results);
    const auto& best = result.cells[result.best_index];
    std::cout << "best lambda=" << format_double(best.lambda)
              << " mu=" << format_double(best.mu)
              << " test=" << format_double(best.test_mean) << "\n"
              << "table written to " << sweep_results << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const hfnn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
