#ifndef HFNN_MODEL_HPP
#define HFNN_MODEL_HPP

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "hfnn/common.hpp"
#include "hfnn/data.hpp"
#include "hfnn/fnn.hpp"
#include "hfnn/json_util.hpp"

namespace hfnn {

struct BranchModel {
  std::vector<int> feature_indices;
  RuleBank bank;
};

// One trained output head. Regression and binary classification use a single
// head; multi-class uses one head per class (one-vs-rest, argmax of scores).
struct PredictionHead {
  double label = 0.0;       // class value for classification heads
  std::vector<Vector> w;    // per branch
  Vector v;                 // length B
};

struct FnnModel {
  int format_version = 1;
  std::string task = "regression";     // or "classification"
  std::vector<double> classes;         // empty for regression
  bool normalized = true;
  NormalizationStats norm;
  std::vector<BranchModel> branches;
  std::vector<PredictionHead> heads;
  Json config_echo;  // the experiment configuration the model was trained with

  int total_features() const {
    int count = 0;
    for (const auto& branch : branches) {
      count += static_cast<int>(branch.feature_indices.size());
    }
    return count;
  }

  void validate() const {
    require(!branches.empty(), "model: no branches; model not finalized");
    require(!heads.empty(), "model: no trained heads; model not finalized");
    for (const auto& branch : branches) {
      branch.bank.validate();
      require_shape(static_cast<int>(branch.feature_indices.size()) ==
                        branch.bank.feature_count(),
                    "model: branch feature count mismatch");
    }
    for (const auto& head : heads) {
      require_shape(head.w.size() == branches.size(),
                    "model: head weight count mismatch");
      require_shape(head.v.size() ==
                        static_cast<Eigen::Index>(branches.size()),
                    "model: coordination weight length mismatch");
      for (std::size_t b = 0; b < branches.size(); ++b) {
        const auto expected = static_cast<Eigen::Index>(
            branches[b].bank.rule_count() *
            (branches[b].bank.feature_count() + 1));
        require_shape(head.w[b].size() == expected,
                      "model: consequent weight length mismatch");
      }
    }
    if (task == "classification") {
      require(classes.size() >= 2, "model: classification needs >= 2 classes");
    }
    if (normalized) {
      require_shape(norm.mean.size() == total_features(),
                    "model: normalization stats length mismatch");
    }
  }
};

namespace detail {

inline Matrix slice_columns(const Matrix& X, const std::vector<int>& cols) {
  Matrix out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = X.col(cols[c]);
  }
  return out;
}

}  // namespace detail

// Raw scores per head: applies stored normalization, splits features per
// branch, evaluates rules and hierarchy. Rows are computed independently,
// so a sample scores the same alone or inside any batch.
inline Matrix predict_scores(const FnnModel& model, const Matrix& X) {
  model.validate();
  require_shape(X.cols() == model.total_features(),
                "predict: expected " + std::to_string(model.total_features()) +
                    " features, got " + std::to_string(X.cols()));
  const Matrix Xn =
      model.normalized ? apply_normalization(X, model.norm) : X;
  Matrix scores(X.rows(), static_cast<Eigen::Index>(model.heads.size()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (std::size_t h = 0; h < model.heads.size(); ++h) {
      scores(i, static_cast<Eigen::Index>(h)) = 0.0;
    }
    for (std::size_t b = 0; b < model.branches.size(); ++b) {
      const auto& branch = model.branches[b];
      Vector x(branch.feature_indices.size());
      for (std::size_t c = 0; c < branch.feature_indices.size(); ++c) {
        x(static_cast<Eigen::Index>(c)) = Xn(i, branch.feature_indices[c]);
      }
      const FiringStrengths fs = firing_strengths(x, branch.bank);
      const int f = branch.bank.feature_count();
      for (std::size_t h = 0; h < model.heads.size(); ++h) {
        const Vector& w = model.heads[h].w[b];
        double z = 0.0;
        for (int k = 0; k < branch.bank.rule_count(); ++k) {
          double affine = w(k * (f + 1));
          for (int j = 0; j < f; ++j) affine += w(k * (f + 1) + 1 + j) * x(j);
          z += fs.normalized(k) * affine;
        }
        scores(i, static_cast<Eigen::Index>(h)) +=
            model.heads[h].v(static_cast<Eigen::Index>(b)) * z;
      }
    }
  }
  return scores;
}

inline Vector predict_regression(const FnnModel& model, const Matrix& X) {
  require(model.task == "regression", "predict_regression: wrong task");
  return predict_scores(model, X).col(0);
}

// Binary: sign of the single head's score on the {-1,+1} encoding, threshold
// at zero (score >= 0 maps to the positive class). Multi-class: argmax of
// one-vs-rest scores, ties toward the lowest class index.
inline std::vector<double> predict_labels(const FnnModel& model,
                                          const Matrix& X) {
  require(model.task == "classification", "predict_labels: wrong task");
  const Matrix scores = predict_scores(model, X);
  std::vector<double> labels(static_cast<std::size_t>(X.rows()));
  if (model.heads.size() == 1) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      labels[static_cast<std::size_t>(i)] =
          scores(i, 0) >= 0.0 ? model.classes[1] : model.classes[0];
    }
  } else {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      Eigen::Index best = 0;
      scores.row(i).maxCoeff(&best);
      labels[static_cast<std::size_t>(i)] = model.heads[best].label;
    }
  }
  return labels;
}

inline Json model_to_json(const FnnModel& model) {
  Json j;
  j["format_version"] = model.format_version;
  j["task"] = model.task;
  j["classes"] = model.classes;
  j["normalized"] = model.normalized;
  if (model.normalized) {
    j["normalization"] = {
        {"mean", jsonutil::vector_to_json(model.norm.mean)},
        {"scale", jsonutil::vector_to_json(model.norm.scale)},
    };
  }
  Json branches = Json::array();
  for (const auto& branch : model.branches) {
    Json jb;
    jb["feature_indices"] = branch.feature_indices;
    jb["rules"] = branch.bank.rule_count();
    jb["centers"] = jsonutil::matrix_to_json(branch.bank.centers);
    jb["widths"] = jsonutil::matrix_to_json(branch.bank.widths);
    branches.push_back(std::move(jb));
  }
  j["branches"] = std::move(branches);
  Json heads = Json::array();
  for (const auto& head : model.heads) {
    Json jh;
    jh["label"] = head.label;
    Json w = Json::array();
    for (const auto& wb : head.w) w.push_back(jsonutil::vector_to_json(wb));
    jh["w"] = std::move(w);
    jh["v"] = jsonutil::vector_to_json(head.v);
    heads.push_back(std::move(jh));
  }
  j["heads"] = std::move(heads);
  if (!model.config_echo.is_null()) j["config"] = model.config_echo;
  return j;
}

inline FnnModel model_from_json(const Json& j) {
  FnnModel model;
  model.format_version = j.at("format_version").get<int>();
  if (model.format_version != 1) {
    throw ParseError("unsupported model format version " +
                     std::to_string(model.format_version));
  }
  model.task = j.at("task").get<std::string>();
  model.classes = j.at("classes").get<std::vector<double>>();
  model.normalized = j.at("normalized").get<bool>();
  if (model.normalized) {
    model.norm.mean = jsonutil::vector_from_json(j.at("normalization").at("mean"));
    model.norm.scale =
        jsonutil::vector_from_json(j.at("normalization").at("scale"));
  }
  for (const auto& jb : j.at("branches")) {
    BranchModel branch;
    branch.feature_indices = jb.at("feature_indices").get<std::vector<int>>();
    branch.bank.branch_id = static_cast<int>(model.branches.size());
    branch.bank.centers = jsonutil::matrix_from_json(jb.at("centers"));
    branch.bank.widths = jsonutil::matrix_from_json(jb.at("widths"));
    model.branches.push_back(std::move(branch));
  }
  for (const auto& jh : j.at("heads")) {
    PredictionHead head;
    head.label = jh.at("label").get<double>();
    for (const auto& jw : jh.at("w")) {
      head.w.push_back(jsonutil::vector_from_json(jw));
    }
    head.v = jsonutil::vector_from_json(jh.at("v"));
    model.heads.push_back(std::move(head));
  }
  if (j.contains("config")) model.config_echo = j.at("config");
  model.validate();
  return model;
}

inline void save_model(const FnnModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open model file for writing: " + path);
  out << model_to_json(model).dump(2) << "\n";
}

inline FnnModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": invalid model file: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace hfnn

#endif
