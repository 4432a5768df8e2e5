#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "hfnn/model.hpp"
#include "hfnn/rng.hpp"

using namespace hfnn;

namespace {

FnnModel tiny_regression_model() {
  FnnModel model;
  model.task = "regression";
  model.normalized = false;

  BranchModel branch;
  branch.feature_indices = {0, 1};
  branch.bank.branch_id = 0;
  branch.bank.centers.resize(2, 2);
  branch.bank.centers << 0.0, 0.0, 1.0, -1.0;
  branch.bank.widths = Matrix::Constant(2, 2, 0.8);
  model.branches.push_back(branch);

  PredictionHead head;
  head.w = {(Vector(6) << 0.5, 1.0, -0.5, 0.2, 0.0, 0.7).finished()};
  head.v = Vector::Constant(1, 1.25);
  model.heads.push_back(head);
  return model;
}

}  // namespace

TEST_CASE("model json round-trip preserves every number exactly") {
  FnnModel model = tiny_regression_model();
  model.branches[0].bank.centers(0, 0) = 1.0 / 3.0;
  model.branches[0].bank.widths(1, 1) = 1e-17 + 0.1;

  const std::string path =
      (std::filesystem::temp_directory_path() / "hfnn_roundtrip.model.json")
          .string();
  save_model(model, path);
  const FnnModel loaded = load_model(path);
  std::remove(path.c_str());

  CHECK(loaded.task == model.task);
  CHECK(loaded.branches[0].bank.centers == model.branches[0].bank.centers);
  CHECK(loaded.branches[0].bank.widths == model.branches[0].bank.widths);
  CHECK(loaded.heads[0].w[0] == model.heads[0].w[0]);
  CHECK(loaded.heads[0].v == model.heads[0].v);
  CHECK(loaded.branches[0].feature_indices ==
        model.branches[0].feature_indices);
}

TEST_CASE("an unfinalized model refuses to predict") {
  FnnModel model;
  model.task = "regression";
  Matrix X(1, 2);
  X << 0.0, 0.0;
  CHECK_THROWS_AS(predict_scores(model, X), InvalidParameterError);

  FnnModel headless = tiny_regression_model();
  headless.heads.clear();
  CHECK_THROWS_AS(predict_scores(headless, X), InvalidParameterError);
}

TEST_CASE("predict validates the feature count") {
  const FnnModel model = tiny_regression_model();
  Matrix bad(1, 3);
  bad << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(predict_scores(model, bad), ShapeError);
}

TEST_CASE("single-sample and batch evaluation agree exactly") {
  const FnnModel model = tiny_regression_model();
  Rng rng(3);
  Matrix X(16, 2);
  for (int i = 0; i < 16; ++i) {
    X(i, 0) = 2.0 * rng.normal();
    X(i, 1) = 2.0 * rng.normal();
  }
  const Vector batch = predict_regression(model, X);
  for (int i = 0; i < 16; ++i) {
    const Vector single = predict_regression(model, X.row(i));
    CHECK(single(0) == batch(i));
  }
}

TEST_CASE("binary classification thresholds the score at zero") {
  FnnModel model = tiny_regression_model();
  model.task = "classification";
  model.classes = {-1.0, 1.0};
  // Bias-only head: score is v * w0 regardless of input.
  model.heads[0].w = {(Vector(6) << 0.24, 0, 0, 0, 0, 0).finished()};
  model.heads[0].v = Vector::Constant(1, 1.25);  // score = +0.3

  Matrix X(1, 2);
  X << 0.3, -0.7;
  CHECK(predict_labels(model, X)[0] == 1.0);

  model.heads[0].v = Vector::Constant(1, -1.25);  // score = -0.3
  CHECK(predict_labels(model, X)[0] == -1.0);
}

TEST_CASE("multi-class prediction takes the argmax head") {
  FnnModel model = tiny_regression_model();
  model.task = "classification";
  model.classes = {2.0, 5.0, 9.0};
  PredictionHead head = model.heads[0];
  model.heads.clear();
  for (double label : model.classes) {
    PredictionHead h = head;
    h.label = label;
    // Bias-only scores 0.1 * label through w0, constant in the input.
    h.w = {(Vector(6) << 0.1 * label, 0, 0, 0, 0, 0).finished()};
    h.v = Vector::Constant(1, 1.0);
    model.heads.push_back(h);
  }
  Matrix X(2, 2);
  X << 0.0, 0.0, 3.0, 3.0;
  const auto labels = predict_labels(model, X);
  CHECK(labels[0] == 9.0);
  CHECK(labels[1] == 9.0);
}

TEST_CASE("normalization is applied inside predict") {
  FnnModel model = tiny_regression_model();
  model.normalized = true;
  model.norm.mean = (Vector(2) << 1.0, -1.0).finished();
  model.norm.scale = (Vector(2) << 2.0, 0.5).finished();

  Matrix raw(1, 2);
  raw << 3.0, -2.0;  // normalizes to (1.0, -2.0)
  Matrix pre(1, 2);
  pre << 1.0, -2.0;

  FnnModel plain = tiny_regression_model();
  CHECK(predict_regression(model, raw)(0) ==
        predict_regression(plain, pre)(0));
}
