/*
 * Copyright 2026 The weakdis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef WEAKDIS_CLASSIFIERS_H_
#define WEAKDIS_CLASSIFIERS_H_

#include <memory>
#include <string>
#include <vector>

#include "weakdis/common.h"

namespace weakdis {

using Labels = std::vector<int>;

double accuracy(const Labels& truth, const Labels& predicted);
// Mean per-class recall over classes present in `truth`.
double balanced_accuracy(const Labels& truth, const Labels& predicted);

// Rows of `x` selected by `rows`.
MatrixD take_rows(const MatrixD& x, const std::vector<int>& rows);
Labels take(const Labels& y, const std::vector<int>& rows);

class Classifier {
 public:
  virtual ~Classifier() = default;
  // Labels lie in [0, num_classes).
  virtual void fit(const MatrixD& x, const Labels& y, int num_classes) = 0;
  virtual MatrixD predict_proba(const MatrixD& x) const = 0;
  Labels predict(const MatrixD& x) const;
};

struct GbtOptions {
  int num_rounds = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
  int max_bins = 255;  // per-feature split candidates
  int min_samples_leaf = 1;
};

// Multinomial gradient-boosted regression trees (one tree per class and
// round, Newton leaf values on the softmax loss). A split sends x < t left,
// with t drawn from the training values themselves (every distinct value, or
// quantiles when there are more than max_bins), so fitted partitions and
// predictions are unchanged by strictly increasing feature transforms.
class GradientBoostingClassifier : public Classifier {
 public:
  explicit GradientBoostingClassifier(GbtOptions options = {}) : opt_(options) {}
  void fit(const MatrixD& x, const Labels& y, int num_classes) override;
  MatrixD predict_proba(const MatrixD& x) const override;
  // Total impurity decrease per feature over all trees, normalized to sum 1
  // (all zero if no split was ever made).
  const VectorD& feature_importances() const { return importances_; }

  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0;
    int left = -1, right = -1;
    double value = 0;
  };
  using Tree = std::vector<Node>;

 private:
  double predict_tree(const Tree& tree, const double* row) const;

  GbtOptions opt_;
  int num_classes_ = 0;
  int num_features_ = 0;
  VectorD init_;
  std::vector<Tree> trees_;  // round-major, class-minor
  VectorD importances_;
};

struct LogisticOptions {
  double c = 1.0;  // inverse L2 strength on weights; intercepts are free
  int max_iterations = 100;
  double gradient_tolerance = 1e-4;
};

// L2-regularized multinomial logistic regression solved with L-BFGS.
class LogisticRegression : public Classifier {
 public:
  explicit LogisticRegression(LogisticOptions options = {}) : opt_(options) {}
  void fit(const MatrixD& x, const Labels& y, int num_classes) override;
  MatrixD predict_proba(const MatrixD& x) const override;
  // Starts the next fit from these coefficients when shapes agree.
  void warm_start(const MatrixD& coefficients) { coef_ = coefficients; }
  // (num_features + 1) x num_classes, intercept in the last row.
  const MatrixD& coefficients() const { return coef_; }

 private:
  LogisticOptions opt_;
  int num_classes_ = 0;
  MatrixD coef_;
};

struct LogisticCvOptions {
  int num_cs = 10;  // C on a log grid over [1e-4, 1e4]
  int folds = 5;    // contiguous, unshuffled folds
  int max_iterations = 100;
};

// Picks C by k-fold accuracy (first maximum), then refits on all data.
class LogisticRegressionCV : public Classifier {
 public:
  explicit LogisticRegressionCV(LogisticCvOptions options = {}) : opt_(options) {}
  void fit(const MatrixD& x, const Labels& y, int num_classes) override;
  MatrixD predict_proba(const MatrixD& x) const override;
  double chosen_c() const { return chosen_c_; }
  std::vector<double> cs() const;

 private:
  LogisticCvOptions opt_;
  double chosen_c_ = 0;
  LogisticRegression model_;
};

// One-dimensional classifier: classes are ordered by their training mean and
// the line is cut at midpoints between consecutive means.
class NearestMeanThresholdClassifier {
 public:
  void fit(const VectorD& x, const Labels& y, int num_classes);
  Labels predict(const VectorD& x) const;

 private:
  std::vector<double> cuts_;
  std::vector<int> classes_;  // class of each interval, left to right
};

enum class ClassifierKind { kLogisticCv, kGradientBoosting };
std::string to_string(ClassifierKind k);
ClassifierKind parse_classifier(const std::string& text);
std::unique_ptr<Classifier> make_classifier(ClassifierKind kind);

}  // namespace weakdis

#endif  // WEAKDIS_CLASSIFIERS_H_
