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

#include "weakdis/classifiers.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

namespace weakdis {

double accuracy(const Labels& truth, const Labels& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw std::invalid_argument("accuracy needs equal, non-empty label vectors");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / truth.size();
}

double balanced_accuracy(const Labels& truth, const Labels& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw std::invalid_argument("balanced_accuracy needs equal, non-empty label vectors");
  }
  const int k = *std::max_element(truth.begin(), truth.end()) + 1;
  std::vector<long> total(k, 0), hits(k, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++total[truth[i]];
    hits[truth[i]] += truth[i] == predicted[i];
  }
  double sum = 0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(hits[c]) / total[c];
    ++present;
  }
  return sum / present;
}

MatrixD take_rows(const MatrixD& x, const std::vector<int>& rows) {
  MatrixD out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = x.row(rows[i]);
  return out;
}

Labels take(const Labels& y, const std::vector<int>& rows) {
  Labels out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

Labels Classifier::predict(const MatrixD& x) const {
  const MatrixD p = predict_proba(x);
  Labels out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i).maxCoeff(&out[i]);
  return out;
}

namespace {

void check_training_set(const MatrixD& x, const Labels& y, int num_classes) {
  if (x.rows() == 0 || static_cast<std::size_t>(x.rows()) != y.size()) {
    throw std::invalid_argument("training set is empty or mismatched");
  }
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  for (int label : y) {
    if (label < 0 || label >= num_classes) throw std::invalid_argument("label out of range");
  }
  if (!x.allFinite()) throw std::invalid_argument("features must be finite");
}

// Row-wise softmax in place.
void softmax_rows(MatrixD& f) {
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    const double m = f.row(i).maxCoeff();
    f.row(i) = (f.row(i).array() - m).exp();
    f.row(i) /= f.row(i).sum();
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Gradient boosting

namespace {

struct BinnedFeatures {
  std::vector<std::vector<double>> edges;  // split thresholds per feature
  std::vector<std::uint8_t> bins;          // column-major
  int rows = 0;
  std::uint8_t at(int i, int f) const { return bins[static_cast<std::size_t>(f) * rows + i]; }
};

BinnedFeatures bin_features(const MatrixD& x, int max_bins) {
  BinnedFeatures b;
  b.rows = static_cast<int>(x.rows());
  b.edges.resize(x.cols());
  b.bins.resize(static_cast<std::size_t>(x.rows()) * x.cols());
  std::vector<double> column(x.rows());
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) column[i] = x(i, f);
    std::sort(column.begin(), column.end());
    std::vector<double> unique = column;
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    auto& edges = b.edges[f];
    if (static_cast<int>(unique.size()) <= max_bins) {
      edges.assign(unique.begin() + (unique.empty() ? 0 : 1), unique.end());
    } else {
      for (int q = 1; q < max_bins; ++q) {
        const double v = column[static_cast<std::size_t>(q) * column.size() / max_bins];
        if (v > column.front() && (edges.empty() || v > edges.back())) edges.push_back(v);
      }
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto bin = std::upper_bound(edges.begin(), edges.end(), x(i, f)) - edges.begin();
      b.bins[static_cast<std::size_t>(f) * b.rows + i] = static_cast<std::uint8_t>(bin);
    }
  }
  return b;
}

struct TreeBuilder {
  const BinnedFeatures& data;
  const VectorD& residual;
  const VectorD& hessian;
  const GbtOptions& opt;
  double leaf_scale;
  GradientBoostingClassifier::Tree tree;
  VectorD gains;           // per feature
  std::vector<int> leaf_of;  // node index of each training row

  int build(std::vector<int>& rows, int depth) {
    const int node = static_cast<int>(tree.size());
    tree.emplace_back();
    double sum = 0, hsum = 0;
    for (int i : rows) {
      sum += residual[i];
      hsum += hessian[i];
    }
    const int n = static_cast<int>(rows.size());

    int best_feature = -1, best_bin = -1;
    double best_gain = 1e-12;
    if (depth < opt.max_depth && n >= 2 * opt.min_samples_leaf) {
      const double parent = sum * sum / n;
      std::vector<double> hist_sum;
      std::vector<int> hist_count;
      for (std::size_t f = 0; f < data.edges.size(); ++f) {
        const int nb = static_cast<int>(data.edges[f].size()) + 1;
        if (nb < 2) continue;
        hist_sum.assign(nb, 0.0);
        hist_count.assign(nb, 0);
        for (int i : rows) {
          const int b = data.at(i, static_cast<int>(f));
          hist_sum[b] += residual[i];
          ++hist_count[b];
        }
        double left_sum = 0;
        int left_n = 0;
        for (int b = 0; b + 1 < nb; ++b) {
          left_sum += hist_sum[b];
          left_n += hist_count[b];
          const int right_n = n - left_n;
          if (left_n < opt.min_samples_leaf || right_n < opt.min_samples_leaf) continue;
          const double right_sum = sum - left_sum;
          const double gain =
              left_sum * left_sum / left_n + right_sum * right_sum / right_n - parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            best_bin = b;
          }
        }
      }
    }

    if (best_feature < 0) {
      tree[node].value = hsum > 1e-150 ? leaf_scale * sum / hsum : 0.0;
      for (int i : rows) leaf_of[i] = node;
      return node;
    }
    gains[best_feature] += best_gain;
    std::vector<int> left, right;
    for (int i : rows) (data.at(i, best_feature) <= best_bin ? left : right).push_back(i);
    rows.clear();
    rows.shrink_to_fit();
    tree[node].feature = best_feature;
    tree[node].threshold = data.edges[best_feature][best_bin];
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    tree[node].left = l;
    tree[node].right = r;
    return node;
  }
};

}  // namespace

void GradientBoostingClassifier::fit(const MatrixD& x, const Labels& y, int num_classes) {
  check_training_set(x, y, num_classes);
  if (opt_.max_bins < 2 || opt_.max_bins > 256) {
    throw std::invalid_argument("max_bins must lie in [2, 256]");
  }
  num_classes_ = num_classes;
  num_features_ = static_cast<int>(x.cols());
  const int n = static_cast<int>(x.rows());
  const int k = num_classes;
  trees_.clear();
  importances_ = VectorD::Zero(num_features_);

  VectorD prior = VectorD::Zero(k);
  for (int label : y) prior[label] += 1.0 / n;
  init_ = prior.unaryExpr([](double p) { return std::log(std::max(p, 1e-12)); });
  if (k == 1) return;

  const BinnedFeatures binned = bin_features(x, opt_.max_bins);
  MatrixD raw = init_.transpose().replicate(n, 1);
  VectorD residual(n), hessian(n);
  int trees_with_splits = 0;
  for (int round = 0; round < opt_.num_rounds; ++round) {
    MatrixD p = raw;
    softmax_rows(p);
    for (int c = 0; c < k; ++c) {
      for (int i = 0; i < n; ++i) {
        residual[i] = (y[i] == c ? 1.0 : 0.0) - p(i, c);
        hessian[i] = p(i, c) * (1.0 - p(i, c));
      }
      TreeBuilder builder{binned, residual, hessian, opt_, (k - 1.0) / k, {},
                          VectorD::Zero(num_features_), std::vector<int>(n)};
      std::vector<int> rows(n);
      std::iota(rows.begin(), rows.end(), 0);
      builder.build(rows, 0);
      for (int i = 0; i < n; ++i) {
        raw(i, c) += opt_.learning_rate * builder.tree[builder.leaf_of[i]].value;
      }
      if (builder.gains.sum() > 0) {
        importances_ += builder.gains;
        ++trees_with_splits;
      }
      trees_.push_back(std::move(builder.tree));
    }
  }
  if (trees_with_splits > 0) importances_ /= importances_.sum();
}

double GradientBoostingClassifier::predict_tree(const Tree& tree, const double* row) const {
  int node = 0;
  while (tree[node].feature >= 0) {
    node = row[tree[node].feature] < tree[node].threshold ? tree[node].left : tree[node].right;
  }
  return tree[node].value;
}

MatrixD GradientBoostingClassifier::predict_proba(const MatrixD& x) const {
  if (num_classes_ == 0) throw std::logic_error("classifier is not fitted");
  if (x.cols() != num_features_) throw std::invalid_argument("feature count mismatch");
  MatrixD raw = init_.transpose().replicate(x.rows(), 1);
  const int k = num_classes_;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* row = x.row(i).data();
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      raw(i, static_cast<int>(t % k)) += opt_.learning_rate * predict_tree(trees_[t], row);
    }
  }
  softmax_rows(raw);
  return raw;
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

// Mean negative log-likelihood plus |W|^2 / (2 C n) over the weights.
class MultinomialObjective : public ceres::FirstOrderFunction {
 public:
  MultinomialObjective(const MatrixD& x, const Labels& y, int k, double c)
      : x_(x), y_(y), k_(k), penalty_(1.0 / (c * x.rows())) {}

  int NumParameters() const override { return static_cast<int>((x_.cols() + 1) * k_); }

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const Eigen::Index p = x_.cols(), n = x_.rows();
    Eigen::Map<const MatrixD> coef(parameters, p + 1, k_);
    MatrixD logits = x_ * coef.topRows(p);
    logits.rowwise() += coef.row(p);
    double nll = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - m).exp();
      const double z = logits.row(i).sum();
      logits.row(i) /= z;
      nll -= std::log(std::max(logits(i, y_[i]), 1e-300));
    }
    *cost = nll / n + 0.5 * penalty_ * coef.topRows(p).squaredNorm();
    if (gradient) {
      for (Eigen::Index i = 0; i < n; ++i) logits(i, y_[i]) -= 1.0;
      Eigen::Map<MatrixD> grad(gradient, p + 1, k_);
      grad.topRows(p) = x_.transpose() * logits / static_cast<double>(n) +
                        penalty_ * coef.topRows(p);
      grad.row(p) = logits.colwise().sum() / static_cast<double>(n);
    }
    return true;
  }

 private:
  const MatrixD& x_;
  const Labels& y_;
  int k_;
  double penalty_;
};

}  // namespace

void LogisticRegression::fit(const MatrixD& x, const Labels& y, int num_classes) {
  check_training_set(x, y, num_classes);
  if (!(opt_.c > 0)) throw std::invalid_argument("C must be positive");
  num_classes_ = num_classes;
  if (coef_.rows() != x.cols() + 1 || coef_.cols() != num_classes) {
    coef_ = MatrixD::Zero(x.cols() + 1, num_classes);
  }
  if (num_classes == 1) return;
  ceres::GradientProblem problem(new MultinomialObjective(x, y, num_classes, opt_.c));
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = opt_.max_iterations;
  options.gradient_tolerance = opt_.gradient_tolerance * 1e-2;
  options.function_tolerance = 1e-10;
  options.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, coef_.data(), &summary);
}

MatrixD LogisticRegression::predict_proba(const MatrixD& x) const {
  if (num_classes_ == 0) throw std::logic_error("classifier is not fitted");
  if (x.cols() + 1 != coef_.rows()) throw std::invalid_argument("feature count mismatch");
  MatrixD logits = x * coef_.topRows(x.cols());
  logits.rowwise() += coef_.row(x.cols());
  softmax_rows(logits);
  return logits;
}

std::vector<double> LogisticRegressionCV::cs() const {
  std::vector<double> out(opt_.num_cs);
  for (int i = 0; i < opt_.num_cs; ++i) {
    out[i] = opt_.num_cs == 1 ? 1.0 : std::pow(10.0, -4.0 + 8.0 * i / (opt_.num_cs - 1));
  }
  return out;
}

void LogisticRegressionCV::fit(const MatrixD& x, const Labels& y, int num_classes) {
  check_training_set(x, y, num_classes);
  const std::vector<double> grid = cs();
  const int n = static_cast<int>(x.rows());
  const int folds = std::min(opt_.folds, n);
  std::vector<double> score(grid.size(), 0.0);
  std::vector<MatrixD> fold_mean(grid.size());
  if (folds >= 2 && grid.size() > 1) {
    for (int f = 0; f < folds; ++f) {
      const int lo = static_cast<int>(static_cast<long>(f) * n / folds);
      const int hi = static_cast<int>(static_cast<long>(f + 1) * n / folds);
      std::vector<int> train, test;
      for (int i = 0; i < n; ++i) (i >= lo && i < hi ? test : train).push_back(i);
      const MatrixD xtr = take_rows(x, train), xte = take_rows(x, test);
      const Labels ytr = take(y, train), yte = take(y, test);
      MatrixD warm;
      for (std::size_t c = 0; c < grid.size(); ++c) {
        LogisticRegression lr({grid[c], opt_.max_iterations});
        if (warm.size() > 0) lr.warm_start(warm);
        lr.fit(xtr, ytr, num_classes);
        warm = lr.coefficients();
        score[c] += accuracy(yte, lr.predict(xte));
        if (fold_mean[c].size() == 0) fold_mean[c] = MatrixD::Zero(warm.rows(), warm.cols());
        fold_mean[c] += warm / folds;
      }
    }
  }
  const auto best = std::max_element(score.begin(), score.end()) - score.begin();
  chosen_c_ = grid[best];
  model_ = LogisticRegression({chosen_c_, opt_.max_iterations});
  // The refit starts from the fold average at the chosen C.
  if (fold_mean[best].size() > 0) model_.warm_start(fold_mean[best]);
  model_.fit(x, y, num_classes);
}

MatrixD LogisticRegressionCV::predict_proba(const MatrixD& x) const {
  return model_.predict_proba(x);
}

// ---------------------------------------------------------------------------

void NearestMeanThresholdClassifier::fit(const VectorD& x, const Labels& y, int num_classes) {
  if (x.size() == 0 || static_cast<std::size_t>(x.size()) != y.size()) {
    throw std::invalid_argument("training set is empty or mismatched");
  }
  std::vector<double> sum(num_classes, 0.0);
  std::vector<long> count(num_classes, 0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (y[i] < 0 || y[i] >= num_classes) throw std::invalid_argument("label out of range");
    sum[y[i]] += x[i];
    ++count[y[i]];
  }
  std::vector<std::pair<double, int>> means;
  for (int c = 0; c < num_classes; ++c) {
    if (count[c] > 0) means.emplace_back(sum[c] / count[c], c);
  }
  std::stable_sort(means.begin(), means.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  cuts_.clear();
  classes_.clear();
  for (std::size_t j = 0; j < means.size(); ++j) {
    classes_.push_back(means[j].second);
    if (j > 0) cuts_.push_back(0.5 * (means[j - 1].first + means[j].first));
  }
}

Labels NearestMeanThresholdClassifier::predict(const VectorD& x) const {
  if (classes_.empty()) throw std::logic_error("classifier is not fitted");
  Labels out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[i] = classes_[std::upper_bound(cuts_.begin(), cuts_.end(), x[i]) - cuts_.begin()];
  }
  return out;
}

std::string to_string(ClassifierKind k) {
  return k == ClassifierKind::kLogisticCv ? "logistic_cv" : "gbt";
}

ClassifierKind parse_classifier(const std::string& text) {
  if (text == "logistic_cv" || text == "lr") return ClassifierKind::kLogisticCv;
  if (text == "gbt") return ClassifierKind::kGradientBoosting;
  throw ConfigError("unknown classifier '" + text + "'");
}

std::unique_ptr<Classifier> make_classifier(ClassifierKind kind) {
  if (kind == ClassifierKind::kLogisticCv) return std::make_unique<LogisticRegressionCV>();
  return std::make_unique<GradientBoostingClassifier>();
}

}  // namespace weakdis
