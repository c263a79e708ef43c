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

#include "weakdis/downstream.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace weakdis {

namespace {

Labels column_labels(const IntMatrix& factors, Eigen::Index col, Eigen::Index lo,
                     Eigen::Index hi) {
  Labels y;
  y.reserve(hi - lo);
  for (Eigen::Index i = lo; i < hi; ++i) y.push_back(factors(i, col));
  return y;
}

Labels factor_column(const std::vector<FactorVector>& f, int col) {
  Labels y(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) y[i] = f[i][col];
  return y;
}

double majority_accuracy(const Labels& train, const Labels& test, int classes) {
  std::vector<long> counts(classes, 0);
  for (int y : train) ++counts[y];
  const int major = static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                                     counts.begin());
  return accuracy(test, Labels(test.size(), major));
}

}  // namespace

EvalOutcome downstream_accuracy(const RepresentationTable& table,
                                const DownstreamOptions& options) {
  if (options.train_sizes.empty() || options.test_size < 1) {
    throw std::invalid_argument("downstream needs train sizes and a positive test size");
  }
  const int largest = *std::max_element(options.train_sizes.begin(), options.train_sizes.end());
  const int n = table.size();
  if (*std::min_element(options.train_sizes.begin(), options.train_sizes.end()) < 1 ||
      largest + options.test_size > n) {
    throw std::invalid_argument("representation table has " + std::to_string(n) +
                                " rows; downstream needs " +
                                std::to_string(largest + options.test_size));
  }
  EvalOutcome out;
  out.task = "downstream";
  const MatrixD test = table.codes.bottomRows(options.test_size);
  for (Eigen::Index j = 0; j < table.factors.cols(); ++j) {
    const int classes = table.factors.col(j).maxCoeff() + 1;
    const Labels yte = column_labels(table.factors, j, n - options.test_size, n);
    for (int size : options.train_sizes) {
      const MatrixD train = table.codes.topRows(size);
      const Labels ytr = column_labels(table.factors, j, 0, size);
      for (ClassifierKind kind : options.classifiers) {
        auto clf = make_classifier(kind);
        clf->fit(train, ytr, classes);
        const double acc = accuracy(yte, clf->predict(test));
        out.accuracies.push_back({static_cast<int>(j), size, kind, acc});
      }
    }
  }
  for (ClassifierKind kind : options.classifiers) {
    for (int size : options.train_sizes) {
      double sum = 0;
      int count = 0;
      for (const auto& c : out.accuracies) {
        if (c.classifier == kind && c.train_size == size) {
          sum += c.accuracy;
          ++count;
        }
      }
      out.aggregates["mean_accuracy/" + to_string(kind) + "/" + std::to_string(size)] =
          sum / count;
    }
  }
  return out;
}

void InterventionSpec::validate(const FactorSpace& space) const {
  const int d = space.num_factors();
  if (target_factor < 0 || target_factor >= d || intervened_factor < 0 ||
      intervened_factor >= d) {
    throw std::invalid_argument("intervention refers to an unknown factor");
  }
  if (target_factor == intervened_factor) {
    throw std::invalid_argument("intervened factor must differ from the target");
  }
  const int card = space.cardinalities()[intervened_factor];
  if (train_value < 0 || train_value >= card) {
    throw std::invalid_argument("training value out of range");
  }
  if (test_values.empty()) throw std::invalid_argument("no test values");
  for (int v : test_values) {
    if (v < 0 || v >= card || v == train_value) {
      throw std::invalid_argument("test values must be valid and exclude the training value");
    }
  }
}

InterventionSpec sample_intervention(const FactorSpace& space, int target, Rng& rng) {
  const int d = space.num_factors();
  if (d < 2) throw std::invalid_argument("covariate shift needs at least two factors");
  std::uniform_int_distribution<int> other(0, d - 2);
  InterventionSpec spec;
  spec.target_factor = target;
  spec.intervened_factor = other(rng);
  if (spec.intervened_factor >= target) ++spec.intervened_factor;
  const int card = space.cardinalities()[spec.intervened_factor];
  spec.train_value = std::uniform_int_distribution<int>(0, card - 1)(rng);
  for (int v = 0; v < card; ++v) {
    if (v != spec.train_value) spec.test_values.push_back(v);
  }
  spec.validate(space);
  return spec;
}

std::vector<FactorVector> sample_intervened(const FactorSpace& space,
                                            const InterventionSpec& spec, bool training,
                                            int n, Rng& rng) {
  spec.validate(space);
  std::vector<FactorVector> f = sample_factors(space, n, rng);
  std::uniform_int_distribution<std::size_t> pick(0, spec.test_values.size() - 1);
  for (auto& v : f) {
    v[spec.intervened_factor] = training ? spec.train_value : spec.test_values[pick(rng)];
  }
  return f;
}

EvalOutcome covariate_shift_eval(const Representer& representer, const FactorSpace& space,
                                 const ShiftOptions& options, Rng& rng) {
  if (options.train_size < 1 || options.test_size < 1 || options.repetitions < 1) {
    throw std::invalid_argument("shift sizes and repetitions must be positive");
  }
  note_label_access("covariate_shift_eval");
  EvalOutcome out;
  out.task = "covariate_shift";
  const int d = space.num_factors();
  for (int c : space.cardinalities()) {
    if (c < 2) throw std::invalid_argument("covariate shift needs every factor to vary");
  }
  int small_regions = 0;
  for (int target = 0; target < d; ++target) {
    const int classes = space.cardinalities()[target];
    double strong = 0, weak = 0, prior = 0;
    for (int rep = 0; rep < options.repetitions; ++rep) {
      const InterventionSpec spec = sample_intervention(space, target, rng);
      const std::int64_t region =
          space.size() / space.cardinalities()[spec.intervened_factor];
      if (region < 2 * static_cast<std::int64_t>(options.train_size)) ++small_regions;
      const auto train_f = sample_intervened(space, spec, true, options.train_size, rng);
      const auto iid_f = sample_intervened(space, spec, true, options.test_size, rng);
      const auto shift_f = sample_intervened(space, spec, false, options.test_size, rng);
      for (const auto& v : shift_f) {
        if (v[spec.intervened_factor] == spec.train_value) {
          throw std::logic_error("shifted test set contains the training value");
        }
      }
      const Labels ytr = factor_column(train_f, target);
      const Labels yiid = factor_column(iid_f, target);
      const Labels yshift = factor_column(shift_f, target);
      GradientBoostingClassifier gbt;
      gbt.fit(representer(train_f), ytr, classes);
      ShiftCell cell{target, spec.intervened_factor, spec.train_value,
                     accuracy(yshift, gbt.predict(representer(shift_f))),
                     accuracy(yiid, gbt.predict(representer(iid_f))),
                     majority_accuracy(ytr, yshift, classes)};
      strong += cell.strong;
      weak += cell.weak;
      prior += cell.prior;
      out.shifts.push_back(cell);
    }
    const std::string suffix = "/factor" + std::to_string(target);
    out.aggregates["strong" + suffix] = strong / options.repetitions;
    out.aggregates["weak" + suffix] = weak / options.repetitions;
    out.aggregates["prior" + suffix] = prior / options.repetitions;
  }
  for (const char* key : {"strong", "weak", "prior"}) {
    double sum = 0;
    for (int t = 0; t < d; ++t) sum += out.aggregates[std::string(key) + "/factor" + std::to_string(t)];
    out.aggregates[std::string("mean_") + key] = sum / d;
  }
  out.aggregates["small_region_interventions"] = small_regions;
  if (small_regions > 0) {
    out.warnings.push_back("shift: " + std::to_string(small_regions) +
                           " interventions leave fewer than twice the training size "
                           "distinct images; training sets were sampled with replacement");
  }
  return out;
}

double demographic_parity_unfairness(const Labels& predictions, const Labels& sensitive) {
  if (predictions.empty() || predictions.size() != sensitive.size()) {
    throw std::invalid_argument("unfairness needs equal, non-empty inputs");
  }
  const int ny = *std::max_element(predictions.begin(), predictions.end()) + 1;
  const int ns = *std::max_element(sensitive.begin(), sensitive.end()) + 1;
  std::vector<double> marginal(ny, 0.0);
  std::vector<std::vector<double>> conditional(ns, std::vector<double>(ny, 0.0));
  std::vector<long> count(ns, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] < 0 || sensitive[i] < 0) throw std::invalid_argument("negative label");
    marginal[predictions[i]] += 1.0 / predictions.size();
    conditional[sensitive[i]][predictions[i]] += 1.0;
    ++count[sensitive[i]];
  }
  int present = 0;
  double total = 0;
  for (int s = 0; s < ns; ++s) {
    if (count[s] == 0) continue;
    ++present;
    double tv = 0;
    for (int y = 0; y < ny; ++y) tv += std::abs(conditional[s][y] / count[s] - marginal[y]);
    total += 0.5 * tv;
  }
  if (present < 2) throw std::invalid_argument("sensitive factor is constant");
  return total / present;
}

namespace {

void check_fairness_table(const RepresentationTable& table, const FairnessOptions& options) {
  if (options.train_size < 1 || options.test_size < 1 ||
      options.train_size + options.test_size > table.size()) {
    throw std::invalid_argument("representation table too small for the fairness split");
  }
}

Labels fairness_predictions(const RepresentationTable& table, int target,
                            const FairnessOptions& options) {
  GradientBoostingClassifier gbt;
  gbt.fit(table.codes.topRows(options.train_size),
          column_labels(table.factors, target, 0, options.train_size),
          table.factors.col(target).maxCoeff() + 1);
  return gbt.predict(table.codes.bottomRows(options.test_size));
}

}  // namespace

double unfairness(const RepresentationTable& table, int target, int sensitive,
                  const FairnessOptions& options) {
  check_fairness_table(table, options);
  const int d = static_cast<int>(table.factors.cols());
  if (target < 0 || target >= d || sensitive < 0 || sensitive >= d) {
    throw std::invalid_argument("unknown factor");
  }
  if (target == sensitive) throw std::invalid_argument("target and sensitive factor coincide");
  const int n = table.size();
  return demographic_parity_unfairness(
      fairness_predictions(table, target, options),
      column_labels(table.factors, sensitive, n - options.test_size, n));
}

EvalOutcome unfairness_matrix(const RepresentationTable& table,
                              const FairnessOptions& options) {
  check_fairness_table(table, options);
  EvalOutcome out;
  out.task = "fairness";
  const int d = static_cast<int>(table.factors.cols());
  const int n = table.size();
  double sum = 0;
  for (int t = 0; t < d; ++t) {
    const Labels pred = fairness_predictions(table, t, options);
    for (int s = 0; s < d; ++s) {
      if (s == t) continue;
      const double u = demographic_parity_unfairness(
          pred, column_labels(table.factors, s, n - options.test_size, n));
      out.unfairness.push_back({t, s, u});
      sum += u;
    }
  }
  out.aggregates["mean_unfairness"] = out.unfairness.empty() ? 0.0 : sum / out.unfairness.size();
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<int> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = 0.5 * (i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman_rank_correlation(const std::vector<double>& xs,
                                                const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("inputs differ in length");
  if (xs.size() < 3) throw std::invalid_argument("Spearman needs at least 3 points");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw std::invalid_argument("Spearman inputs must be finite");
    }
  }
  const std::vector<double> rx = average_ranks(xs), ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace weakdis
