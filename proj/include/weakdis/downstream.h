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

#ifndef WEAKDIS_DOWNSTREAM_H_
#define WEAKDIS_DOWNSTREAM_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "weakdis/classifiers.h"
#include "weakdis/metrics.h"

namespace weakdis {

struct DownstreamCell {
  int factor = 0;
  int train_size = 0;
  ClassifierKind classifier = ClassifierKind::kGradientBoosting;
  double accuracy = 0;
};

struct UnfairnessCell {
  int target = 0;
  int sensitive = 0;
  double unfairness = 0;
};

struct ShiftCell {
  int target = 0;
  int intervened = 0;
  int train_value = 0;
  double strong = 0;  // test on the other values of the intervened factor
  double weak = 0;    // held-out points from the training distribution
  double prior = 0;   // majority class of the training labels
};

struct EvalOutcome {
  std::string task;
  std::vector<DownstreamCell> accuracies;
  std::vector<UnfairnessCell> unfairness;
  std::vector<ShiftCell> shifts;
  std::map<std::string, double> aggregates;
  Warnings warnings;
};

struct DownstreamOptions {
  std::vector<int> train_sizes = {10, 100, 1000, 10000};
  int test_size = 5000;
  std::vector<ClassifierKind> classifiers = {ClassifierKind::kLogisticCv,
                                             ClassifierKind::kGradientBoosting};
};

// Trains on the first `size` rows and tests on the last test_size rows.
// Throws if the table is smaller than max(train_sizes) + test_size.
EvalOutcome downstream_accuracy(const RepresentationTable& table,
                                const DownstreamOptions& options = {});

struct InterventionSpec {
  int target_factor = 0;
  int intervened_factor = 1;
  int train_value = 0;
  std::vector<int> test_values;  // every other value of the intervened factor

  void validate(const FactorSpace& space) const;
};

// Uniform draw: intervened factor != target, uniform training value.
InterventionSpec sample_intervention(const FactorSpace& space, int target, Rng& rng);

// Factor vectors uniform over the admissible region: intervened factor fixed
// to the training value, or drawn from the test values.
std::vector<FactorVector> sample_intervened(const FactorSpace& space,
                                            const InterventionSpec& spec, bool training,
                                            int n, Rng& rng);

struct ShiftOptions {
  int train_size = 10000;
  int test_size = 5000;
  int repetitions = 10;
};

// For every target factor, `repetitions` random interventions; a boosted-tree
// classifier is trained under the intervention and scored on the shifted
// (strong) and unshifted (weak) test sets.
EvalOutcome covariate_shift_eval(const Representer& representer, const FactorSpace& space,
                                 const ShiftOptions& options, Rng& rng);

// Mean over sensitive values s of TV(p(y_hat | s), p(y_hat)).
double demographic_parity_unfairness(const Labels& predictions, const Labels& sensitive);

struct FairnessOptions {
  int train_size = 10000;
  int test_size = 5000;
};

// Boosted-tree predictions of `target` on the test rows, audited against
// `sensitive`. Throws if the two coincide or the sensitive factor is constant
// on the test rows.
double unfairness(const RepresentationTable& table, int target, int sensitive,
                  const FairnessOptions& options = {});

// Every ordered (target, sensitive) pair, one classifier per target.
EvalOutcome unfairness_matrix(const RepresentationTable& table,
                              const FairnessOptions& options = {});

// Average ranks for ties, then Pearson on ranks. Empty when either input is
// constant. Throws for mismatched or too short inputs (fewer than 3).
std::optional<double> spearman_rank_correlation(const std::vector<double>& xs,
                                                const std::vector<double>& ys);
std::vector<double> average_ranks(const std::vector<double>& xs);

}  // namespace weakdis

#endif  // WEAKDIS_DOWNSTREAM_H_
