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
#include <memory>

#include "gtest/gtest.h"

namespace weakdis {
namespace {

const FactorSpace& sprites() {
  static const FactorSpace space = toy_sprites_space();
  return space;
}

// Code j is factor j scaled to [0, 1]; `extra` noise dimensions follow.
Representer oracle(const FactorSpace& space, int extra, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(make_rng(seed));
  return [&space, extra, rng](std::span<const FactorVector> factors) {
    std::normal_distribution<double> noise;
    const int d = space.num_factors();
    MatrixD codes(static_cast<Eigen::Index>(factors.size()), d + extra);
    for (std::size_t r = 0; r < factors.size(); ++r) {
      for (int i = 0; i < d + extra; ++i) {
        codes(r, i) = i < d ? factors[r][i] / double(space.cardinalities()[i] - 1)
                            : noise(*rng);
      }
    }
    return codes;
  };
}

RepresentationTable table_of(const Representer& r, int n, std::uint64_t seed,
                             const FactorSpace& space = sprites()) {
  Rng rng = make_rng(seed);
  return compute_representation(r, space, n, rng);
}

double max_prior(const IntMatrix& factors, int col) {
  std::vector<int> counts(factors.col(col).maxCoeff() + 1, 0);
  for (Eigen::Index i = 0; i < factors.rows(); ++i) ++counts[factors(i, col)];
  return *std::max_element(counts.begin(), counts.end()) / double(factors.rows());
}

TEST(DownstreamAccuracy, OracleAtFullSizeIsNearPerfect) {
  const auto table = table_of(oracle(sprites(), 2, 1), 15000, 2);
  DownstreamOptions o;
  o.train_sizes = {10000};
  const EvalOutcome out = downstream_accuracy(table, o);
  ASSERT_EQ(out.accuracies.size(), 2u * sprites().num_factors());
  for (const auto& c : out.accuracies) {
    EXPECT_GE(c.accuracy, 0.99) << "factor " << c.factor << " " << to_string(c.classifier);
  }
}

TEST(DownstreamAccuracy, ConstantRepresentationMatchesPrior) {
  Representer constant = [](std::span<const FactorVector> f) {
    return MatrixD(MatrixD::Constant(static_cast<Eigen::Index>(f.size()), 3, 0.5));
  };
  const auto table = table_of(constant, 2000, 3);
  DownstreamOptions o;
  o.train_sizes = {1000};
  o.test_size = 1000;
  const EvalOutcome out = downstream_accuracy(table, o);
  for (const auto& c : out.accuracies) {
    const IntMatrix test = table.factors.bottomRows(1000);
    EXPECT_LE(c.accuracy, max_prior(test, c.factor) + 1e-12);
    EXPECT_GE(c.accuracy, 1.0 / sprites().cardinalities()[c.factor] - 0.06);
  }
}

TEST(DownstreamAccuracy, MedianAccuracyGrowsWithTrainSize) {
  DownstreamOptions o;
  o.train_sizes = {10, 100, 1000};
  o.test_size = 1000;
  // accuracy[classifier][size] per seed, averaged over factors
  std::vector<std::vector<std::vector<double>>> acc(2, std::vector<std::vector<double>>(3));
  for (int seed = 0; seed < 5; ++seed) {
    const auto table = table_of(oracle(sprites(), 2, 10 + seed), 2000, 20 + seed);
    const EvalOutcome out = downstream_accuracy(table, o);
    for (int k = 0; k < 2; ++k) {
      for (int s = 0; s < 3; ++s) {
        acc[k][s].push_back(out.aggregates.at("mean_accuracy/" + to_string(o.classifiers[k]) +
                                              "/" + std::to_string(o.train_sizes[s])));
      }
    }
  }
  for (int k = 0; k < 2; ++k) {
    std::vector<double> medians;
    for (auto& v : acc[k]) {
      std::sort(v.begin(), v.end());
      medians.push_back(v[2]);
    }
    EXPECT_LE(medians[0], medians[1]);
    EXPECT_LE(medians[1], medians[2]);
  }
}

TEST(DownstreamAccuracy, RejectsSmallTable) {
  const auto table = table_of(oracle(sprites(), 0, 1), 500, 2);
  DownstreamOptions o;
  o.train_sizes = {100};
  o.test_size = 450;
  EXPECT_THROW(downstream_accuracy(table, o), std::invalid_argument);
  o.train_sizes = {0};
  o.test_size = 100;
  EXPECT_THROW(downstream_accuracy(table, o), std::invalid_argument);
}

TEST(Intervention, SpecsAreValidAndTestValuesExcludeTrainValue) {
  Rng rng = make_rng(4);
  for (int i = 0; i < 200; ++i) {
    const int target = i % sprites().num_factors();
    const InterventionSpec spec = sample_intervention(sprites(), target, rng);
    EXPECT_NE(spec.intervened_factor, spec.target_factor);
    EXPECT_EQ(spec.test_values.size(),
              static_cast<std::size_t>(sprites().cardinalities()[spec.intervened_factor] - 1));
    const auto train = sample_intervened(sprites(), spec, true, 50, rng);
    const auto test = sample_intervened(sprites(), spec, false, 50, rng);
    for (const auto& v : train) EXPECT_EQ(v[spec.intervened_factor], spec.train_value);
    for (const auto& v : test) EXPECT_NE(v[spec.intervened_factor], spec.train_value);
  }
  InterventionSpec bad;
  bad.target_factor = 1;
  bad.intervened_factor = 1;
  bad.test_values = {1};
  EXPECT_THROW(bad.validate(sprites()), std::invalid_argument);
  bad.intervened_factor = 0;
  bad.test_values = {0};
  EXPECT_THROW(bad.validate(sprites()), std::invalid_argument);
}

ShiftOptions small_shift() {
  ShiftOptions o;
  o.train_size = 1000;
  o.test_size = 500;
  o.repetitions = 3;
  return o;
}

TEST(CovariateShift, OracleGeneralizesStrongly) {
  Rng rng = make_rng(5);
  const EvalOutcome out = covariate_shift_eval(oracle(sprites(), 0, 6), sprites(), small_shift(), rng);
  EXPECT_EQ(out.shifts.size(), 3u * sprites().num_factors());
  EXPECT_GE(out.aggregates.at("mean_strong"), 0.99);
  EXPECT_GE(out.aggregates.at("mean_weak"), 0.99);
  EXPECT_LT(out.aggregates.at("mean_prior"), 0.5);
}

TEST(CovariateShift, EntangledCodeFailsUnderShift) {
  const FactorSpace space = build_factor_space({"a", "b"}, {6, 6});
  Representer sum = [](std::span<const FactorVector> f) {
    MatrixD codes(static_cast<Eigen::Index>(f.size()), 1);
    for (std::size_t r = 0; r < f.size(); ++r) codes(r, 0) = f[r][0] + f[r][1];
    return codes;
  };
  Rng rng = make_rng(7);
  const EvalOutcome out = covariate_shift_eval(sum, space, small_shift(), rng);
  EXPECT_GE(out.aggregates.at("mean_weak"), 0.99);
  EXPECT_LT(out.aggregates.at("mean_strong"), 0.4);
  // 36 images per intervention region is below twice the training size.
  EXPECT_EQ(out.aggregates.at("small_region_interventions"), 6.0);
  EXPECT_FALSE(out.warnings.empty());
}

TEST(CovariateShift, PriorBaselineIsMajorityFrequency) {
  const FactorSpace space = build_factor_space({"a", "b"}, {2, 3});
  Representer constant = [](std::span<const FactorVector> f) {
    return MatrixD(MatrixD::Zero(static_cast<Eigen::Index>(f.size()), 2));
  };
  Rng rng = make_rng(8);
  const EvalOutcome out = covariate_shift_eval(constant, space, small_shift(), rng);
  for (const auto& c : out.shifts) {
    EXPECT_NEAR(c.strong, c.prior, 1e-12);
    EXPECT_GT(c.prior, 0.25);
  }
}

TEST(Unfairness, ClosedFormCases) {
  Labels s, y;
  for (int i = 0; i < 1000; ++i) {
    s.push_back(i % 2);
    y.push_back(i % 2);
  }
  EXPECT_NEAR(demographic_parity_unfairness(y, s), 0.5, 1e-12);
  Labels flat(1000, 1);
  EXPECT_NEAR(demographic_parity_unfairness(flat, s), 0.0, 1e-12);
  EXPECT_THROW(demographic_parity_unfairness(y, Labels(1000, 0)), std::invalid_argument);
  EXPECT_THROW(demographic_parity_unfairness(y, Labels(10, 0)), std::invalid_argument);
}

TEST(Unfairness, MatchesEnumerationOnThreeValues) {
  // Joint counts over (s, y_hat) for a 3 x 3 table.
  const int counts[3][3] = {{5, 1, 2}, {0, 4, 4}, {3, 3, 0}};
  Labels s, y;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      for (int c = 0; c < counts[a][b]; ++c) {
        s.push_back(a);
        y.push_back(b);
      }
    }
  }
  const double n = s.size();
  double expected = 0;
  for (int a = 0; a < 3; ++a) {
    double ns = 0;
    for (int b = 0; b < 3; ++b) ns += counts[a][b];
    double tv = 0;
    for (int b = 0; b < 3; ++b) {
      double py = 0;
      for (int c = 0; c < 3; ++c) py += counts[c][b] / n;
      tv += std::abs(counts[a][b] / ns - py);
    }
    expected += tv / 2 / 3;
  }
  EXPECT_NEAR(demographic_parity_unfairness(y, s), expected, 1e-12);
}

TEST(Unfairness, IndependentFeaturesGiveNearZero) {
  // The target is read exactly; the sensitive factor never enters the codes.
  const FactorSpace space = build_factor_space({"t", "s"}, {4, 2});
  Representer target_only = [](std::span<const FactorVector> f) {
    MatrixD codes(static_cast<Eigen::Index>(f.size()), 1);
    for (std::size_t r = 0; r < f.size(); ++r) codes(r, 0) = f[r][0];
    return codes;
  };
  const auto table = table_of(target_only, 10000, 9, space);
  FairnessOptions o;
  o.train_size = 5000;
  o.test_size = 5000;
  EXPECT_LT(unfairness(table, 0, 1, o), 0.02);
  EXPECT_THROW(unfairness(table, 0, 0, o), std::invalid_argument);
}

TEST(Unfairness, MatrixCoversOrderedPairs) {
  const FactorSpace space = build_factor_space({"t", "s", "u"}, {2, 2, 3});
  const auto table = table_of(oracle(space, 1, 10), 3000, 10, space);
  FairnessOptions o;
  o.train_size = 1500;
  o.test_size = 1500;
  const EvalOutcome m = unfairness_matrix(table, o);
  ASSERT_EQ(m.unfairness.size(), 6u);
  for (const auto& c : m.unfairness) {
    EXPECT_NE(c.target, c.sensitive);
    EXPECT_GE(c.unfairness, 0.0);
    EXPECT_NEAR(c.unfairness, unfairness(table, c.target, c.sensitive, o), 1e-12);
  }
  EXPECT_THROW(unfairness(table, 0, 3, o), std::invalid_argument);
}

TEST(Unfairness, OwnCodesAreIndependentOfOtherFactors) {
  const FactorSpace space = build_factor_space({"t", "s", "n"}, {2, 2, 3});
  Representer codes = [](std::span<const FactorVector> f) {
    MatrixD c(static_cast<Eigen::Index>(f.size()), 2);
    for (std::size_t r = 0; r < f.size(); ++r) {
      c(r, 0) = f[r][0];
      c(r, 1) = f[r][2];
    }
    return c;
  };
  const auto table = table_of(codes, 4000, 11, space);
  FairnessOptions o;
  o.train_size = 2000;
  o.test_size = 2000;
  // Predicting t from its own code is independent of s.
  EXPECT_LT(unfairness(table, 0, 1, o), 0.03);
  // Predicting n from its code is independent of t.
  EXPECT_LT(unfairness(table, 2, 0, o), 0.03);
}

TEST(Spearman, DocumentedExamples) {
  const std::vector<double> xs = {1, 2, 3, 4, 5};
  EXPECT_NEAR(*spearman_rank_correlation(xs, xs), 1.0, 1e-12);
  EXPECT_NEAR(*spearman_rank_correlation(xs, {-1, -2, -3, -4, -5}), -1.0, 1e-12);
  EXPECT_NEAR(*spearman_rank_correlation(xs, {1, 3, 2, 5, 4}), 0.8, 1e-12);
  EXPECT_FALSE(spearman_rank_correlation(xs, {2, 2, 2, 2, 2}).has_value());
  EXPECT_THROW(spearman_rank_correlation({1, 2}, {1, 2}), std::invalid_argument);
  EXPECT_THROW(spearman_rank_correlation({1, 2, 3}, {1, 2}), std::invalid_argument);
}

TEST(Spearman, AverageRanksForTies) {
  EXPECT_EQ(average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  // Pearson on ranks [1, 2.5, 2.5, 4] and [1, 2, 3, 4].
  EXPECT_NEAR(*spearman_rank_correlation({1, 2, 2, 3}, {1, 2, 3, 4}), 0.9486832980505138, 1e-12);
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  Rng rng = make_rng(12);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(30), ys(30), fx(30), gy(30);
    for (int i = 0; i < 30; ++i) {
      xs[i] = n(rng);
      ys[i] = xs[i] + n(rng);
      fx[i] = std::exp(3 * xs[i]);
      gy[i] = ys[i] * ys[i] * ys[i] - 7;
    }
    const double r = *spearman_rank_correlation(xs, ys);
    EXPECT_NEAR(*spearman_rank_correlation(fx, gy), r, 1e-12);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
  }
}

}  // namespace
}  // namespace weakdis
