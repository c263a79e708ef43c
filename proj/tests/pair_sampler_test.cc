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

#include "weakdis/pair_sampler.h"

#include <map>
#include <set>

#include "gtest/gtest.h"

namespace weakdis {
namespace {

const GroundTruthDataset& sprites() {
  static const GroundTruthDataset data = make_toy_sprites();
  return data;
}

TEST(SharingSet, FixedKExcludesEachIndexUniformly) {
  Rng rng = make_rng(11);
  const int draws = 10000;
  std::vector<int> excluded(5, 0);
  for (int t = 0; t < draws; ++t) {
    const auto s = sample_sharing_set(5, SharingMode::fixed_k(1), rng);
    ASSERT_EQ(s.size(), 4u);
    for (int i = 0; i < 5; ++i) excluded[i] += !std::binary_search(s.begin(), s.end(), i);
  }
  const double se = std::sqrt(draws * 0.2 * 0.8);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(excluded[i], draws * 0.2, 3 * se);
}

TEST(SharingSet, TwoFactorsSplitEvenly) {
  Rng rng = make_rng(12);
  std::map<std::vector<int>, int> counts;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) ++counts[sample_sharing_set(2, SharingMode::fixed_k(1), rng)];
  ASSERT_EQ(counts.size(), 2u);
  const double se = std::sqrt(draws * 0.25);
  EXPECT_NEAR(counts[{0}], draws / 2.0, 3 * se);
  EXPECT_NEAR(counts[{1}], draws / 2.0, 3 * se);
}

TEST(SharingSet, RandomKCoversFullRange) {
  Rng rng = make_rng(13);
  std::set<int> ks;
  for (int t = 0; t < 2000; ++t) {
    int k = 0;
    const auto s = sample_sharing_set(5, SharingMode::random_k(), rng, &k);
    EXPECT_EQ(static_cast<int>(s.size()), 5 - k);
    ks.insert(k);
  }
  EXPECT_EQ(ks, (std::set<int>{1, 2, 3, 4}));
}

TEST(SharingSet, RejectsInvalidArguments) {
  Rng rng = make_rng(1);
  EXPECT_THROW(sample_sharing_set(1, SharingMode::random_k(), rng), std::invalid_argument);
  EXPECT_THROW(sample_sharing_set(5, SharingMode::fixed_k(5), rng), std::invalid_argument);
  EXPECT_THROW(sample_sharing_set(5, SharingMode::fixed_k(0), rng), std::invalid_argument);
  EXPECT_THROW(SharingMode::parse("zero"), std::invalid_argument);
  EXPECT_EQ(SharingMode::parse("rnd"), SharingMode::random_k());
  EXPECT_EQ(SharingMode::parse("3"), SharingMode::fixed_k(3));
}

int hamming(const FactorVector& a, const FactorVector& b) {
  int h = 0;
  for (std::size_t i = 0; i < a.size(); ++i) h += a[i] != b[i];
  return h;
}

TEST(SamplePair, SparseChangesCollideAtAnalyticRate) {
  Rng rng = make_rng(21);
  const auto& cards = sprites().space().cardinalities();
  double expected_identical = 0;
  for (int c : cards) expected_identical += 1.0 / c / cards.size();

  const int n = 10000;
  int identical = 0;
  for (int t = 0; t < n; ++t) {
    const PairExample pair = sample_pair(sprites(), SharingMode::fixed_k(1), rng);
    const int h = hamming(pair.z1, pair.z2);
    ASSERT_LE(h, 1);
    identical += h == 0;
  }
  const double se = std::sqrt(n * expected_identical * (1 - expected_identical));
  EXPECT_NEAR(identical, n * expected_identical, 3 * se);
}

TEST(SamplePair, DenseChangesKeepExactlyOneSharedFactor) {
  Rng rng = make_rng(22);
  const auto& cards = sprites().space().cardinalities();
  const int d = static_cast<int>(cards.size());
  double expected_equal = 1.0;
  for (int c : cards) expected_equal += (d - 1.0) / d / c;

  const int n = 10000;
  double equal_total = 0;
  for (int t = 0; t < n; ++t) {
    const PairExample pair = sample_pair(sprites(), SharingMode::fixed_k(d - 1), rng);
    ASSERT_EQ(pair.shared_set.size(), 1u);
    EXPECT_EQ(pair.z1[pair.shared_set[0]], pair.z2[pair.shared_set[0]]);
    equal_total += d - hamming(pair.z1, pair.z2);
  }
  EXPECT_NEAR(equal_total / n, expected_equal, 0.02);
}

TEST(SamplePair, SharedCoordinateLawAndImages) {
  Rng rng = make_rng(23);
  for (int t = 0; t < 500; ++t) {
    const PairExample pair = sample_pair(sprites(), SharingMode::random_k(), rng);
    std::set<int> changed(pair.changed_set.begin(), pair.changed_set.end());
    EXPECT_LE(static_cast<int>(changed.size()), pair.k_nominal);
    for (int i = 0; i < 5; ++i) {
      if (!changed.count(i)) EXPECT_EQ(pair.z1[i], pair.z2[i]);
      else EXPECT_NE(pair.z1[i], pair.z2[i]);
    }
    for (int i : pair.shared_set) EXPECT_FALSE(changed.count(i));
    std::vector<float> expected(1024);
    sprites().write_image(pair.z2, expected.data());
    EXPECT_EQ(pair.x2, expected);
  }
}

TEST(SamplePair, DeterministicGivenSeed) {
  Rng a = make_rng(5), b = make_rng(5);
  const PairExample p = sample_pair(sprites(), SharingMode::random_k(), a);
  const PairExample q = sample_pair(sprites(), SharingMode::random_k(), b);
  EXPECT_EQ(p.z1, q.z1);
  EXPECT_EQ(p.z2, q.z2);
  EXPECT_EQ(p.x1, q.x1);
  EXPECT_EQ(p.x2, q.x2);
}

TEST(PairBatch, ShapesAndLearnerContract) {
  Rng rng = make_rng(31);
  const PairBatch batch = make_pair_batch(sprites(), SharingMode::fixed_k(1), 64, rng);
  EXPECT_EQ(batch.size(), 64);
  EXPECT_EQ(batch.x1.rows(), 64);
  EXPECT_EQ(batch.x2.rows(), 64);
  EXPECT_EQ(batch.x1.cols(), 1024);
  EXPECT_FALSE(batch.has_diagnostics());
  EXPECT_THROW(batch.diagnostics(), std::logic_error);
}

TEST(PairBatch, DiagnosticsObeySharedCoordinateLaw) {
  Rng rng = make_rng(32);
  const PairBatch batch =
      make_pair_batch(sprites(), SharingMode::random_k(), 64, rng, true);
  const auto& d = batch.diagnostics();
  ASSERT_EQ(d.z1.rows(), 64);
  ASSERT_EQ(d.changed.rows(), 64);
  for (int b = 0; b < 64; ++b) {
    EXPECT_LE(d.changed.row(b).sum(), d.k_nominal[b]);
    for (int i = 0; i < 5; ++i) {
      EXPECT_EQ(d.changed(b, i) == 0, d.z1(b, i) == d.z2(b, i));
    }
  }
}

TEST(PairBatch, DifferentSeedsDiffer) {
  Rng a = make_rng(1), b = make_rng(2);
  const PairBatch p = make_pair_batch(sprites(), SharingMode::random_k(), 8, a);
  const PairBatch q = make_pair_batch(sprites(), SharingMode::random_k(), 8, b);
  EXPECT_NE(p.x1, q.x1);
}

// Exact P(S ∩ S' = {i}) by enumerating all pairs of sharing sets.
std::vector<double> exact_singleton_overlap(int d, const SharingMode& mode) {
  std::vector<std::pair<unsigned, double>> support;  // bitmask, probability
  const int k_lo = mode.is_random() ? 1 : mode.k();
  const int k_hi = mode.is_random() ? d - 1 : mode.k();
  for (int k = k_lo; k <= k_hi; ++k) {
    std::vector<unsigned> sets;
    for (unsigned m = 0; m < (1u << d); ++m) {
      if (__builtin_popcount(m) == d - k) sets.push_back(m);
    }
    for (unsigned m : sets) {
      support.emplace_back(m, 1.0 / (k_hi - k_lo + 1) / sets.size());
    }
  }
  std::vector<double> p(d, 0.0);
  for (auto [a, pa] : support) {
    for (auto [b, pb] : support) {
      const unsigned both = a & b;
      if (__builtin_popcount(both) == 1) p[__builtin_ctz(both)] += pa * pb;
    }
  }
  return p;
}

TEST(Coverage, MonteCarloMatchesEnumeration) {
  Rng rng = make_rng(41);
  for (const SharingMode mode : {SharingMode::fixed_k(1), SharingMode::fixed_k(2),
                                 SharingMode::fixed_k(3), SharingMode::fixed_k(4),
                                 SharingMode::random_k()}) {
    const auto exact = exact_singleton_overlap(5, mode);
    const auto estimate = estimate_singleton_overlap(5, mode, 10000, rng);
    for (int i = 0; i < 5; ++i) {
      const double se = std::sqrt(std::max(exact[i] * (1 - exact[i]), 1e-12) / 10000);
      EXPECT_NEAR(estimate[i], exact[i], 4 * se + 1e-12) << mode.to_string();
    }
  }
}

TEST(Coverage, ConditionHoldsExactlyWhenSingletonIntersectionsArePossible) {
  // Two (d-k)-subsets of [d] intersect in at least d - 2k elements.
  for (int k = 1; k <= 4; ++k) {
    const auto p = exact_singleton_overlap(5, SharingMode::fixed_k(k));
    for (double v : p) {
      if (5 - 2 * k <= 1) EXPECT_GT(v, 0.0) << "k=" << k;
      else EXPECT_EQ(v, 0.0) << "k=" << k;
    }
  }
  for (double v : exact_singleton_overlap(5, SharingMode::random_k())) EXPECT_GT(v, 0.0);
  for (double v : exact_singleton_overlap(2, SharingMode::fixed_k(1))) EXPECT_DOUBLE_EQ(v, 0.25);
}

}  // namespace
}  // namespace weakdis
