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

#ifndef WEAKDIS_PAIR_SAMPLER_H_
#define WEAKDIS_PAIR_SAMPLER_H_

#include <vector>

#include "weakdis/common.h"
#include "weakdis/factor_data.h"

namespace weakdis {

// How many factors may change between the two observations of a pair.
class SharingMode {
 public:
  static SharingMode fixed_k(int k) { return SharingMode(false, k); }
  static SharingMode random_k() { return SharingMode(true, 0); }

  bool is_random() const { return random_; }
  int k() const { return k_; }  // 0 for random_k
  std::string to_string() const;
  static SharingMode parse(const std::string& text);  // "1", "rnd"

  bool operator==(const SharingMode&) const = default;

 private:
  SharingMode(bool random, int k) : random_(random), k_(k) {}
  bool random_;
  int k_;
};

// Draws the shared index set S (sorted) of size d - k, uniformly among such
// subsets. For random_k, k is first drawn uniformly from [1, d - 1].
std::vector<int> sample_sharing_set(int d, const SharingMode& mode, Rng& rng,
                                    int* k_drawn = nullptr);

struct PairExample {
  std::vector<float> x1;
  std::vector<float> x2;
  FactorVector z1;
  FactorVector z2;
  std::vector<int> shared_set;   // S as drawn
  std::vector<int> changed_set;  // indices outside S whose value actually changed
  int k_nominal = 0;
};

PairExample sample_pair(const GroundTruthDataset& dataset,
                        const SharingMode& mode, Rng& rng);

// Ground truth that the learner never sees. Reading it counts as a label
// access.
struct PairDiagnostics {
  IntMatrix z1;
  IntMatrix z2;
  IntMatrix changed;  // 1 where the factor changed
  std::vector<int> k_nominal;
};

struct PairBatch {
  MatrixF x1;
  MatrixF x2;

  int size() const { return static_cast<int>(x1.rows()); }
  bool has_diagnostics() const { return has_diagnostics_; }
  const PairDiagnostics& diagnostics() const;

  void set_diagnostics(PairDiagnostics d);

 private:
  PairDiagnostics diagnostics_;
  bool has_diagnostics_ = false;
};

PairBatch make_pair_batch(const GroundTruthDataset& dataset,
                          const SharingMode& mode, int batch_size, Rng& rng,
                          bool with_diagnostics = false);

// Monte Carlo estimate of P(S ∩ S' = {i}) for independent S, S' ~ p(S).
std::vector<double> estimate_singleton_overlap(int d, const SharingMode& mode,
                                               int draws, Rng& rng);

}  // namespace weakdis

#endif  // WEAKDIS_PAIR_SAMPLER_H_
