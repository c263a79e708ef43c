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

#include <algorithm>
#include <numeric>

namespace weakdis {

std::string SharingMode::to_string() const {
  return random_ ? "rnd" : std::to_string(k_);
}

SharingMode SharingMode::parse(const std::string& text) {
  if (text == "rnd" || text == "Rnd" || text == "random") return random_k();
  try {
    std::size_t used = 0;
    const int k = std::stoi(text, &used);
    if (used == text.size() && k >= 1) return fixed_k(k);
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("sharing mode must be 'rnd' or a positive integer, got '" +
                              text + "'");
}

std::vector<int> sample_sharing_set(int d, const SharingMode& mode, Rng& rng,
                                    int* k_drawn) {
  if (d < 2) throw std::invalid_argument("sharing set needs d >= 2");
  int k = mode.k();
  if (mode.is_random()) {
    k = std::uniform_int_distribution<int>(1, d - 1)(rng);
  } else if (k < 1 || k > d - 1) {
    throw std::invalid_argument("fixed k must lie in [1, d - 1]");
  }
  // Partial Fisher-Yates: the first d - k entries form a uniform subset.
  std::vector<int> indices(d);
  std::iota(indices.begin(), indices.end(), 0);
  for (int i = 0; i < d - k; ++i) {
    const int j = std::uniform_int_distribution<int>(i, d - 1)(rng);
    std::swap(indices[i], indices[j]);
  }
  indices.resize(d - k);
  std::sort(indices.begin(), indices.end());
  if (k_drawn) *k_drawn = k;
  return indices;
}

PairExample sample_pair(const GroundTruthDataset& dataset,
                        const SharingMode& mode, Rng& rng) {
  const FactorSpace& space = dataset.space();
  const int d = space.num_factors();
  PairExample pair;
  pair.z1 = sample_factors(space, 1, rng).front();
  pair.shared_set = sample_sharing_set(d, mode, rng, &pair.k_nominal);
  pair.z2 = pair.z1;
  auto shared = pair.shared_set.begin();
  for (int i = 0; i < d; ++i) {
    if (shared != pair.shared_set.end() && *shared == i) {
      ++shared;
      continue;
    }
    // Fresh draw from the marginal; may reproduce the old value.
    pair.z2[i] = std::uniform_int_distribution<int>(0, space.cardinality(i) - 1)(rng);
    if (pair.z2[i] != pair.z1[i]) pair.changed_set.push_back(i);
  }
  const int p = dataset.image_shape().num_pixels();
  pair.x1.resize(p);
  pair.x2.resize(p);
  dataset.write_image(pair.z1, pair.x1.data());
  dataset.write_image(pair.z2, pair.x2.data());
  return pair;
}

const PairDiagnostics& PairBatch::diagnostics() const {
  if (!has_diagnostics_) {
    throw std::logic_error("pair batch was built without diagnostics");
  }
  note_label_access("PairBatch::diagnostics");
  return diagnostics_;
}

void PairBatch::set_diagnostics(PairDiagnostics d) {
  diagnostics_ = std::move(d);
  has_diagnostics_ = true;
}

PairBatch make_pair_batch(const GroundTruthDataset& dataset,
                          const SharingMode& mode, int batch_size, Rng& rng,
                          bool with_diagnostics) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const int p = dataset.image_shape().num_pixels();
  const int d = dataset.space().num_factors();
  PairBatch batch;
  batch.x1.resize(batch_size, p);
  batch.x2.resize(batch_size, p);
  PairDiagnostics diag;
  if (with_diagnostics) {
    diag.z1.resize(batch_size, d);
    diag.z2.resize(batch_size, d);
    diag.changed = IntMatrix::Zero(batch_size, d);
    diag.k_nominal.resize(batch_size);
  }
  for (int b = 0; b < batch_size; ++b) {
    PairExample pair = sample_pair(dataset, mode, rng);
    std::copy(pair.x1.begin(), pair.x1.end(), batch.x1.row(b).data());
    std::copy(pair.x2.begin(), pair.x2.end(), batch.x2.row(b).data());
    if (with_diagnostics) {
      for (int i = 0; i < d; ++i) {
        diag.z1(b, i) = pair.z1[i];
        diag.z2(b, i) = pair.z2[i];
      }
      for (int i : pair.changed_set) diag.changed(b, i) = 1;
      diag.k_nominal[b] = pair.k_nominal;
    }
  }
  if (with_diagnostics) batch.set_diagnostics(std::move(diag));
  return batch;
}

std::vector<double> estimate_singleton_overlap(int d, const SharingMode& mode,
                                               int draws, Rng& rng) {
  std::vector<double> hits(d, 0.0);
  std::vector<int> overlap;
  for (int t = 0; t < draws; ++t) {
    const auto s1 = sample_sharing_set(d, mode, rng);
    const auto s2 = sample_sharing_set(d, mode, rng);
    overlap.clear();
    std::set_intersection(s1.begin(), s1.end(), s2.begin(), s2.end(),
                          std::back_inserter(overlap));
    if (overlap.size() == 1) hits[overlap[0]] += 1.0;
  }
  for (auto& h : hits) h /= draws;
  return hits;
}

}  // namespace weakdis
