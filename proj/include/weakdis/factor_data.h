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

#ifndef WEAKDIS_FACTOR_DATA_H_
#define WEAKDIS_FACTOR_DATA_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "weakdis/common.h"

namespace weakdis {

// One integer code per ground-truth factor.
using FactorVector = std::vector<int>;

// Names and cardinalities of the discrete ground-truth factors. Flat indices
// enumerate factor vectors in row-major order (last factor fastest).
class FactorSpace {
 public:
  FactorSpace(std::vector<std::string> names, std::vector<int> cardinalities);

  int num_factors() const { return static_cast<int>(cardinalities_.size()); }
  std::int64_t size() const { return size_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<int>& cardinalities() const { return cardinalities_; }
  int cardinality(int factor) const { return cardinalities_.at(factor); }

  // Throws std::invalid_argument if `v` has the wrong length or a code is out
  // of range.
  void validate(std::span<const int> v) const;
  std::int64_t factors_to_index(std::span<const int> v) const;
  FactorVector index_to_factors(std::int64_t index) const;

  bool operator==(const FactorSpace& other) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<int> cardinalities_;
  std::vector<std::int64_t> strides_;
  std::int64_t size_ = 0;
};

FactorSpace build_factor_space(std::vector<std::string> names,
                               std::vector<int> cardinalities);

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  int num_pixels() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

// Tracks reads of ground-truth labels. Code paths that must stay label-free
// (model selection) run inside a LabelFreeScope; any label read on the same
// thread while a scope is open is recorded as a violation.
class LabelFreeScope {
 public:
  LabelFreeScope();
  ~LabelFreeScope();
  LabelFreeScope(const LabelFreeScope&) = delete;
  LabelFreeScope& operator=(const LabelFreeScope&) = delete;

  long violations() const { return violations_; }
  const std::vector<std::string>& sites() const { return sites_; }

 private:
  friend void note_label_access(const char* site);
  LabelFreeScope* previous_;
  long violations_ = 0;
  std::vector<std::string> sites_;
};

// Called by every accessor that exposes factor labels to a caller.
void note_label_access(const char* site);

// Total label reads observed process-wide (all threads, all scopes).
long total_label_accesses();

// Immutable image collection indexed by factor vectors. Images are stored as
// 8-bit values in flat-index order and exposed normalized to [0,1].
class GroundTruthDataset {
 public:
  GroundTruthDataset(std::string name, FactorSpace space, ImageShape shape,
                     std::vector<std::uint8_t> pixels);

  const std::string& name() const { return name_; }
  const FactorSpace& space() const { return space_; }
  const ImageShape& image_shape() const { return shape_; }
  std::int64_t size() const { return space_.size(); }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  std::span<const std::uint8_t> image_bytes(std::int64_t index) const;
  std::span<const std::uint8_t> image_bytes(std::span<const int> v) const;

  // Writes the normalized image of `v` into `out` (num_pixels entries).
  template <typename Scalar>
  void write_image(std::span<const int> v, Scalar* out) const {
    auto bytes = image_bytes(v);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      out[i] = static_cast<Scalar>(bytes[i]) / Scalar(255);
    }
  }

  // One row per factor vector.
  template <typename Scalar>
  Matrix<Scalar> images(std::span<const FactorVector> factors) const {
    Matrix<Scalar> out(static_cast<Eigen::Index>(factors.size()),
                       shape_.num_pixels());
    for (std::size_t r = 0; r < factors.size(); ++r) {
      write_image(factors[r], out.row(static_cast<Eigen::Index>(r)).data());
    }
    return out;
  }

  // Factor labels of a stored image. Counts as a label access.
  FactorVector factors_at(std::int64_t index) const;

 private:
  std::string name_;
  FactorSpace space_;
  ImageShape shape_;
  std::vector<std::uint8_t> pixels_;
};

// Toy sprites: shape (square, ellipse, triangle), scale, x, y, intensity.
FactorSpace toy_sprites_space();

// Renders one sprite at `resolution` x `resolution` (a multiple of 32) as 8-bit
// grey values. Deterministic and injective over the toy-sprites space.
std::vector<std::uint8_t> render_toy_sprites(const FactorSpace& space,
                                             std::span<const int> v,
                                             int resolution = 32);

GroundTruthDataset make_toy_sprites(int resolution = 32);

// Independent uniform draws per factor.
std::vector<FactorVector> sample_factors(const FactorSpace& space, int n,
                                         Rng& rng);

// Directory container: meta.json, images.bin (u8, N x H x W x C) and
// factors.bin (little-endian i32, N x d_f), both in flat-index order.
void save_dataset(const GroundTruthDataset& dataset,
                  const std::filesystem::path& dir);
GroundTruthDataset load_dataset(const std::filesystem::path& dir);

// Imports a dSprites-style .npz archive holding an image array ("imgs") and a
// factor-class array ("latents_classes"). Factors with a single value are
// dropped and reported through `warnings`.
GroundTruthDataset import_npz_archive(const std::filesystem::path& archive,
                                      std::vector<std::string>* warnings =
                                          nullptr);

}  // namespace weakdis

#endif  // WEAKDIS_FACTOR_DATA_H_
