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

#include "weakdis/factor_data.h"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "weakdis/npz.h"

namespace weakdis {

using nlohmann::json;

// ---------------------------------------------------------------------------
// FactorSpace

FactorSpace::FactorSpace(std::vector<std::string> names,
                         std::vector<int> cardinalities)
    : names_(std::move(names)), cardinalities_(std::move(cardinalities)) {
  if (cardinalities_.empty()) {
    throw std::invalid_argument("factor space needs at least one factor");
  }
  if (names_.size() != cardinalities_.size()) {
    throw std::invalid_argument("factor names and cardinalities differ in length");
  }
  for (std::size_t i = 0; i < cardinalities_.size(); ++i) {
    if (cardinalities_[i] < 2) {
      throw std::invalid_argument("factor '" + names_[i] +
                                  "' has cardinality < 2");
    }
  }
  strides_.assign(cardinalities_.size(), 1);
  for (int i = num_factors() - 2; i >= 0; --i) {
    strides_[i] = strides_[i + 1] * cardinalities_[i + 1];
  }
  size_ = strides_[0] * cardinalities_[0];
}

void FactorSpace::validate(std::span<const int> v) const {
  if (static_cast<int>(v.size()) != num_factors()) {
    throw std::invalid_argument("factor vector has " + std::to_string(v.size()) +
                                " entries, expected " +
                                std::to_string(num_factors()));
  }
  for (int i = 0; i < num_factors(); ++i) {
    if (v[i] < 0 || v[i] >= cardinalities_[i]) {
      throw std::invalid_argument("code " + std::to_string(v[i]) +
                                  " out of range for factor '" + names_[i] + "'");
    }
  }
}

std::int64_t FactorSpace::factors_to_index(std::span<const int> v) const {
  validate(v);
  std::int64_t index = 0;
  for (int i = 0; i < num_factors(); ++i) index += strides_[i] * v[i];
  return index;
}

FactorVector FactorSpace::index_to_factors(std::int64_t index) const {
  if (index < 0 || index >= size_) {
    throw std::invalid_argument("flat index out of range");
  }
  FactorVector v(cardinalities_.size());
  for (int i = 0; i < num_factors(); ++i) {
    v[i] = static_cast<int>(index / strides_[i]);
    index %= strides_[i];
  }
  return v;
}

FactorSpace build_factor_space(std::vector<std::string> names,
                               std::vector<int> cardinalities) {
  return FactorSpace(std::move(names), std::move(cardinalities));
}

// ---------------------------------------------------------------------------
// Label audit

namespace {
thread_local LabelFreeScope* active_scope = nullptr;
std::atomic<long> label_reads{0};
}  // namespace

LabelFreeScope::LabelFreeScope() : previous_(active_scope) {
  active_scope = this;
}

LabelFreeScope::~LabelFreeScope() { active_scope = previous_; }

void note_label_access(const char* site) {
  label_reads.fetch_add(1, std::memory_order_relaxed);
  for (auto* scope = active_scope; scope != nullptr; scope = scope->previous_) {
    ++scope->violations_;
    if (scope->sites_.size() < 16) scope->sites_.emplace_back(site);
  }
}

long total_label_accesses() { return label_reads.load(); }

// ---------------------------------------------------------------------------
// GroundTruthDataset

GroundTruthDataset::GroundTruthDataset(std::string name, FactorSpace space,
                                       ImageShape shape,
                                       std::vector<std::uint8_t> pixels)
    : name_(std::move(name)),
      space_(std::move(space)),
      shape_(shape),
      pixels_(std::move(pixels)) {
  if (shape_.height <= 0 || shape_.width <= 0 || shape_.channels <= 0) {
    throw std::invalid_argument("image shape must be positive");
  }
  if (static_cast<std::int64_t>(pixels_.size()) !=
      space_.size() * shape_.num_pixels()) {
    throw std::invalid_argument("pixel buffer does not match factor space size");
  }
}

std::span<const std::uint8_t> GroundTruthDataset::image_bytes(
    std::int64_t index) const {
  if (index < 0 || index >= size()) {
    throw std::invalid_argument("image index out of range");
  }
  const std::size_t n = shape_.num_pixels();
  return std::span<const std::uint8_t>(pixels_).subspan(index * n, n);
}

std::span<const std::uint8_t> GroundTruthDataset::image_bytes(
    std::span<const int> v) const {
  return image_bytes(space_.factors_to_index(v));
}

FactorVector GroundTruthDataset::factors_at(std::int64_t index) const {
  note_label_access("GroundTruthDataset::factors_at");
  return space_.index_to_factors(index);
}

// ---------------------------------------------------------------------------
// Toy sprites

namespace {

constexpr int kSupersample = 4;
constexpr std::array<double, 4> kIntensity = {0.4, 0.6, 0.8, 1.0};

enum class Shape { kSquare = 0, kEllipse = 1, kTriangle = 2 };

// (u, v) are offsets from the sprite centre in units of the half size.
bool inside(Shape shape, double u, double v) {
  switch (shape) {
    case Shape::kSquare:
      return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
    case Shape::kEllipse:
      return u * u + (v * v) / 0.5625 <= 1.0;  // vertical semi-axis 0.75
    case Shape::kTriangle:
      return v >= -1.0 && v <= 1.0 && std::abs(u) <= 0.5 * (v + 1.0);
  }
  return false;
}

}  // namespace

FactorSpace toy_sprites_space() {
  return FactorSpace({"shape", "scale", "x_position", "y_position", "intensity"},
                     {3, 6, 8, 8, 4});
}

std::vector<std::uint8_t> render_toy_sprites(const FactorSpace& space,
                                             std::span<const int> v,
                                             int resolution) {
  if (!(space == toy_sprites_space())) {
    throw std::invalid_argument("render_toy_sprites requires the toy-sprites space");
  }
  if (resolution < 32 || resolution % 32 != 0) {
    throw std::invalid_argument("toy-sprites resolution must be a multiple of 32");
  }
  space.validate(v);
  const double unit = resolution / 32.0;
  const auto shape = static_cast<Shape>(v[0]);
  const double half = (3 + v[1]) * unit;
  // Centres move in steps of two base pixels so every translation is exact.
  const double cx = (9 + 2 * v[2]) * unit;
  const double cy = (9 + 2 * v[3]) * unit;
  const double level = kIntensity[v[4]];

  std::vector<std::uint8_t> image(static_cast<std::size_t>(resolution) * resolution);
  const int lo_y = std::max(0, static_cast<int>(std::floor(cy - half)) - 1);
  const int hi_y = std::min(resolution, static_cast<int>(std::ceil(cy + half)) + 1);
  const int lo_x = std::max(0, static_cast<int>(std::floor(cx - half)) - 1);
  const int hi_x = std::min(resolution, static_cast<int>(std::ceil(cx + half)) + 1);
  for (int row = lo_y; row < hi_y; ++row) {
    for (int col = lo_x; col < hi_x; ++col) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = col + (sx + 0.5) / kSupersample;
          const double py = row + (sy + 0.5) / kSupersample;
          hits += inside(shape, (px - cx) / half, (py - cy) / half);
        }
      }
      const double coverage = hits / double(kSupersample * kSupersample);
      image[static_cast<std::size_t>(row) * resolution + col] =
          static_cast<std::uint8_t>(std::lround(255.0 * level * coverage));
    }
  }
  return image;
}

GroundTruthDataset make_toy_sprites(int resolution) {
  FactorSpace space = toy_sprites_space();
  const std::size_t per_image = static_cast<std::size_t>(resolution) * resolution;
  std::vector<std::uint8_t> pixels(space.size() * per_image);
  for (std::int64_t i = 0; i < space.size(); ++i) {
    const auto image = render_toy_sprites(space, space.index_to_factors(i), resolution);
    std::copy(image.begin(), image.end(), pixels.begin() + i * per_image);
  }
  return GroundTruthDataset("toy_sprites", std::move(space),
                            ImageShape{resolution, resolution, 1}, std::move(pixels));
}

std::vector<FactorVector> sample_factors(const FactorSpace& space, int n,
                                         Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_factors needs n >= 1");
  std::vector<FactorVector> out(n, FactorVector(space.num_factors()));
  for (auto& v : out) {
    for (int i = 0; i < space.num_factors(); ++i) {
      v[i] = std::uniform_int_distribution<int>(0, space.cardinality(i) - 1)(rng);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Container

namespace {

constexpr const char* kFormat = "weakdis-dataset";
constexpr int kFormatVersion = 1;

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing dataset file: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_all(const std::filesystem::path& path, const void* data,
               std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

void put_le32(std::uint8_t* p, std::int32_t value) {
  const auto u = static_cast<std::uint32_t>(value);
  p[0] = u & 0xFF;
  p[1] = (u >> 8) & 0xFF;
  p[2] = (u >> 16) & 0xFF;
  p[3] = (u >> 24) & 0xFF;
}

std::int32_t get_le32(const std::uint8_t* p) {
  return static_cast<std::int32_t>(
      static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
      (static_cast<std::uint32_t>(p[2]) << 16) |
      (static_cast<std::uint32_t>(p[3]) << 24));
}

}  // namespace

void save_dataset(const GroundTruthDataset& dataset,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& space = dataset.space();
  const auto& shape = dataset.image_shape();
  json meta = {
      {"format", kFormat},
      {"version", kFormatVersion},
      {"name", dataset.name()},
      {"factor_names", space.names()},
      {"cardinalities", space.cardinalities()},
      {"num_images", dataset.size()},
      {"image_shape", {shape.height, shape.width, shape.channels}},
      {"image_dtype", "uint8"},
      {"factor_dtype", "int32"},
      {"byte_order", "little"},
  };
  std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";

  write_all(dir / "images.bin", dataset.pixels().data(), dataset.pixels().size());

  const int d = space.num_factors();
  std::vector<std::uint8_t> factors(static_cast<std::size_t>(dataset.size()) * d * 4);
  for (std::int64_t i = 0; i < dataset.size(); ++i) {
    const auto v = space.index_to_factors(i);
    for (int j = 0; j < d; ++j) put_le32(&factors[(i * d + j) * 4], v[j]);
  }
  write_all(dir / "factors.bin", factors.data(), factors.size());
}

GroundTruthDataset load_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw std::runtime_error("missing dataset file: " + meta_path.string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw std::runtime_error("unreadable meta.json: " + std::string(e.what()));
  }
  auto field = [&](const char* key) -> const json& {
    if (!meta.contains(key)) {
      throw std::runtime_error(std::string("meta.json lacks '") + key + "'");
    }
    return meta.at(key);
  };
  if (field("image_dtype") != "uint8" || field("factor_dtype") != "int32" ||
      field("byte_order") != "little") {
    throw std::runtime_error("unsupported dtype or byte order in meta.json");
  }
  FactorSpace space(field("factor_names").get<std::vector<std::string>>(),
                    field("cardinalities").get<std::vector<int>>());
  const auto dims = field("image_shape").get<std::vector<int>>();
  if (dims.size() != 3) throw std::runtime_error("image_shape must have 3 entries");
  const ImageShape shape{dims[0], dims[1], dims[2]};
  const std::int64_t n = field("num_images").get<std::int64_t>();
  if (n != space.size()) {
    throw std::runtime_error("num_images " + std::to_string(n) +
                             " does not cover the declared factor space (" +
                             std::to_string(space.size()) + ")");
  }

  auto pixels = read_all(dir / "images.bin");
  if (static_cast<std::int64_t>(pixels.size()) != n * shape.num_pixels()) {
    throw std::runtime_error("images.bin size does not match N x H x W x C");
  }
  const auto factors = read_all(dir / "factors.bin");
  const int d = space.num_factors();
  if (static_cast<std::int64_t>(factors.size()) != n * d * 4) {
    throw std::runtime_error("factors.bin size does not match N x " +
                             std::to_string(d) + " int32 values");
  }
  FactorVector row(d);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) row[j] = get_le32(&factors[(i * d + j) * 4]);
    if (space.factors_to_index(row) != i) {
      throw std::runtime_error("factors.bin row " + std::to_string(i) +
                               " is not in flat-index order");
    }
  }
  return GroundTruthDataset(meta.value("name", dir.filename().string()),
                            std::move(space), shape, std::move(pixels));
}

GroundTruthDataset import_npz_archive(const std::filesystem::path& archive,
                                      std::vector<std::string>* warnings) {
  auto arrays = read_npz(archive, {"imgs", "latents_classes"});
  if (!arrays.count("imgs") || !arrays.count("latents_classes")) {
    throw std::runtime_error("archive must contain 'imgs' and 'latents_classes'");
  }
  const NpyArray& imgs = arrays.at("imgs");
  const NpyArray& classes = arrays.at("latents_classes");
  if (imgs.fortran_order || classes.fortran_order) {
    throw std::runtime_error("fortran-ordered arrays are not supported");
  }
  if (imgs.dtype != "|u1" && imgs.dtype != "<u1") {
    throw std::runtime_error("image array must be uint8, got " + imgs.dtype);
  }
  if (imgs.shape.size() < 3 || imgs.shape.size() > 4 || classes.shape.size() != 2) {
    throw std::runtime_error("expected images N x H x W [x C] and classes N x F");
  }
  const std::int64_t n = imgs.shape[0];
  if (classes.shape[0] != n) {
    throw std::runtime_error("image and factor arrays differ in length");
  }
  const ImageShape shape{static_cast<int>(imgs.shape[1]), static_cast<int>(imgs.shape[2]),
                         imgs.shape.size() == 4 ? static_cast<int>(imgs.shape[3]) : 1};
  const int raw_factors = static_cast<int>(classes.shape[1]);

  std::vector<std::string> raw_names;
  if (raw_factors == 6) {
    raw_names = {"color", "shape", "scale", "orientation", "x_position", "y_position"};
  } else {
    for (int j = 0; j < raw_factors; ++j) raw_names.push_back("factor_" + std::to_string(j));
  }
  std::vector<int> max_code(raw_factors, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < raw_factors; ++j) {
      const auto c = classes.int_at(i * raw_factors + j);
      if (c < 0) throw std::runtime_error("negative factor class in archive");
      max_code[j] = std::max<int>(max_code[j], static_cast<int>(c));
    }
  }
  std::vector<int> kept;
  std::vector<std::string> names;
  std::vector<int> cards;
  for (int j = 0; j < raw_factors; ++j) {
    if (max_code[j] == 0) {
      if (warnings) {
        warnings->push_back("dropping factor '" + raw_names[j] +
                            "' with a single value");
      }
      continue;
    }
    kept.push_back(j);
    names.push_back(raw_names[j]);
    cards.push_back(max_code[j] + 1);
  }
  FactorSpace space(std::move(names), std::move(cards));
  if (space.size() != n) {
    throw std::runtime_error("archive holds " + std::to_string(n) +
                             " images but its factors span " +
                             std::to_string(space.size()));
  }

  // dSprites stores binary masks as 0/1; rescale those to full range.
  const bool binary = std::all_of(imgs.data.begin(), imgs.data.end(),
                                  [](std::uint8_t b) { return b <= 1; });
  const std::size_t per_image = shape.num_pixels();
  std::vector<std::uint8_t> pixels(imgs.data.size());
  std::vector<bool> seen(n, false);
  FactorVector v(kept.size());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kept.size(); ++j) {
      v[j] = static_cast<int>(classes.int_at(i * raw_factors + kept[j]));
    }
    const auto index = space.factors_to_index(v);
    if (seen[index]) throw std::runtime_error("archive repeats a factor combination");
    seen[index] = true;
    for (std::size_t p = 0; p < per_image; ++p) {
      const std::uint8_t b = imgs.data[i * per_image + p];
      pixels[index * per_image + p] = binary ? static_cast<std::uint8_t>(b * 255) : b;
    }
  }
  return GroundTruthDataset(archive.stem().string(), std::move(space), shape,
                            std::move(pixels));
}

}  // namespace weakdis
