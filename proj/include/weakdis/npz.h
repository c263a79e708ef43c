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

#ifndef WEAKDIS_NPZ_H_
#define WEAKDIS_NPZ_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace weakdis {

// A decoded .npy array. Raw bytes are kept in the file's element order.
struct NpyArray {
  std::string dtype;  // numpy descr, e.g. "|u1", "<i8"
  std::vector<std::int64_t> shape;
  bool fortran_order = false;
  std::vector<std::uint8_t> data;

  std::int64_t num_elements() const;
  int item_size() const;

  // Element `i` converted to int64. Supports integer and bool dtypes.
  std::int64_t int_at(std::int64_t i) const;
};

NpyArray parse_npy(const std::vector<std::uint8_t>& bytes);

// Reads selected members of an .npz archive (stored or deflated, zip64 aware).
// Member names are given without the ".npy" suffix. An empty `keys` reads all.
std::map<std::string, NpyArray> read_npz(const std::filesystem::path& path,
                                         const std::vector<std::string>& keys = {});

}  // namespace weakdis

#endif  // WEAKDIS_NPZ_H_
