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

#ifndef WEAKDIS_IDENTIFIABILITY_H_
#define WEAKDIS_IDENTIFIABILITY_H_

#include <string>
#include <variant>
#include <vector>

#include "weakdis/common.h"

namespace weakdis {

// Output i is warp_i(z[permutation[i]]); each warp is
// t -> alpha t + (1 - alpha)(3t^2 - 2t^3), strictly increasing for alpha > 0.
struct PermutationMonotone {
  std::vector<int> permutation;
  std::vector<double> alpha;
};

// Rotation of the listed coordinates in logit space:
// z_c -> sigmoid(R logit(z_c)). Other coordinates pass through.
struct LogitRotation {
  std::vector<int> coordinates;
  MatrixD rotation;
};

enum class MapKind { kPermutationMonotone, kRotation, kComposite };
std::string to_string(MapKind kind);
MapKind parse_map_kind(const std::string& text);  // "permutation", "rotation", "composite"

// A smooth bijection of the open box (0,1)^d built from stages applied in order.
class CandidateMap {
 public:
  using Stage = std::variant<PermutationMonotone, LogitRotation>;

  CandidateMap(int dim, std::vector<Stage> stages);

  int dim() const { return dim_; }
  MapKind kind() const;
  const std::vector<Stage>& stages() const { return stages_; }

  VectorD apply(const VectorD& z) const;
  VectorD inverse(const VectorD& u) const;
  // Max |inverse(apply(z)) - z| over n uniform points.
  double round_trip_error(int n, Rng& rng) const;

 private:
  int dim_;
  std::vector<Stage> stages_;
};

CandidateMap identity_map(int d);
CandidateMap permutation_monotone_map(std::vector<int> permutation, std::vector<double> alpha);
CandidateMap rotation_map(const MatrixD& rotation);
CandidateMap rotation_2d(double radians);

// Random map of the given kind, checked for round trip error below 1e-8 on
// 1000 points. Rotations keep every column at least 10 degrees from an axis.
// The composite is a permutation-monotone stage followed by a rotation.
CandidateMap make_candidate_map(MapKind kind, int d, Rng& rng);

// Inverse of one warp by safeguarded Newton iteration.
double monotone_warp(double alpha, double t);
double monotone_warp_inverse(double alpha, double u);

struct ContinuousPair {
  VectorD z1;
  VectorD z2;
  std::vector<int> shared;  // sorted S, |S| = d - k
};

// Uniform latents on [0,1]^d. S is uniform among (d-k)-subsets unless
// `fixed_shared` is given; coordinates in S are copied bit for bit and the
// others resampled.
std::vector<ContinuousPair> continuous_pair_sample(int d, int k, int n, Rng& rng,
                                                   const std::vector<int>* fixed_shared =
                                                       nullptr);

struct ConstraintReport {
  double pass_fraction_shared = 0;
  double violation_fraction_distinct = 0;
  bool t_consistent = true;        // one output set T per input set S
  double t_consistency_fraction = 1;
  int evaluated = 0;
  int degenerate = 0;              // pairs with a coincidence outside S
};

// A pair passes when exactly d - k output coordinates agree within `tol` and
// all others differ by more than `tol`. A distinctness violation is any pair
// with more than d - k agreeing coordinates.
ConstraintReport residual_constraint_check(const CandidateMap& map,
                                           const std::vector<ContinuousPair>& pairs, int k,
                                           double tol = 1e-7);

struct JacobianReport {
  bool is_diagonal_up_to_permutation = false;
  double offdiag_max = 0;
  std::vector<int> matched_permutation;  // output i matched to input matched[i]
};

MatrixD finite_difference_jacobian(const CandidateMap& map, const VectorD& z, double eps = 1e-5);

// One permutation is matched for all points (maximal summed |J|); the report
// gives the largest entry off that permutation. Throws when a point lies
// within 2 eps of the boundary.
JacobianReport jacobian_structure(const CandidateMap& map, const std::vector<VectorD>& points,
                                  double eps = 1e-5, double tol = 1e-4);

}  // namespace weakdis

#endif  // WEAKDIS_IDENTIFIABILITY_H_
