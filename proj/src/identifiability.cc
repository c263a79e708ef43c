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

#include "weakdis/identifiability.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "weakdis/pair_sampler.h"

namespace weakdis {

namespace {

double logit(double z) { return std::log(z) - std::log1p(-z); }
double sigmoid(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

bool is_permutation(const std::vector<int>& p) {
  std::vector<int> s = p;
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != static_cast<int>(i)) return false;
  }
  return true;
}

MatrixD haar_orthogonal(int d, Rng& rng) {
  std::normal_distribution<double> n;
  MatrixD g(d, d);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
  Eigen::HouseholderQR<MatrixD> qr(g);
  MatrixD q = qr.householderQ();
  const MatrixD r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

struct ApplyStage {
  VectorD z;
  void operator()(const PermutationMonotone& s) {
    VectorD out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      out[i] = monotone_warp(s.alpha[i], z[s.permutation[i]]);
    }
    z = out;
  }
  void operator()(const LogitRotation& s) {
    VectorD t(s.coordinates.size());
    for (std::size_t i = 0; i < s.coordinates.size(); ++i) t[i] = logit(z[s.coordinates[i]]);
    const VectorD r = s.rotation * t;
    for (std::size_t i = 0; i < s.coordinates.size(); ++i) z[s.coordinates[i]] = sigmoid(r[i]);
  }
};

struct InvertStage {
  VectorD u;
  void operator()(const PermutationMonotone& s) {
    VectorD out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      out[s.permutation[i]] = monotone_warp_inverse(s.alpha[i], u[i]);
    }
    u = out;
  }
  void operator()(const LogitRotation& s) {
    VectorD t(s.coordinates.size());
    for (std::size_t i = 0; i < s.coordinates.size(); ++i) t[i] = logit(u[s.coordinates[i]]);
    const VectorD r = s.rotation.transpose() * t;
    for (std::size_t i = 0; i < s.coordinates.size(); ++i) u[s.coordinates[i]] = sigmoid(r[i]);
  }
};

}  // namespace

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::kPermutationMonotone: return "permutation";
    case MapKind::kRotation: return "rotation";
    case MapKind::kComposite: return "composite";
  }
  return "unknown";
}

MapKind parse_map_kind(const std::string& text) {
  for (MapKind k : {MapKind::kPermutationMonotone, MapKind::kRotation, MapKind::kComposite}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown map kind '" + text + "'");
}

double monotone_warp(double alpha, double t) {
  return alpha * t + (1.0 - alpha) * t * t * (3.0 - 2.0 * t);
}

double monotone_warp_inverse(double alpha, double u) {
  if (alpha == 1.0) return u;
  double lo = 0.0, hi = 1.0, t = u;
  for (int it = 0; it < 100; ++it) {
    const double f = monotone_warp(alpha, t) - u;
    if (f == 0) return t;
    (f > 0 ? hi : lo) = t;
    const double slope = alpha + (1.0 - alpha) * 6.0 * t * (1.0 - t);
    double next = t - f / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) < 1e-17) return next;
    t = next;
  }
  return t;
}

CandidateMap::CandidateMap(int dim, std::vector<Stage> stages)
    : dim_(dim), stages_(std::move(stages)) {
  if (dim < 1) throw std::invalid_argument("map dimension must be positive");
  for (const Stage& s : stages_) {
    if (const auto* p = std::get_if<PermutationMonotone>(&s)) {
      if (static_cast<int>(p->permutation.size()) != dim || !is_permutation(p->permutation) ||
          static_cast<int>(p->alpha.size()) != dim) {
        throw std::invalid_argument("invalid permutation stage");
      }
      for (double a : p->alpha) {
        if (!(a > 0 && a <= 1)) throw std::invalid_argument("warp alpha must lie in (0, 1]");
      }
    } else {
      const auto& r = std::get<LogitRotation>(s);
      const auto m = static_cast<Eigen::Index>(r.coordinates.size());
      if (m < 1 || r.rotation.rows() != m || r.rotation.cols() != m) {
        throw std::invalid_argument("rotation size does not match its coordinates");
      }
      for (int c : r.coordinates) {
        if (c < 0 || c >= dim) throw std::invalid_argument("rotation coordinate out of range");
      }
      if (!(r.rotation * r.rotation.transpose()).isIdentity(1e-10)) {
        throw std::invalid_argument("rotation matrix is not orthogonal");
      }
    }
  }
}

MapKind CandidateMap::kind() const {
  bool perm = false, rot = false;
  for (const Stage& s : stages_) {
    (std::holds_alternative<PermutationMonotone>(s) ? perm : rot) = true;
  }
  if (perm && rot) return MapKind::kComposite;
  return rot ? MapKind::kRotation : MapKind::kPermutationMonotone;
}

VectorD CandidateMap::apply(const VectorD& z) const {
  if (z.size() != dim_) throw std::invalid_argument("point dimension mismatch");
  ApplyStage a{z};
  for (const Stage& s : stages_) std::visit(a, s);
  return a.z;
}

VectorD CandidateMap::inverse(const VectorD& u) const {
  if (u.size() != dim_) throw std::invalid_argument("point dimension mismatch");
  InvertStage inv{u};
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) std::visit(inv, *it);
  return inv.u;
}

double CandidateMap::round_trip_error(int n, Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    VectorD z(dim_);
    for (int j = 0; j < dim_; ++j) z[j] = u(rng);
    worst = std::max(worst, (inverse(apply(z)) - z).cwiseAbs().maxCoeff());
  }
  return worst;
}

CandidateMap identity_map(int d) {
  std::vector<int> p(d);
  std::iota(p.begin(), p.end(), 0);
  return permutation_monotone_map(p, std::vector<double>(d, 1.0));
}

CandidateMap permutation_monotone_map(std::vector<int> permutation, std::vector<double> alpha) {
  const int d = static_cast<int>(permutation.size());
  return CandidateMap(d, {PermutationMonotone{std::move(permutation), std::move(alpha)}});
}

CandidateMap rotation_map(const MatrixD& rotation) {
  const int d = static_cast<int>(rotation.rows());
  std::vector<int> coords(d);
  std::iota(coords.begin(), coords.end(), 0);
  return CandidateMap(d, {LogitRotation{coords, rotation}});
}

CandidateMap rotation_2d(double radians) {
  MatrixD r(2, 2);
  r << std::cos(radians), -std::sin(radians), std::sin(radians), std::cos(radians);
  return rotation_map(r);
}

CandidateMap make_candidate_map(MapKind kind, int d, Rng& rng) {
  if (d < 2) throw std::invalid_argument("candidate maps need d >= 2");
  auto permutation_stage = [&] {
    PermutationMonotone s;
    s.permutation.resize(d);
    std::iota(s.permutation.begin(), s.permutation.end(), 0);
    std::shuffle(s.permutation.begin(), s.permutation.end(), rng);
    std::uniform_real_distribution<double> a(0.2, 1.0);
    for (int i = 0; i < d; ++i) s.alpha.push_back(a(rng));
    return s;
  };
  auto rotation_stage = [&] {
    const double bound = std::cos(10.0 * M_PI / 180.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
      MatrixD q = haar_orthogonal(d, rng);
      if (q.cwiseAbs().maxCoeff() <= bound) {
        std::vector<int> coords(d);
        std::iota(coords.begin(), coords.end(), 0);
        return LogitRotation{coords, q};
      }
    }
    throw std::runtime_error("could not draw a rotation away from the axes");
  };
  std::vector<CandidateMap::Stage> stages;
  if (kind != MapKind::kRotation) stages.emplace_back(permutation_stage());
  if (kind != MapKind::kPermutationMonotone) stages.emplace_back(rotation_stage());
  CandidateMap map(d, std::move(stages));
  const double err = map.round_trip_error(1000, rng);
  if (!(err < 1e-8)) {
    throw std::runtime_error("candidate map is not numerically invertible (round trip " +
                             std::to_string(err) + ")");
  }
  return map;
}

std::vector<ContinuousPair> continuous_pair_sample(int d, int k, int n, Rng& rng,
                                                   const std::vector<int>* fixed_shared) {
  if (d < 2 || k < 1 || k > d - 1) throw std::invalid_argument("need 1 <= k <= d - 1");
  if (fixed_shared) {
    std::vector<int> s = *fixed_shared;
    std::sort(s.begin(), s.end());
    if (static_cast<int>(s.size()) != d - k ||
        std::adjacent_find(s.begin(), s.end()) != s.end() || s.front() < 0 || s.back() >= d) {
      throw std::invalid_argument("fixed shared set must hold d - k distinct coordinates");
    }
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ContinuousPair> pairs(n);
  for (auto& p : pairs) {
    p.shared = fixed_shared ? *fixed_shared
                            : sample_sharing_set(d, SharingMode::fixed_k(k), rng);
    std::sort(p.shared.begin(), p.shared.end());
    p.z1.resize(d);
    for (int i = 0; i < d; ++i) p.z1[i] = u(rng);
    p.z2 = p.z1;
    for (int i = 0; i < d; ++i) {
      if (!std::binary_search(p.shared.begin(), p.shared.end(), i)) p.z2[i] = u(rng);
    }
  }
  return pairs;
}

ConstraintReport residual_constraint_check(const CandidateMap& map,
                                           const std::vector<ContinuousPair>& pairs, int k,
                                           double tol) {
  const int d = map.dim();
  if (!(tol > 0)) throw std::invalid_argument("tolerance must be positive");
  if (k < 1 || k > d - 1) throw std::invalid_argument("need 1 <= k <= d - 1");
  ConstraintReport report;
  int passed = 0, violations = 0;
  std::map<std::vector<int>, std::map<std::vector<int>, int>> t_by_s;
  for (const auto& p : pairs) {
    if (p.z1.size() != d || p.z2.size() != d) throw std::invalid_argument("pair dimension mismatch");
    bool degenerate = false;
    for (int i = 0; i < d; ++i) {
      if (!std::binary_search(p.shared.begin(), p.shared.end(), i) &&
          std::abs(p.z1[i] - p.z2[i]) <= tol) {
        degenerate = true;
      }
    }
    if (degenerate) {
      ++report.degenerate;
      continue;
    }
    ++report.evaluated;
    const VectorD a = map.apply(p.z1), b = map.apply(p.z2);
    std::vector<int> equal;
    bool ambiguous = false;
    for (int i = 0; i < d; ++i) {
      const double gap = std::abs(a[i] - b[i]);
      if (gap < tol) {
        equal.push_back(i);
      } else if (!(gap > tol)) {
        ambiguous = true;
      }
    }
    const int expected = d - k;
    if (static_cast<int>(equal.size()) > expected) ++violations;
    if (!ambiguous && static_cast<int>(equal.size()) == expected) {
      ++passed;
      ++t_by_s[p.shared][equal];
    }
  }
  if (report.evaluated > 0) {
    report.pass_fraction_shared = double(passed) / report.evaluated;
    report.violation_fraction_distinct = double(violations) / report.evaluated;
  }
  int modal = 0;
  for (const auto& [s, ts] : t_by_s) {
    int best = 0;
    for (const auto& [t, count] : ts) best = std::max(best, count);
    modal += best;
    if (ts.size() > 1) report.t_consistent = false;
  }
  report.t_consistency_fraction = passed > 0 ? double(modal) / passed : 1.0;
  return report;
}

MatrixD finite_difference_jacobian(const CandidateMap& map, const VectorD& z, double eps) {
  const int d = map.dim();
  MatrixD j(d, d);
  for (int c = 0; c < d; ++c) {
    VectorD up = z, down = z;
    up[c] += eps;
    down[c] -= eps;
    j.col(c) = (map.apply(up) - map.apply(down)) / (2 * eps);
  }
  return j;
}

JacobianReport jacobian_structure(const CandidateMap& map, const std::vector<VectorD>& points,
                                  double eps, double tol) {
  const int d = map.dim();
  if (points.empty()) throw std::invalid_argument("no points");
  if (!(eps > 0)) throw std::invalid_argument("step must be positive");
  std::vector<MatrixD> jacobians;
  MatrixD mass = MatrixD::Zero(d, d);
  for (const VectorD& z : points) {
    if (z.size() != d) throw std::invalid_argument("point dimension mismatch");
    for (int i = 0; i < d; ++i) {
      if (!(z[i] >= 2 * eps && z[i] <= 1 - 2 * eps)) {
        throw std::invalid_argument("point too close to the boundary of the unit box");
      }
    }
    jacobians.push_back(finite_difference_jacobian(map, z, eps));
    mass += jacobians.back().cwiseAbs();
  }
  std::vector<int> perm(d), best;
  std::iota(perm.begin(), perm.end(), 0);
  if (d <= 8) {
    double best_mass = -1;
    do {
      double m = 0;
      for (int i = 0; i < d; ++i) m += mass(i, perm[i]);
      if (m > best_mass) {
        best_mass = m;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    // Greedy matching on the largest remaining entry.
    best.assign(d, -1);
    std::vector<bool> used(d, false);
    for (int step = 0; step < d; ++step) {
      double top = -1;
      int bi = 0, bj = 0;
      for (int i = 0; i < d; ++i) {
        if (best[i] >= 0) continue;
        for (int j = 0; j < d; ++j) {
          if (!used[j] && mass(i, j) > top) {
            top = mass(i, j);
            bi = i;
            bj = j;
          }
        }
      }
      best[bi] = bj;
      used[bj] = true;
    }
  }
  JacobianReport report;
  report.matched_permutation = best;
  for (const MatrixD& j : jacobians) {
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) {
        if (c != best[r]) report.offdiag_max = std::max(report.offdiag_max, std::abs(j(r, c)));
      }
    }
  }
  report.is_diagonal_up_to_permutation = report.offdiag_max < tol;
  return report;
}

}  // namespace weakdis
