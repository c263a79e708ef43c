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

#ifndef WEAKDIS_WEAK_OBJECTIVE_H_
#define WEAKDIS_WEAK_OBJECTIVE_H_

#include <optional>
#include <string>
#include <vector>

#include "weakdis/common.h"
#include "weakdis/factor_data.h"
#include "weakdis/pair_sampler.h"
#include "weakdis/vae.h"

namespace weakdis {

using Mask = std::vector<bool>;  // true = coordinate treated as shared

struct SharedSetEstimate {
  Mask mask;
  VectorD delta;
  std::optional<double> tau;  // absent in known-k and annotated modes
};

enum class Aggregation { kGvaeAverage, kMlvaeProduct };
std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& text);  // "gvae", "mlvae"

// Which coordinates of a pair get aggregated.
class Supervision {
 public:
  enum class Kind {
    kAdaptive,   // delta_i < tau
    kKnownK,     // the d - k smallest delta_i
    kAnnotated,  // complement of the annotated changed factors
    kNone,       // nothing shared; reduces to two independent beta-VAE terms
  };

  static Supervision adaptive() { return {Kind::kAdaptive, 0, false}; }
  static Supervision known_k(int k);
  // With `incomplete`, only one of the changed factors is revealed.
  static Supervision annotated(bool incomplete = false) {
    return {Kind::kAnnotated, 0, incomplete};
  }
  static Supervision none() { return {Kind::kNone, 0, false}; }

  Kind kind() const { return kind_; }
  int k() const { return k_; }
  bool incomplete() const { return incomplete_; }
  bool needs_annotations() const { return kind_ == Kind::kAnnotated; }
  std::string to_string() const;  // "adaptive", "k=3", "annotated", ...
  static Supervision parse(const std::string& text);

  bool operator==(const Supervision&) const = default;

 private:
  Supervision(Kind kind, int k, bool incomplete)
      : kind_(kind), k_(k), incomplete_(incomplete) {}
  Kind kind_;
  int k_;
  bool incomplete_;
};

struct AggregationVariant {
  Aggregation aggregation = Aggregation::kGvaeAverage;
  Supervision supervision = Supervision::adaptive();
  bool symmetric_kl = false;  // delta from the mean of both KL directions

  std::string to_string() const;
};

// delta_i = KL(q1_i || q2_i), one entry per coordinate.
VectorD per_dim_kl(const DiagonalGaussian& q1, const DiagonalGaussian& q2);
VectorD symmetric_per_dim_kl(const DiagonalGaussian& q1, const DiagonalGaussian& q2);

// tau = (max + min) / 2.
double estimate_threshold(const VectorD& delta);

// Adaptive: mask_i = delta_i < tau. KnownK: the d - k smallest entries, ties
// to the lower index. Annotated: `annotated_mask` is returned as given.
SharedSetEstimate infer_shared_set(const VectorD& delta, const Supervision& supervision,
                                   const Mask* annotated_mask = nullptr);

// Factor index -> latent coordinates. Groups must be disjoint.
using FactorAssignment = std::vector<std::vector<int>>;

// Factor i -> coordinate i for the first num_factors coordinates.
FactorAssignment identity_assignment(int num_factors, int latent_dim);

// False exactly on the coordinates of the annotated changed factors.
Mask annotated_shared_set(const std::vector<int>& changed_factors,
                          const FactorAssignment& assignment, int latent_dim);

std::pair<DiagonalGaussian, DiagonalGaussian> average_gvae(const DiagonalGaussian& q1,
                                                           const DiagonalGaussian& q2,
                                                           const Mask& mask);
std::pair<DiagonalGaussian, DiagonalGaussian> average_mlvae(const DiagonalGaussian& q1,
                                                            const DiagonalGaussian& q2,
                                                            const Mask& mask);
std::pair<DiagonalGaussian, DiagonalGaussian> aggregate(Aggregation a,
                                                        const DiagonalGaussian& q1,
                                                        const DiagonalGaussian& q2,
                                                        const Mask& mask);

// All batch means.
struct WeakLossTerms {
  double loss = 0;  // -(recon1 + recon2) + beta * (kl1 + kl2)
  double recon1 = 0;
  double recon2 = 0;
  double kl1 = 0;
  double kl2 = 0;
  double shared_fraction = 0;  // mean fraction of aggregated coordinates
};

// Paired objective on a batch. The encoder sees [x1; x2] stacked, the noise
// is one (2B x d) standard normal draw (rows of x1 first), and each image is
// reconstructed from a sample of its aggregated posterior. The shared-set
// mask is a constant of the step. Gradients of `loss` are accumulated into
// `grads` when non-null. Annotated supervision reads the batch diagnostics.
template <typename Scalar>
WeakLossTerms weak_elbo(const VaeModel<Scalar>& model, const PairBatch& batch,
                        double beta, const AggregationVariant& variant, Rng& rng,
                        ParameterSet<Scalar>* grads = nullptr);

// The annotated changed factors for each pair of a batch: the true changed
// set, or one uniformly chosen member of it when incomplete.
std::vector<std::vector<int>> batch_annotations(const PairBatch& batch,
                                                bool incomplete, Rng& rng);

// Per-pair -(recon1 + recon2) on freshly sampled pairs, in chunks of
// `chunk` pairs. Each chunk draws the pairs, then the noise, then (for
// incomplete annotations) the revealed factors.
template <typename Scalar>
VectorD weak_reconstruction_terms(const VaeModel<Scalar>& model,
                                  const GroundTruthDataset& dataset,
                                  const SharingMode& mode,
                                  const AggregationVariant& variant, int n_pairs,
                                  Rng& rng, int chunk = 64);

// Mean of weak_reconstruction_terms; lower is better.
template <typename Scalar>
double weak_reconstruction_loss(const VaeModel<Scalar>& model,
                                const GroundTruthDataset& dataset,
                                const SharingMode& mode,
                                const AggregationVariant& variant, int n_pairs,
                                Rng& rng, int chunk = 64);

}  // namespace weakdis

#endif  // WEAKDIS_WEAK_OBJECTIVE_H_
