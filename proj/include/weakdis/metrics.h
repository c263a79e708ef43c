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

#ifndef WEAKDIS_METRICS_H_
#define WEAKDIS_METRICS_H_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "weakdis/common.h"
#include "weakdis/factor_data.h"
#include "weakdis/vae.h"

namespace weakdis {

// Maps factor vectors to representation codes, one row each. Models render
// and encode; oracle representations compute codes directly.
using Representer = std::function<MatrixD(std::span<const FactorVector>)>;

// Posterior means of `model` on the rendered images, in chunks.
template <typename Scalar>
Representer model_representer(const VaeModel<Scalar>& model, const GroundTruthDataset& data,
                              int chunk = 256);

struct RepresentationTable {
  MatrixD codes;     // N x d_z
  IntMatrix factors; // N x d_f
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(codes.rows()); }
};

// Draws n factor vectors uniformly and records their codes.
RepresentationTable compute_representation(const Representer& representer,
                                           const FactorSpace& space, int n, Rng& rng);

enum class Binning { kEqualWidth, kEqualFrequency };

// Per-column histogram codes in [0, bins). Equal width spans [min, max] of the
// column; equal frequency uses rank quantiles (ties share a bin). Constant
// columns map to 0.
IntMatrix discretize(const MatrixD& values, int bins = 20,
                     Binning binning = Binning::kEqualWidth);

// Plug-in estimates in nats.
double discrete_entropy(std::span<const int> a);
double discrete_mutual_information(std::span<const int> a, std::span<const int> b);

// d_z x d_f matrix of MI(code_i; factor_j).
MatrixD mutual_information_matrix(const IntMatrix& codes, const IntMatrix& factors);

struct MetricOptions {
  int bins = 20;
  Binning binning = Binning::kEqualWidth;
  double train_fraction = 0.8;  // DCI and SAP split of the table
  // BetaVAE and FactorVAE scores.
  int batch_size = 64;
  int train_points = 10000;
  int test_points = 5000;
  int variance_samples = 10000;  // FactorVAE global variance estimate
  double prune_std = 0.05;
};

// Messages about degenerate cases accumulate here when non-null.
using Warnings = std::vector<std::string>;

double mig_score(const RepresentationTable& table, const MetricOptions& options = {},
                 Warnings* warnings = nullptr);

struct DciScores {
  double disentanglement = 0;
  double completeness = 0;
  double informativeness = 0;  // mean held-out accuracy over factors
  MatrixD importance;          // d_z x d_f
};
DciScores dci_scores(const RepresentationTable& table, const MetricOptions& options = {},
                     Warnings* warnings = nullptr);
// Scores of a given importance matrix.
double dci_disentanglement(const MatrixD& importance);
double dci_completeness(const MatrixD& importance);

// Per (code, factor): held-out balanced accuracy of a 1-D nearest-mean
// threshold classifier on the discretized code.
MatrixD sap_score_matrix(const RepresentationTable& table, const MetricOptions& options = {});
double sap_score(const RepresentationTable& table, const MetricOptions& options = {});

double modularity_score(const RepresentationTable& table, const MetricOptions& options = {},
                        Warnings* warnings = nullptr);
double modularity_from_mi(const MatrixD& mi, Warnings* warnings = nullptr);

// Held-out accuracy of a logistic classifier predicting the fixed factor
// from mean |r(x1) - r(x2)| over a batch of pairs sharing that factor.
double beta_vae_score(const Representer& representer, const FactorSpace& space,
                      const MetricOptions& options, Rng& rng);

// Majority-vote accuracy of argmin normalized per-dimension variance under
// a fixed factor. Throws if every dimension is pruned.
double factor_vae_score(const Representer& representer, const FactorSpace& space,
                        const MetricOptions& options, Rng& rng, Warnings* warnings = nullptr);

struct MetricScores {
  double mig = 0;
  double dci_disentanglement = 0;
  double dci_completeness = 0;
  double dci_informativeness = 0;
  double sap = 0;
  double modularity = 0;
  double beta_vae = 0;
  double factor_vae = 0;
  Warnings warnings;
};

// Everything at once: one representation table of `table_size` points for
// the table-based scores, then the two sampling-based scores.
MetricScores evaluate_all_metrics(const Representer& representer, const FactorSpace& space,
                                  int table_size, const MetricOptions& options, Rng& rng);

// Names of the eight score fields, in declaration order.
const std::vector<std::string>& metric_names();
double metric_value(const MetricScores& scores, const std::string& name);

}  // namespace weakdis

#endif  // WEAKDIS_METRICS_H_
