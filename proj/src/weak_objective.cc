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

#include "weakdis/weak_objective.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace weakdis {

std::string to_string(Aggregation a) {
  return a == Aggregation::kGvaeAverage ? "gvae" : "mlvae";
}

Aggregation parse_aggregation(const std::string& text) {
  if (text == "gvae" || text == "ada-gvae") return Aggregation::kGvaeAverage;
  if (text == "mlvae" || text == "ada-mlvae") return Aggregation::kMlvaeProduct;
  throw ConfigError("unknown aggregation '" + text + "'");
}

Supervision Supervision::known_k(int k) {
  if (k < 1) throw ConfigError("known k must be >= 1");
  return {Kind::kKnownK, k, false};
}

std::string Supervision::to_string() const {
  switch (kind_) {
    case Kind::kAdaptive:
      return "adaptive";
    case Kind::kKnownK:
      return "k=" + std::to_string(k_);
    case Kind::kAnnotated:
      return incomplete_ ? "annotated-one" : "annotated";
    case Kind::kNone:
      return "none";
  }
  return "?";
}

Supervision Supervision::parse(const std::string& text) {
  if (text == "adaptive") return adaptive();
  if (text == "annotated") return annotated(false);
  if (text == "annotated-one") return annotated(true);
  if (text == "none") return none();
  if (text.rfind("k=", 0) == 0) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(text.substr(2), &used);
      if (used == text.size() - 2) return known_k(k);
    } catch (const std::logic_error&) {
    }
  }
  throw ConfigError("unknown supervision '" + text + "'");
}

std::string AggregationVariant::to_string() const {
  return weakdis::to_string(aggregation) + "/" + supervision.to_string() +
         (symmetric_kl ? "/symmetric" : "");
}

namespace {

void require_same_dim(const DiagonalGaussian& q1, const DiagonalGaussian& q2) {
  if (q1.dim() != q2.dim() || q1.log_variance.size() != q1.dim() ||
      q2.log_variance.size() != q2.dim()) {
    throw std::invalid_argument("posteriors differ in dimension");
  }
}

// KL(N(m1, e^a) || N(m2, e^b)) per coordinate.
inline double kl_coordinate(double m1, double a, double m2, double b) {
  const double d = m1 - m2;
  return std::max(0.0, 0.5 * (b - a + std::exp(a - b) + d * d * std::exp(-b) - 1.0));
}

}  // namespace

VectorD per_dim_kl(const DiagonalGaussian& q1, const DiagonalGaussian& q2) {
  require_same_dim(q1, q2);
  VectorD delta(q1.dim());
  for (int i = 0; i < q1.dim(); ++i) {
    delta[i] = kl_coordinate(q1.mean[i], q1.log_variance[i], q2.mean[i], q2.log_variance[i]);
  }
  return delta;
}

VectorD symmetric_per_dim_kl(const DiagonalGaussian& q1, const DiagonalGaussian& q2) {
  return 0.5 * (per_dim_kl(q1, q2) + per_dim_kl(q2, q1));
}

double estimate_threshold(const VectorD& delta) {
  if (delta.size() == 0) throw std::invalid_argument("delta is empty");
  return 0.5 * (delta.maxCoeff() + delta.minCoeff());
}

SharedSetEstimate infer_shared_set(const VectorD& delta, const Supervision& supervision,
                                   const Mask* annotated_mask) {
  const int d = static_cast<int>(delta.size());
  if (d == 0) throw std::invalid_argument("delta is empty");
  SharedSetEstimate est;
  est.delta = delta;
  est.mask.assign(d, false);
  switch (supervision.kind()) {
    case Supervision::Kind::kAdaptive: {
      const double tau = estimate_threshold(delta);
      est.tau = tau;
      for (int i = 0; i < d; ++i) est.mask[i] = delta[i] < tau;
      break;
    }
    case Supervision::Kind::kKnownK: {
      const int k = supervision.k();
      if (k < 1 || k > d - 1) {
        throw ConfigError("known k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(d - 1) + "]");
      }
      std::vector<int> order(d);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return delta[a] < delta[b]; });
      for (int i = 0; i < d - k; ++i) est.mask[order[i]] = true;
      break;
    }
    case Supervision::Kind::kAnnotated:
      if (!annotated_mask || static_cast<int>(annotated_mask->size()) != d) {
        throw std::invalid_argument("annotated supervision needs a mask of length d");
      }
      est.mask = *annotated_mask;
      break;
    case Supervision::Kind::kNone:
      break;
  }
  return est;
}

FactorAssignment identity_assignment(int num_factors, int latent_dim) {
  if (num_factors > latent_dim) {
    throw ConfigError("annotated supervision needs latent_dim >= number of factors");
  }
  FactorAssignment a(num_factors);
  for (int f = 0; f < num_factors; ++f) a[f] = {f};
  return a;
}

Mask annotated_shared_set(const std::vector<int>& changed_factors,
                          const FactorAssignment& assignment, int latent_dim) {
  std::vector<int> owner(latent_dim, -1);
  for (std::size_t f = 0; f < assignment.size(); ++f) {
    for (int dim : assignment[f]) {
      if (dim < 0 || dim >= latent_dim) {
        throw std::invalid_argument("assignment refers to a coordinate out of range");
      }
      if (owner[dim] >= 0) throw std::invalid_argument("assignment groups overlap");
      owner[dim] = static_cast<int>(f);
    }
  }
  Mask mask(latent_dim, true);
  for (int f : changed_factors) {
    if (f < 0 || f >= static_cast<int>(assignment.size())) {
      throw std::invalid_argument("annotated factor index out of range");
    }
    for (int dim : assignment[f]) mask[dim] = false;
  }
  return mask;
}

namespace {

void require_mask(const DiagonalGaussian& q1, const DiagonalGaussian& q2, const Mask& mask) {
  require_same_dim(q1, q2);
  if (static_cast<int>(mask.size()) != q1.dim()) {
    throw std::invalid_argument("mask length differs from the posterior dimension");
  }
}

}  // namespace

std::pair<DiagonalGaussian, DiagonalGaussian> average_gvae(const DiagonalGaussian& q1,
                                                           const DiagonalGaussian& q2,
                                                           const Mask& mask) {
  require_mask(q1, q2, mask);
  DiagonalGaussian a = q1, b = q2;
  for (int i = 0; i < q1.dim(); ++i) {
    if (!mask[i]) continue;
    const double mean = 0.5 * (q1.mean[i] + q2.mean[i]);
    const double var =
        0.5 * (std::exp(q1.log_variance[i]) + std::exp(q2.log_variance[i]));
    a.mean[i] = b.mean[i] = mean;
    a.log_variance[i] = b.log_variance[i] = std::log(var);
  }
  return {a, b};
}

std::pair<DiagonalGaussian, DiagonalGaussian> average_mlvae(const DiagonalGaussian& q1,
                                                            const DiagonalGaussian& q2,
                                                            const Mask& mask) {
  require_mask(q1, q2, mask);
  if (!q1.log_variance.allFinite() || !q2.log_variance.allFinite()) {
    throw std::invalid_argument("variances must be positive and finite");
  }
  DiagonalGaussian a = q1, b = q2;
  for (int i = 0; i < q1.dim(); ++i) {
    if (!mask[i]) continue;
    const double p1 = std::exp(-q1.log_variance[i]), p2 = std::exp(-q2.log_variance[i]);
    const double precision = p1 + p2;
    a.mean[i] = b.mean[i] = (q1.mean[i] * p1 + q2.mean[i] * p2) / precision;
    a.log_variance[i] = b.log_variance[i] = -std::log(precision);
  }
  return {a, b};
}

std::pair<DiagonalGaussian, DiagonalGaussian> aggregate(Aggregation a,
                                                        const DiagonalGaussian& q1,
                                                        const DiagonalGaussian& q2,
                                                        const Mask& mask) {
  return a == Aggregation::kGvaeAverage ? average_gvae(q1, q2, mask)
                                        : average_mlvae(q1, q2, mask);
}

std::vector<std::vector<int>> batch_annotations(const PairBatch& batch, bool incomplete,
                                                Rng& rng) {
  const IntMatrix& changed = batch.diagnostics().changed;
  std::vector<std::vector<int>> out(changed.rows());
  for (Eigen::Index r = 0; r < changed.rows(); ++r) {
    for (Eigen::Index f = 0; f < changed.cols(); ++f) {
      if (changed(r, f)) out[r].push_back(static_cast<int>(f));
    }
    if (incomplete && out[r].size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, out[r].size() - 1);
      out[r] = {out[r][pick(rng)]};
    }
  }
  return out;
}

namespace {

// Forward state of one paired pass, kept for the backward pass.
template <typename Scalar>
struct PairedPass {
  typename VaeModel<Scalar>::EncodeTape etape;
  typename VaeModel<Scalar>::DecodeTape dtape;
  GaussianBatch<Scalar> q;        // 2B rows: x1 then x2
  GaussianBatch<Scalar> q_tilde;  // aggregated
  Matrix<Scalar> eps, sd, x, logits;
  std::vector<Mask> masks;
  Vector<Scalar> recon, kl;  // 2B rows
  double shared_fraction = 0;
};

template <typename Scalar>
void run_paired_pass(const VaeModel<Scalar>& model, const MatrixF& x1, const MatrixF& x2,
                     const AggregationVariant& variant, Rng& rng,
                     const PairBatch* annotated_batch, bool keep_tapes,
                     PairedPass<Scalar>& pass) {
  const int batch = static_cast<int>(x1.rows());
  const int d = model.latent_dim();
  if (x2.rows() != batch || x1.cols() != x2.cols()) {
    throw std::invalid_argument("pair halves differ in shape");
  }
  pass.x.resize(2 * batch, x1.cols());
  pass.x.topRows(batch) = x1.cast<Scalar>();
  pass.x.bottomRows(batch) = x2.cast<Scalar>();
  pass.q = model.encode(pass.x, keep_tapes ? &pass.etape : nullptr);
  pass.eps = standard_normal<Scalar>(2 * batch, d, rng);

  std::vector<std::vector<int>> annotations;
  FactorAssignment assignment;
  if (variant.supervision.needs_annotations()) {
    if (!annotated_batch || !annotated_batch->has_diagnostics()) {
      throw std::invalid_argument("annotated supervision needs pair diagnostics");
    }
    annotations = batch_annotations(*annotated_batch, variant.supervision.incomplete(), rng);
    assignment = identity_assignment(
        static_cast<int>(annotated_batch->diagnostics().changed.cols()), d);
  }

  pass.q_tilde = pass.q;
  pass.masks.assign(batch, Mask(d, false));
  long shared = 0;
  for (int r = 0; r < batch; ++r) {
    const DiagonalGaussian q1 = pass.q.row(r), q2 = pass.q.row(batch + r);
    const VectorD delta = variant.symmetric_kl ? symmetric_per_dim_kl(q1, q2)
                                               : per_dim_kl(q1, q2);
    Mask annotated;
    if (!annotations.empty()) annotated = annotated_shared_set(annotations[r], assignment, d);
    Mask mask = infer_shared_set(delta, variant.supervision,
                                 annotations.empty() ? nullptr : &annotated)
                    .mask;
    for (int i = 0; i < d; ++i) {
      if (!mask[i]) continue;
      ++shared;
      const Scalar m1 = pass.q.mean(r, i), m2 = pass.q.mean(batch + r, i);
      const Scalar a1 = pass.q.log_variance(r, i), a2 = pass.q.log_variance(batch + r, i);
      Scalar mean, log_var;
      if (variant.aggregation == Aggregation::kGvaeAverage) {
        mean = Scalar(0.5) * (m1 + m2);
        log_var = std::log(Scalar(0.5) * (std::exp(a1) + std::exp(a2)));
      } else {
        const Scalar p1 = std::exp(-a1), p2 = std::exp(-a2);
        mean = (m1 * p1 + m2 * p2) / (p1 + p2);
        log_var = -std::log(p1 + p2);
      }
      pass.q_tilde.mean(r, i) = pass.q_tilde.mean(batch + r, i) = mean;
      pass.q_tilde.log_variance(r, i) = pass.q_tilde.log_variance(batch + r, i) = log_var;
    }
    pass.masks[r] = std::move(mask);
  }
  pass.shared_fraction = batch > 0 ? static_cast<double>(shared) / (batch * d) : 0.0;

  pass.sd = (Scalar(0.5) * pass.q_tilde.log_variance.array()).exp().matrix();
  const Matrix<Scalar> z = pass.q_tilde.mean + pass.sd.cwiseProduct(pass.eps);
  pass.logits = model.decode(z, keep_tapes ? &pass.dtape : nullptr);
  pass.recon = bernoulli_log_likelihood(pass.logits, pass.x);
  pass.kl = kl_to_standard_normal(pass.q_tilde);
}

}  // namespace

template <typename Scalar>
WeakLossTerms weak_elbo(const VaeModel<Scalar>& model, const PairBatch& batch,
                        double beta, const AggregationVariant& variant, Rng& rng,
                        ParameterSet<Scalar>* grads) {
  if (beta < 0) throw std::invalid_argument("beta must be non-negative");
  const int n = batch.size();
  if (n < 1) throw std::invalid_argument("empty pair batch");
  const int d = model.latent_dim();
  PairedPass<Scalar> pass;
  run_paired_pass(model, batch.x1, batch.x2, variant, rng, &batch, grads != nullptr, pass);

  WeakLossTerms t;
  t.recon1 = static_cast<double>(pass.recon.head(n).sum()) / n;
  t.recon2 = static_cast<double>(pass.recon.tail(n).sum()) / n;
  t.kl1 = static_cast<double>(pass.kl.head(n).sum()) / n;
  t.kl2 = static_cast<double>(pass.kl.tail(n).sum()) / n;
  t.loss = -(t.recon1 + t.recon2) + beta * (t.kl1 + t.kl2);
  t.shared_fraction = pass.shared_fraction;
  if (!grads) return t;

  // Gradients with respect to the aggregated posteriors.
  const Scalar inv_n = Scalar(1) / n;
  const auto b = static_cast<Scalar>(beta);
  const Matrix<Scalar> grad_logits =
      ((Scalar(1) / (Scalar(1) + (-pass.logits.array()).exp())) - pass.x.array()) * inv_n;
  const Matrix<Scalar> grad_z = model.decode_backward(pass.dtape, grad_logits, *grads);
  const Matrix<Scalar> g_mean_t = grad_z + b * inv_n * pass.q_tilde.mean;
  const Matrix<Scalar> g_lv_t =
      (grad_z.array() * pass.eps.array() * pass.sd.array() * Scalar(0.5) +
       b * inv_n * Scalar(0.5) * (pass.q_tilde.log_variance.array().exp() - Scalar(1)))
          .matrix();

  // Back through the aggregation; the masks are constants.
  Matrix<Scalar> g_mean = g_mean_t, g_lv = g_lv_t;
  for (int r = 0; r < n; ++r) {
    for (int i = 0; i < d; ++i) {
      if (!pass.masks[r][i]) continue;
      const Scalar gm = g_mean_t(r, i) + g_mean_t(n + r, i);
      const Scalar gl = g_lv_t(r, i) + g_lv_t(n + r, i);
      const Scalar a1 = pass.q.log_variance(r, i), a2 = pass.q.log_variance(n + r, i);
      if (variant.aggregation == Aggregation::kGvaeAverage) {
        // d log((e^a1 + e^a2) / 2) / d a1 = sigmoid(a1 - a2)
        const Scalar w1 = Scalar(1) / (Scalar(1) + std::exp(a2 - a1));
        g_mean(r, i) = g_mean(n + r, i) = Scalar(0.5) * gm;
        g_lv(r, i) = gl * w1;
        g_lv(n + r, i) = gl * (Scalar(1) - w1);
      } else {
        // Precision weights w_j = p_j / (p1 + p2).
        const Scalar w1 = Scalar(1) / (Scalar(1) + std::exp(a1 - a2));
        const Scalar w2 = Scalar(1) - w1;
        const Scalar mt = pass.q_tilde.mean(r, i);
        g_mean(r, i) = gm * w1;
        g_mean(n + r, i) = gm * w2;
        g_lv(r, i) = -gm * w1 * (pass.q.mean(r, i) - mt) + gl * w1;
        g_lv(n + r, i) = -gm * w2 * (pass.q.mean(n + r, i) - mt) + gl * w2;
      }
    }
  }
  model.encode_backward(pass.etape, g_mean, g_lv, *grads);
  return t;
}

template <typename Scalar>
VectorD weak_reconstruction_terms(const VaeModel<Scalar>& model,
                                  const GroundTruthDataset& dataset,
                                  const SharingMode& mode,
                                  const AggregationVariant& variant, int n_pairs,
                                  Rng& rng, int chunk) {
  if (n_pairs < 1) throw std::invalid_argument("n_pairs must be >= 1");
  if (chunk < 1) throw std::invalid_argument("chunk must be >= 1");
  VectorD out(n_pairs);
  const bool annotated = variant.supervision.needs_annotations();
  for (int start = 0; start < n_pairs; start += chunk) {
    const int size = std::min(chunk, n_pairs - start);
    const PairBatch batch = make_pair_batch(dataset, mode, size, rng, annotated);
    PairedPass<Scalar> pass;
    run_paired_pass(model, batch.x1, batch.x2, variant, rng, &batch, false, pass);
    for (int r = 0; r < size; ++r) {
      out[start + r] = -static_cast<double>(pass.recon[r] + pass.recon[size + r]);
    }
  }
  return out;
}

template <typename Scalar>
double weak_reconstruction_loss(const VaeModel<Scalar>& model,
                                const GroundTruthDataset& dataset,
                                const SharingMode& mode,
                                const AggregationVariant& variant, int n_pairs,
                                Rng& rng, int chunk) {
  return weak_reconstruction_terms(model, dataset, mode, variant, n_pairs, rng, chunk).mean();
}

#define WEAKDIS_INSTANTIATE(Scalar)                                                    \
  template WeakLossTerms weak_elbo(const VaeModel<Scalar>&, const PairBatch&, double, \
                                   const AggregationVariant&, Rng&,                   \
                                   ParameterSet<Scalar>*);                            \
  template VectorD weak_reconstruction_terms(const VaeModel<Scalar>&,                 \
                                             const GroundTruthDataset&,               \
                                             const SharingMode&,                      \
                                             const AggregationVariant&, int, Rng&, int); \
  template double weak_reconstruction_loss(const VaeModel<Scalar>&,                   \
                                           const GroundTruthDataset&,                 \
                                           const SharingMode&,                        \
                                           const AggregationVariant&, int, Rng&, int);
WEAKDIS_INSTANTIATE(float)
WEAKDIS_INSTANTIATE(double)
#undef WEAKDIS_INSTANTIATE

}  // namespace weakdis
