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

#ifndef WEAKDIS_VAE_H_
#define WEAKDIS_VAE_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include "weakdis/common.h"
#include "weakdis/factor_data.h"
#include "weakdis/nn.h"

namespace weakdis {

inline constexpr double kMinLogVariance = -12.0;
inline constexpr double kMaxLogVariance = 12.0;

// Per-coordinate Gaussian posterior of one example.
struct DiagonalGaussian {
  VectorD mean;
  VectorD log_variance;

  int dim() const { return static_cast<int>(mean.size()); }
  VectorD variance() const { return log_variance.array().exp(); }
  static DiagonalGaussian from_variance(const VectorD& mean, const VectorD& variance);
};

// A batch of posteriors, one row per example.
template <typename Scalar>
struct GaussianBatch {
  Matrix<Scalar> mean;
  Matrix<Scalar> log_variance;

  int size() const { return static_cast<int>(mean.rows()); }
  DiagonalGaussian row(int i) const;
};

enum class Architecture { kConvStandard, kMlpSmall };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& text);

struct EncoderDecoderConfig {
  Architecture architecture = Architecture::kMlpSmall;
  int latent_dim = 10;
  int mlp_hidden = 256;  // MlpSmall only
};

// Encoder q(z|x) and Bernoulli decoder p(x|z). Encoder outputs are
// [mean | log-variance], the log-variance clamped to
// [kMinLogVariance, kMaxLogVariance].
template <typename Scalar>
class VaeModel {
 public:
  struct EncodeTape {
    typename Sequential<Scalar>::Tape net;
    Matrix<Scalar> raw_log_variance;
  };
  using DecodeTape = typename Sequential<Scalar>::Tape;

  VaeModel(EncoderDecoderConfig config, ImageShape shape, std::uint64_t seed);

  const EncoderDecoderConfig& config() const { return config_; }
  const ImageShape& image_shape() const { return shape_; }
  int latent_dim() const { return config_.latent_dim; }
  std::uint64_t seed() const { return seed_; }

  ParameterSet<Scalar>& params() { return params_; }
  const ParameterSet<Scalar>& params() const { return params_; }

  GaussianBatch<Scalar> encode(const Matrix<Scalar>& x,
                               EncodeTape* tape = nullptr) const;
  // Backpropagates dL/dmean and dL/dlogvar (of the clamped outputs).
  void encode_backward(const EncodeTape& tape, const Matrix<Scalar>& grad_mean,
                       const Matrix<Scalar>& grad_log_variance,
                       ParameterSet<Scalar>& grads) const;

  // Pixel logits, one row per latent row.
  Matrix<Scalar> decode(const Matrix<Scalar>& z, DecodeTape* tape = nullptr) const;
  // Returns dL/dz.
  Matrix<Scalar> decode_backward(const DecodeTape& tape,
                                 const Matrix<Scalar>& grad_logits,
                                 ParameterSet<Scalar>& grads) const;

  DiagonalGaussian encode_one(const VectorD& x) const;
  VectorD decode_one(const VectorD& z) const;

 private:
  EncoderDecoderConfig config_;
  ImageShape shape_;
  std::uint64_t seed_;
  ParameterSet<Scalar> params_;
  Sequential<Scalar> encoder_;
  Sequential<Scalar> decoder_;
};

// z = mean + exp(log_variance / 2) * eps with eps ~ N(0, I).
VectorD reparameterize_sample(const DiagonalGaussian& q, Rng& rng);

template <typename Scalar>
Matrix<Scalar> standard_normal(int rows, int cols, Rng& rng);

// Per-row sum over pixels of x log sigmoid(l) + (1 - x) log(1 - sigmoid(l)),
// evaluated from logits. Throws if x leaves [0, 1].
template <typename Scalar>
Vector<Scalar> bernoulli_log_likelihood(const Matrix<Scalar>& logits,
                                        const Matrix<Scalar>& x);
double bernoulli_log_likelihood(const VectorD& logits, const VectorD& x);

// Per-row KL(N(mean, exp(logvar)) || N(0, I)).
template <typename Scalar>
Vector<Scalar> kl_to_standard_normal(const GaussianBatch<Scalar>& q);
double kl_to_standard_normal(const DiagonalGaussian& q);

struct LossTerms {
  double loss = 0;   // batch mean of -recon + beta * kl
  double recon = 0;  // batch mean log-likelihood
  double kl = 0;     // batch mean KL
};

// Single-observation beta-VAE objective with one reparameterized sample per
// example. Gradients of `loss` are accumulated into `grads` when non-null.
template <typename Scalar>
LossTerms beta_vae_loss(const VaeModel<Scalar>& model, const Matrix<Scalar>& x,
                        double beta, Rng& rng,
                        ParameterSet<Scalar>* grads = nullptr);

struct CheckpointInfo {
  EncoderDecoderConfig config;
  ImageShape image_shape;
  std::uint64_t seed = 0;
  long step = 0;
};

// Binary file: 8-byte magic "WKDSCKPT", u32 header length, JSON header
// (config, tensor names and shapes), then float32 little-endian blobs in
// header order.
template <typename Scalar>
void save_checkpoint(const VaeModel<Scalar>& model, long step,
                     const std::filesystem::path& path);
VaeModel<float> load_checkpoint(const std::filesystem::path& path,
                                CheckpointInfo* info = nullptr);

}  // namespace weakdis

#endif  // WEAKDIS_VAE_H_
