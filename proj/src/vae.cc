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

#include "weakdis/vae.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace weakdis {

DiagonalGaussian DiagonalGaussian::from_variance(const VectorD& mean,
                                                 const VectorD& variance) {
  if ((variance.array() <= 0).any()) {
    throw std::invalid_argument("variances must be positive");
  }
  return {mean, variance.array().log().matrix()};
}

template <typename Scalar>
DiagonalGaussian GaussianBatch<Scalar>::row(int i) const {
  return {mean.row(i).transpose().template cast<double>(),
          log_variance.row(i).transpose().template cast<double>()};
}

std::string to_string(Architecture a) {
  return a == Architecture::kConvStandard ? "conv_standard" : "mlp_small";
}

Architecture parse_architecture(const std::string& text) {
  if (text == "conv_standard" || text == "ConvStandard") return Architecture::kConvStandard;
  if (text == "mlp_small" || text == "MlpSmall") return Architecture::kMlpSmall;
  throw std::invalid_argument("unknown architecture '" + text + "'");
}

// ---------------------------------------------------------------------------
// VaeModel

template <typename Scalar>
VaeModel<Scalar>::VaeModel(EncoderDecoderConfig config, ImageShape shape,
                           std::uint64_t seed)
    : config_(config), shape_(shape), seed_(seed) {
  if (config_.latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  Rng rng = make_rng(seed, 0x1a7e);
  const int d = config_.latent_dim;
  const int pixels = shape_.num_pixels();
  auto dense = [&](Sequential<Scalar>& net, const std::string& name, int in, int out,
                   bool relu) {
    net.add(std::make_unique<Dense<Scalar>>(params_, name, in, out, rng));
    if (relu) net.add(std::make_unique<Relu<Scalar>>(out));
  };

  if (config_.architecture == Architecture::kMlpSmall) {
    const int h = config_.mlp_hidden;
    if (h < 1) throw std::invalid_argument("mlp_hidden must be >= 1");
    dense(encoder_, "encoder/dense1", pixels, h, true);
    dense(encoder_, "encoder/dense2", h, h, true);
    dense(encoder_, "encoder/stats", h, 2 * d, false);
    dense(decoder_, "decoder/dense1", d, h, true);
    dense(decoder_, "decoder/dense2", h, h, true);
    dense(decoder_, "decoder/logits", h, pixels, false);
    return;
  }

  // Four stride-2 4x4 convolutions (32, 32, 64, 64), dense 256, dense 2d;
  // the decoder mirrors it with transposed convolutions.
  if (shape_.height % 16 != 0 || shape_.width % 16 != 0) {
    throw std::invalid_argument("conv_standard needs image sides divisible by 16");
  }
  const int channels[] = {32, 32, 64, 64};
  int h = shape_.height, w = shape_.width, c = shape_.channels;
  for (int i = 0; i < 4; ++i) {
    ConvGeometry g{h, w, c, channels[i], 4, 2};
    encoder_.add(std::make_unique<Conv2d<Scalar>>(
        params_, "encoder/conv" + std::to_string(i + 1), g, rng));
    h = g.out_height();
    w = g.out_width();
    c = channels[i];
    encoder_.add(std::make_unique<Relu<Scalar>>(h * w * c));
  }
  const int flat = h * w * c;
  dense(encoder_, "encoder/dense1", flat, 256, true);
  dense(encoder_, "encoder/stats", 256, 2 * d, false);

  dense(decoder_, "decoder/dense1", d, 256, true);
  dense(decoder_, "decoder/dense2", 256, flat, true);
  const int up_channels[] = {64, 32, 32, shape_.channels};
  for (int i = 0; i < 4; ++i) {
    decoder_.add(std::make_unique<ConvTranspose2d<Scalar>>(
        params_, "decoder/deconv" + std::to_string(i + 1), h, w, c, up_channels[i], 4,
        2, rng));
    h *= 2;
    w *= 2;
    c = up_channels[i];
    if (i < 3) decoder_.add(std::make_unique<Relu<Scalar>>(h * w * c));
  }
}

template <typename Scalar>
GaussianBatch<Scalar> VaeModel<Scalar>::encode(const Matrix<Scalar>& x,
                                               EncodeTape* tape) const {
  if (x.cols() != shape_.num_pixels()) {
    throw std::invalid_argument("encoder input does not match the image shape");
  }
  const int d = config_.latent_dim;
  Matrix<Scalar> stats = encoder_.forward(params_, x, tape ? &tape->net : nullptr);
  GaussianBatch<Scalar> q;
  q.mean = stats.leftCols(d);
  q.log_variance = stats.rightCols(d).cwiseMax(Scalar(kMinLogVariance))
                       .cwiseMin(Scalar(kMaxLogVariance));
  if (tape) tape->raw_log_variance = stats.rightCols(d);
  return q;
}

template <typename Scalar>
void VaeModel<Scalar>::encode_backward(const EncodeTape& tape,
                                       const Matrix<Scalar>& grad_mean,
                                       const Matrix<Scalar>& grad_log_variance,
                                       ParameterSet<Scalar>& grads) const {
  const int d = config_.latent_dim;
  Matrix<Scalar> grad_stats(grad_mean.rows(), 2 * d);
  grad_stats.leftCols(d) = grad_mean;
  const auto& raw = tape.raw_log_variance.array();
  grad_stats.rightCols(d) =
      (raw >= Scalar(kMinLogVariance) && raw <= Scalar(kMaxLogVariance))
          .select(grad_log_variance, Scalar(0));
  encoder_.backward(params_, tape.net, grad_stats, grads);
}

template <typename Scalar>
Matrix<Scalar> VaeModel<Scalar>::decode(const Matrix<Scalar>& z,
                                        DecodeTape* tape) const {
  if (z.cols() != config_.latent_dim) {
    throw std::invalid_argument("decoder input does not match latent_dim");
  }
  return decoder_.forward(params_, z, tape);
}

template <typename Scalar>
Matrix<Scalar> VaeModel<Scalar>::decode_backward(const DecodeTape& tape,
                                                 const Matrix<Scalar>& grad_logits,
                                                 ParameterSet<Scalar>& grads) const {
  return decoder_.backward(params_, tape, grad_logits, grads);
}

template <typename Scalar>
DiagonalGaussian VaeModel<Scalar>::encode_one(const VectorD& x) const {
  Matrix<Scalar> row = x.transpose().template cast<Scalar>();
  return encode(row).row(0);
}

template <typename Scalar>
VectorD VaeModel<Scalar>::decode_one(const VectorD& z) const {
  Matrix<Scalar> row = z.transpose().template cast<Scalar>();
  return decode(row).row(0).transpose().template cast<double>();
}

// ---------------------------------------------------------------------------
// Sampling and losses

VectorD reparameterize_sample(const DiagonalGaussian& q, Rng& rng) {
  std::normal_distribution<double> normal;
  VectorD z(q.dim());
  for (int i = 0; i < q.dim(); ++i) {
    z[i] = q.mean[i] + std::exp(0.5 * q.log_variance[i]) * normal(rng);
  }
  return z;
}

template <typename Scalar>
Matrix<Scalar> standard_normal(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix<Scalar> eps(rows, cols);
  for (Eigen::Index i = 0; i < eps.size(); ++i) {
    eps.data()[i] = static_cast<Scalar>(normal(rng));
  }
  return eps;
}

namespace {

template <typename Derived>
auto softplus(const Eigen::ArrayBase<Derived>& l) {
  using Scalar = typename Derived::Scalar;
  return l.cwiseMax(Scalar(0)) + (-l.abs()).exp().log1p();
}

}  // namespace

template <typename Scalar>
Vector<Scalar> bernoulli_log_likelihood(const Matrix<Scalar>& logits,
                                        const Matrix<Scalar>& x) {
  if (logits.rows() != x.rows() || logits.cols() != x.cols()) {
    throw std::invalid_argument("logits and targets differ in shape");
  }
  if (x.size() > 0 && (x.minCoeff() < Scalar(0) || x.maxCoeff() > Scalar(1))) {
    throw std::invalid_argument("Bernoulli targets must lie in [0, 1]");
  }
  // x log s(l) + (1 - x) log(1 - s(l)) = x l - softplus(l)
  return (x.array() * logits.array() - softplus(logits.array())).rowwise().sum();
}

double bernoulli_log_likelihood(const VectorD& logits, const VectorD& x) {
  MatrixD l = logits.transpose(), t = x.transpose();
  return bernoulli_log_likelihood<double>(l, t)[0];
}

template <typename Scalar>
Vector<Scalar> kl_to_standard_normal(const GaussianBatch<Scalar>& q) {
  const auto& lv = q.log_variance.array();
  return (Scalar(0.5) * (q.mean.array().square() + lv.exp() - lv - Scalar(1)))
      .rowwise()
      .sum();
}

double kl_to_standard_normal(const DiagonalGaussian& q) {
  GaussianBatch<double> b{q.mean.transpose(), q.log_variance.transpose()};
  return kl_to_standard_normal(b)[0];
}

template <typename Scalar>
LossTerms beta_vae_loss(const VaeModel<Scalar>& model, const Matrix<Scalar>& x,
                        double beta, Rng& rng, ParameterSet<Scalar>* grads) {
  if (beta < 0) throw std::invalid_argument("beta must be non-negative");
  const int batch = static_cast<int>(x.rows());
  typename VaeModel<Scalar>::EncodeTape etape;
  typename VaeModel<Scalar>::DecodeTape dtape;
  const GaussianBatch<Scalar> q = model.encode(x, grads ? &etape : nullptr);
  const Matrix<Scalar> eps = standard_normal<Scalar>(batch, model.latent_dim(), rng);
  const Matrix<Scalar> sd = (Scalar(0.5) * q.log_variance.array()).exp().matrix();
  const Matrix<Scalar> z = q.mean + sd.cwiseProduct(eps);
  const Matrix<Scalar> logits = model.decode(z, grads ? &dtape : nullptr);

  const Vector<Scalar> recon = bernoulli_log_likelihood(logits, x);
  const Vector<Scalar> kl = kl_to_standard_normal(q);
  LossTerms terms;
  terms.recon = static_cast<double>(recon.sum()) / batch;
  terms.kl = static_cast<double>(kl.sum()) / batch;
  terms.loss = -terms.recon + beta * terms.kl;

  if (grads) {
    const Scalar inv_b = Scalar(1) / batch;
    const auto b = static_cast<Scalar>(beta);
    const Matrix<Scalar> grad_logits =
        ((Scalar(1) / (Scalar(1) + (-logits.array()).exp())) - x.array()) * inv_b;
    const Matrix<Scalar> grad_z = model.decode_backward(dtape, grad_logits, *grads);
    const Matrix<Scalar> grad_mean = grad_z + b * inv_b * q.mean;
    const Matrix<Scalar> grad_lv =
        (grad_z.array() * eps.array() * sd.array() * Scalar(0.5) +
         b * inv_b * Scalar(0.5) * (q.log_variance.array().exp() - Scalar(1)))
            .matrix();
    model.encode_backward(etape, grad_mean, grad_lv, *grads);
  }
  return terms;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'W', 'K', 'D', 'S', 'C', 'K', 'P', 'T'};
}

template <typename Scalar>
void save_checkpoint(const VaeModel<Scalar>& model, long step,
                     const std::filesystem::path& path) {
  using nlohmann::json;
  const auto& params = model.params();
  json tensors = json::array();
  for (int i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", params.name(i)},
                       {"rows", params[i].rows()},
                       {"cols", params[i].cols()}});
  }
  const auto& shape = model.image_shape();
  json header = {
      {"architecture", to_string(model.config().architecture)},
      {"latent_dim", model.config().latent_dim},
      {"mlp_hidden", model.config().mlp_hidden},
      {"image_shape", {shape.height, shape.width, shape.channels}},
      {"seed", model.seed()},
      {"step", step},
      {"dtype", "float32"},
      {"byte_order", "little"},
      {"tensors", tensors},
  };
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  const auto len = static_cast<std::uint32_t>(text.size());
  const unsigned char len_bytes[4] = {static_cast<unsigned char>(len & 0xFF),
                                      static_cast<unsigned char>((len >> 8) & 0xFF),
                                      static_cast<unsigned char>((len >> 16) & 0xFF),
                                      static_cast<unsigned char>((len >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(len_bytes), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (int i = 0; i < params.size(); ++i) {
    const Matrix<float> blob = params[i].template cast<float>();
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
  }
}

VaeModel<float> load_checkpoint(const std::filesystem::path& path,
                                CheckpointInfo* info) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  unsigned char len_bytes[4];
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(len_bytes), 4);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const std::uint32_t len = len_bytes[0] | (len_bytes[1] << 8) | (len_bytes[2] << 16) |
                            (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  std::string text(len, '\0');
  in.read(text.data(), len);
  const json header = json::parse(text);

  EncoderDecoderConfig config;
  config.architecture = parse_architecture(header.at("architecture"));
  config.latent_dim = header.at("latent_dim");
  config.mlp_hidden = header.at("mlp_hidden");
  const auto dims = header.at("image_shape").get<std::vector<int>>();
  const ImageShape shape{dims.at(0), dims.at(1), dims.at(2)};
  const std::uint64_t seed = header.at("seed");
  VaeModel<float> model(config, shape, seed);
  auto& params = model.params();
  const auto& tensors = header.at("tensors");
  if (static_cast<int>(tensors.size()) != params.size()) {
    throw std::runtime_error("checkpoint tensor count does not match the architecture");
  }
  for (const auto& t : tensors) {
    const int handle = params.find(t.at("name"));
    if (handle < 0 || params[handle].rows() != t.at("rows").get<Eigen::Index>() ||
        params[handle].cols() != t.at("cols").get<Eigen::Index>()) {
      throw std::runtime_error("checkpoint tensor " + t.at("name").get<std::string>() +
                               " does not match the architecture");
    }
    in.read(reinterpret_cast<char*>(params[handle].data()),
            static_cast<std::streamsize>(params[handle].size() * sizeof(float)));
  }
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  if (info) *info = {config, shape, seed, header.at("step").get<long>()};
  return model;
}

template struct GaussianBatch<float>;
template struct GaussianBatch<double>;
template class VaeModel<float>;
template class VaeModel<double>;
template Matrix<float> standard_normal<float>(int, int, Rng&);
template Matrix<double> standard_normal<double>(int, int, Rng&);
template Vector<float> bernoulli_log_likelihood(const Matrix<float>&, const Matrix<float>&);
template Vector<double> bernoulli_log_likelihood(const Matrix<double>&, const Matrix<double>&);
template Vector<float> kl_to_standard_normal(const GaussianBatch<float>&);
template Vector<double> kl_to_standard_normal(const GaussianBatch<double>&);
template LossTerms beta_vae_loss(const VaeModel<float>&, const Matrix<float>&, double,
                                 Rng&, ParameterSet<float>*);
template LossTerms beta_vae_loss(const VaeModel<double>&, const Matrix<double>&, double,
                                 Rng&, ParameterSet<double>*);
template void save_checkpoint(const VaeModel<float>&, long, const std::filesystem::path&);
template void save_checkpoint(const VaeModel<double>&, long, const std::filesystem::path&);

}  // namespace weakdis
