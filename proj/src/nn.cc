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

#include "weakdis/nn.h"

#include <cmath>

namespace weakdis {

// ---------------------------------------------------------------------------
// ParameterSet

template <typename Scalar>
int ParameterSet<Scalar>::add(std::string name, Matrix<Scalar> value) {
  if (find(name) >= 0) throw std::invalid_argument("duplicate parameter " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return size() - 1;
}

template <typename Scalar>
int ParameterSet<Scalar>::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (names_[i] == name) return i;
  }
  return -1;
}

template <typename Scalar>
std::int64_t ParameterSet<Scalar>::num_scalars() const {
  std::int64_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

template <typename Scalar>
ParameterSet<Scalar> ParameterSet<Scalar>::zeros_like() const {
  ParameterSet out;
  for (int i = 0; i < size(); ++i) {
    out.add(names_[i], Matrix<Scalar>::Zero(values_[i].rows(), values_[i].cols()));
  }
  return out;
}

template <typename Scalar>
void ParameterSet<Scalar>::set_zero() {
  for (auto& v : values_) v.setZero();
}

template <typename Scalar>
bool ParameterSet<Scalar>::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

namespace {

template <typename Scalar>
Matrix<Scalar> glorot_uniform(int rows, int cols, int fan_in, int fan_out,
                              Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix<Scalar> w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(u(rng));
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense / Relu

template <typename Scalar>
Dense<Scalar>::Dense(ParameterSet<Scalar>& params, const std::string& name,
                     int in, int out, Rng& rng)
    : in_(in), out_(out) {
  kernel_ = params.add(name + "/kernel", glorot_uniform<Scalar>(in, out, in, out, rng));
  bias_ = params.add(name + "/bias", Matrix<Scalar>::Zero(1, out));
}

template <typename Scalar>
Matrix<Scalar> Dense<Scalar>::forward(const ParameterSet<Scalar>& params,
                                      const Matrix<Scalar>& x) const {
  if (x.cols() != in_) throw std::invalid_argument("dense input width mismatch");
  Matrix<Scalar> y = x * params[kernel_];
  y.rowwise() += params[bias_].row(0);
  return y;
}

template <typename Scalar>
Matrix<Scalar> Dense<Scalar>::backward(const ParameterSet<Scalar>& params,
                                       const Matrix<Scalar>& x,
                                       const Matrix<Scalar>&,
                                       const Matrix<Scalar>& grad_y,
                                       ParameterSet<Scalar>& grads) const {
  grads[kernel_].noalias() += x.transpose() * grad_y;
  grads[bias_] += grad_y.colwise().sum();
  return grad_y * params[kernel_].transpose();
}

template <typename Scalar>
Matrix<Scalar> Relu<Scalar>::forward(const ParameterSet<Scalar>&,
                                     const Matrix<Scalar>& x) const {
  return x.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> Relu<Scalar>::backward(const ParameterSet<Scalar>&,
                                      const Matrix<Scalar>&,
                                      const Matrix<Scalar>& y,
                                      const Matrix<Scalar>& grad_y,
                                      ParameterSet<Scalar>&) const {
  return (y.array() > Scalar(0)).select(grad_y, Scalar(0));
}

// ---------------------------------------------------------------------------
// Convolutions

int ConvGeometry::pad_top() const {
  const int total = std::max((out_height() - 1) * stride + kernel - in_height, 0);
  return total / 2;
}

int ConvGeometry::pad_left() const {
  const int total = std::max((out_width() - 1) * stride + kernel - in_width, 0);
  return total / 2;
}

namespace {

// Rows: (batch, oy, ox); columns: (ky, kx, channel).
template <typename Scalar>
Matrix<Scalar> im2col(const ConvGeometry& g, const Scalar* x, int batch) {
  const int ho = g.out_height(), wo = g.out_width(), c = g.in_channels;
  const int top = g.pad_top(), left = g.pad_left();
  Matrix<Scalar> cols = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(batch) * ho * wo,
                                             g.patch_size());
  for (int b = 0; b < batch; ++b) {
    const Scalar* image = x + static_cast<std::size_t>(b) * g.in_height * g.in_width * c;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        Scalar* row = cols.row((static_cast<Eigen::Index>(b) * ho + oy) * wo + ox).data();
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - top + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - left + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            const Scalar* src = image + (static_cast<std::size_t>(iy) * g.in_width + ix) * c;
            std::copy(src, src + c, row + (ky * g.kernel + kx) * c);
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatters patch rows back onto the input grid.
template <typename Scalar>
void col2im(const ConvGeometry& g, const Matrix<Scalar>& cols, int batch, Scalar* x) {
  const int ho = g.out_height(), wo = g.out_width(), c = g.in_channels;
  const int top = g.pad_top(), left = g.pad_left();
  for (int b = 0; b < batch; ++b) {
    Scalar* image = x + static_cast<std::size_t>(b) * g.in_height * g.in_width * c;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const Scalar* row =
            cols.row((static_cast<Eigen::Index>(b) * ho + oy) * wo + ox).data();
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - top + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - left + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            Scalar* dst = image + (static_cast<std::size_t>(iy) * g.in_width + ix) * c;
            const Scalar* src = row + (ky * g.kernel + kx) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
}

template <typename Scalar>
using MapMatrix = Eigen::Map<Matrix<Scalar>>;
template <typename Scalar>
using ConstMapMatrix = Eigen::Map<const Matrix<Scalar>>;

}  // namespace

template <typename Scalar>
Conv2d<Scalar>::Conv2d(ParameterSet<Scalar>& params, const std::string& name,
                       ConvGeometry geometry, Rng& rng)
    : g_(geometry) {
  const int fan_in = g_.kernel * g_.kernel * g_.in_channels;
  const int fan_out = g_.kernel * g_.kernel * g_.out_channels;
  kernel_ = params.add(name + "/kernel", glorot_uniform<Scalar>(g_.patch_size(),
                                                                g_.out_channels,
                                                                fan_in, fan_out, rng));
  bias_ = params.add(name + "/bias", Matrix<Scalar>::Zero(1, g_.out_channels));
}

template <typename Scalar>
int Conv2d<Scalar>::input_size() const {
  return g_.in_height * g_.in_width * g_.in_channels;
}

template <typename Scalar>
int Conv2d<Scalar>::output_size() const {
  return g_.out_height() * g_.out_width() * g_.out_channels;
}

template <typename Scalar>
Matrix<Scalar> Conv2d<Scalar>::forward(const ParameterSet<Scalar>& params,
                                       const Matrix<Scalar>& x) const {
  if (x.cols() != input_size()) throw std::invalid_argument("conv input size mismatch");
  const int batch = static_cast<int>(x.rows());
  const Matrix<Scalar> cols = im2col(g_, x.data(), batch);
  Matrix<Scalar> y(batch, output_size());
  MapMatrix<Scalar> out(y.data(), cols.rows(), g_.out_channels);
  out.noalias() = cols * params[kernel_];
  out.rowwise() += params[bias_].row(0);
  return y;
}

template <typename Scalar>
Matrix<Scalar> Conv2d<Scalar>::backward(const ParameterSet<Scalar>& params,
                                        const Matrix<Scalar>& x,
                                        const Matrix<Scalar>&,
                                        const Matrix<Scalar>& grad_y,
                                        ParameterSet<Scalar>& grads) const {
  const int batch = static_cast<int>(x.rows());
  const Matrix<Scalar> cols = im2col(g_, x.data(), batch);
  ConstMapMatrix<Scalar> gy(grad_y.data(), cols.rows(), g_.out_channels);
  grads[kernel_].noalias() += cols.transpose() * gy;
  grads[bias_] += gy.colwise().sum();
  const Matrix<Scalar> grad_cols = gy * params[kernel_].transpose();
  Matrix<Scalar> grad_x = Matrix<Scalar>::Zero(batch, input_size());
  col2im(g_, grad_cols, batch, grad_x.data());
  return grad_x;
}

template <typename Scalar>
ConvTranspose2d<Scalar>::ConvTranspose2d(ParameterSet<Scalar>& params,
                                         const std::string& name, int in_height,
                                         int in_width, int in_channels,
                                         int out_channels, int kernel, int stride,
                                         Rng& rng)
    : adjoint_{in_height * stride, in_width * stride, out_channels, in_channels,
               kernel, stride} {
  const int fan_in = kernel * kernel * in_channels;
  const int fan_out = kernel * kernel * out_channels;
  kernel_ = params.add(name + "/kernel",
                       glorot_uniform<Scalar>(adjoint_.patch_size(), in_channels,
                                              fan_in, fan_out, rng));
  bias_ = params.add(name + "/bias", Matrix<Scalar>::Zero(1, out_channels));
}

template <typename Scalar>
int ConvTranspose2d<Scalar>::input_size() const {
  return adjoint_.out_height() * adjoint_.out_width() * adjoint_.out_channels;
}

template <typename Scalar>
int ConvTranspose2d<Scalar>::output_size() const {
  return adjoint_.in_height * adjoint_.in_width * adjoint_.in_channels;
}

template <typename Scalar>
Matrix<Scalar> ConvTranspose2d<Scalar>::forward(const ParameterSet<Scalar>& params,
                                                const Matrix<Scalar>& x) const {
  if (x.cols() != input_size()) {
    throw std::invalid_argument("transposed conv input size mismatch");
  }
  const int batch = static_cast<int>(x.rows());
  ConstMapMatrix<Scalar> in(x.data(),
                            static_cast<Eigen::Index>(batch) * adjoint_.out_height() *
                                adjoint_.out_width(),
                            adjoint_.out_channels);
  const Matrix<Scalar> cols = in * params[kernel_].transpose();
  Matrix<Scalar> y = Matrix<Scalar>::Zero(batch, output_size());
  col2im(adjoint_, cols, batch, y.data());
  MapMatrix<Scalar> pixels(y.data(), y.size() / adjoint_.in_channels,
                           adjoint_.in_channels);
  pixels.rowwise() += params[bias_].row(0);
  return y;
}

template <typename Scalar>
Matrix<Scalar> ConvTranspose2d<Scalar>::backward(const ParameterSet<Scalar>& params,
                                                 const Matrix<Scalar>& x,
                                                 const Matrix<Scalar>&,
                                                 const Matrix<Scalar>& grad_y,
                                                 ParameterSet<Scalar>& grads) const {
  const int batch = static_cast<int>(x.rows());
  ConstMapMatrix<Scalar> gy_pixels(grad_y.data(), grad_y.size() / adjoint_.in_channels,
                                   adjoint_.in_channels);
  grads[bias_] += gy_pixels.colwise().sum();
  const Matrix<Scalar> grad_cols = im2col(adjoint_, grad_y.data(), batch);
  ConstMapMatrix<Scalar> in(x.data(), grad_cols.rows(), adjoint_.out_channels);
  grads[kernel_].noalias() += grad_cols.transpose() * in;
  Matrix<Scalar> grad_x(batch, input_size());
  MapMatrix<Scalar> gx(grad_x.data(), grad_cols.rows(), adjoint_.out_channels);
  gx.noalias() = grad_cols * params[kernel_];
  return grad_x;
}

// ---------------------------------------------------------------------------
// Sequential

template <typename Scalar>
void Sequential<Scalar>::add(std::unique_ptr<Layer<Scalar>> layer) {
  if (!layers_.empty() && layers_.back()->output_size() != layer->input_size()) {
    throw std::invalid_argument("layer sizes do not chain");
  }
  layers_.push_back(std::move(layer));
}

template <typename Scalar>
Matrix<Scalar> Sequential<Scalar>::forward(const ParameterSet<Scalar>& params,
                                           const Matrix<Scalar>& x,
                                           Tape* tape) const {
  if (x.cols() != input_size()) {
    throw std::invalid_argument("network input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(input_size()));
  }
  if (tape) {
    tape->clear();
    tape->push_back(x);
    for (const auto& layer : layers_) tape->push_back(layer->forward(params, tape->back()));
    return tape->back();
  }
  Matrix<Scalar> a = x;
  for (const auto& layer : layers_) a = layer->forward(params, a);
  return a;
}

template <typename Scalar>
Matrix<Scalar> Sequential<Scalar>::backward(const ParameterSet<Scalar>& params,
                                            const Tape& tape,
                                            const Matrix<Scalar>& grad_out,
                                            ParameterSet<Scalar>& grads) const {
  Matrix<Scalar> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(params, tape[i], tape[i + 1], g, grads);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam

template <typename Scalar>
Adam<Scalar>::Adam(const ParameterSet<Scalar>& params, AdamOptions options)
    : opt_(options), m_(params.zeros_like()), v_(params.zeros_like()) {}

template <typename Scalar>
void Adam<Scalar>::step(ParameterSet<Scalar>& params,
                        const ParameterSet<Scalar>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<Scalar>(opt_.beta1);
  const auto b2 = static_cast<Scalar>(opt_.beta2);
  const auto lr = static_cast<Scalar>(opt_.learning_rate * std::sqrt(c2) / c1);
  const auto eps = static_cast<Scalar>(opt_.epsilon * std::sqrt(c2));
  for (int i = 0; i < params.size(); ++i) {
    auto m = m_[i].array();
    auto v = v_[i].array();
    const auto g = grads[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i].array() -= lr * m / (v.sqrt() + eps);
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Dense<float>;
template class Dense<double>;
template class Relu<float>;
template class Relu<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class Sequential<float>;
template class Sequential<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace weakdis
