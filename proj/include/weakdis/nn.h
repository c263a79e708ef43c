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

#ifndef WEAKDIS_NN_H_
#define WEAKDIS_NN_H_

#include <memory>
#include <string>
#include <vector>

#include "weakdis/common.h"

namespace weakdis {

// Named trainable tensors, addressed by the handle returned from add().
template <typename Scalar>
class ParameterSet {
 public:
  int add(std::string name, Matrix<Scalar> value);

  Matrix<Scalar>& operator[](int handle) { return values_[handle]; }
  const Matrix<Scalar>& operator[](int handle) const { return values_[handle]; }
  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int handle) const { return names_[handle]; }
  int find(const std::string& name) const;  // -1 when absent
  std::int64_t num_scalars() const;

  ParameterSet zeros_like() const;
  void set_zero();
  bool all_finite() const;

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (int i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<Other>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix<Scalar>> values_;
};

// A differentiable map between row-batched activations. Layers own no state
// beyond parameter handles, so forward passes are pure functions of
// (parameters, input).
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix<Scalar> forward(const ParameterSet<Scalar>& params,
                                 const Matrix<Scalar>& x) const = 0;
  // Returns dL/dx and accumulates parameter gradients into `grads`.
  virtual Matrix<Scalar> backward(const ParameterSet<Scalar>& params,
                                  const Matrix<Scalar>& x,
                                  const Matrix<Scalar>& y,
                                  const Matrix<Scalar>& grad_y,
                                  ParameterSet<Scalar>& grads) const = 0;
  virtual int input_size() const = 0;
  virtual int output_size() const = 0;
};

template <typename Scalar>
class Dense : public Layer<Scalar> {
 public:
  Dense(ParameterSet<Scalar>& params, const std::string& name, int in, int out,
        Rng& rng);
  Matrix<Scalar> forward(const ParameterSet<Scalar>& params,
                         const Matrix<Scalar>& x) const override;
  Matrix<Scalar> backward(const ParameterSet<Scalar>& params,
                          const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                          const Matrix<Scalar>& grad_y,
                          ParameterSet<Scalar>& grads) const override;
  int input_size() const override { return in_; }
  int output_size() const override { return out_; }

 private:
  int in_, out_;
  int kernel_, bias_;
};

template <typename Scalar>
class Relu : public Layer<Scalar> {
 public:
  explicit Relu(int size) : size_(size) {}
  Matrix<Scalar> forward(const ParameterSet<Scalar>& params,
                         const Matrix<Scalar>& x) const override;
  Matrix<Scalar> backward(const ParameterSet<Scalar>& params,
                          const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                          const Matrix<Scalar>& grad_y,
                          ParameterSet<Scalar>& grads) const override;
  int input_size() const override { return size_; }
  int output_size() const override { return size_; }

 private:
  int size_;
};

// Geometry of a strided convolution with SAME padding on NHWC activations.
struct ConvGeometry {
  int in_height, in_width, in_channels;
  int out_channels;
  int kernel, stride;

  int out_height() const { return (in_height + stride - 1) / stride; }
  int out_width() const { return (in_width + stride - 1) / stride; }
  int pad_top() const;
  int pad_left() const;
  int patch_size() const { return kernel * kernel * in_channels; }
};

template <typename Scalar>
class Conv2d : public Layer<Scalar> {
 public:
  Conv2d(ParameterSet<Scalar>& params, const std::string& name,
         ConvGeometry geometry, Rng& rng);
  Matrix<Scalar> forward(const ParameterSet<Scalar>& params,
                         const Matrix<Scalar>& x) const override;
  Matrix<Scalar> backward(const ParameterSet<Scalar>& params,
                          const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                          const Matrix<Scalar>& grad_y,
                          ParameterSet<Scalar>& grads) const override;
  int input_size() const override;
  int output_size() const override;

 private:
  ConvGeometry g_;
  int kernel_, bias_;
};

// Transposed convolution that upsamples by `stride`: the adjoint of a SAME
// convolution from the (upsampled) output grid onto the input grid.
template <typename Scalar>
class ConvTranspose2d : public Layer<Scalar> {
 public:
  ConvTranspose2d(ParameterSet<Scalar>& params, const std::string& name,
                  int in_height, int in_width, int in_channels,
                  int out_channels, int kernel, int stride, Rng& rng);
  Matrix<Scalar> forward(const ParameterSet<Scalar>& params,
                         const Matrix<Scalar>& x) const override;
  Matrix<Scalar> backward(const ParameterSet<Scalar>& params,
                          const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                          const Matrix<Scalar>& grad_y,
                          ParameterSet<Scalar>& grads) const override;
  int input_size() const override;
  int output_size() const override;

 private:
  ConvGeometry adjoint_;  // convolution from the output grid to the input grid
  int kernel_, bias_;
};

template <typename Scalar>
class Sequential {
 public:
  using Tape = std::vector<Matrix<Scalar>>;

  void add(std::unique_ptr<Layer<Scalar>> layer);
  int input_size() const { return layers_.front()->input_size(); }
  int output_size() const { return layers_.back()->output_size(); }
  std::size_t num_layers() const { return layers_.size(); }

  // When `tape` is given it receives every intermediate activation.
  Matrix<Scalar> forward(const ParameterSet<Scalar>& params,
                         const Matrix<Scalar>& x, Tape* tape = nullptr) const;
  Matrix<Scalar> backward(const ParameterSet<Scalar>& params, const Tape& tape,
                          const Matrix<Scalar>& grad_out,
                          ParameterSet<Scalar>& grads) const;

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(const ParameterSet<Scalar>& params, AdamOptions options = {});
  void step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads);
  long iterations() const { return t_; }

 private:
  AdamOptions opt_;
  ParameterSet<Scalar> m_, v_;
  long t_ = 0;
};

}  // namespace weakdis

#endif  // WEAKDIS_NN_H_
