/* Copyright 2026 The ScreamKD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SCREAMKD_OPS_HPP_
#define SCREAMKD_OPS_HPP_

#include <optional>
#include <random>
#include <span>

#include "screamkd/autograd.hpp"

namespace screamkd::nn {

using Rng = std::mt19937_64;

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct Pool2dOptions {
  std::size_t window = 2;
  std::size_t stride = 2;
  std::size_t padding = 0;
};

// Running statistics updated in place by train-mode batch norm.
template <typename T>
struct BatchNormStats {
  BasicTensor<T>* running_mean = nullptr;
  BasicTensor<T>* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

// x[N,C,H,W] (*) k[F,C,kh,kw] + bias[F] -> [N,F,H',W'] (cross-correlation).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias, Conv2dOptions options = {});

// Windowed max; the gradient goes to the first maximum in row-major
// window order.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, Pool2dOptions options = {});

// Max pool with windows [floor(i*H/oh), ceil((i+1)*H/oh)) producing oh x ow.
template <typename T>
Var<T> adaptive_maxpool2d(const Var<T>& x, std::size_t out_h, std::size_t out_w);

// Mean over H and W: [N,C,H,W] -> [N,C].
template <typename T>
Var<T> global_avgpool2d(const Var<T>& x);

// [N, ...] -> [N, prod(...)].
template <typename T>
Var<T> flatten(const Var<T>& x);

// x[N,D] W[D,O] + b[O].
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T> stats, Mode mode);

template <typename T>
Var<T> relu(const Var<T>& x);

// Inverted dropout: survivors are scaled by 1/(1-p) in train mode; eval
// mode returns the input untouched.
template <typename T>
Var<T> dropout(const Var<T>& x, double p, Mode mode, Rng& rng);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, double factor);

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

// Max-subtracted softmax along `axis` (negative counts from the end).
template <typename T>
Var<T> softmax(const Var<T>& x, int axis = -1);

template <typename T>
Var<T> log_softmax(const Var<T>& x, int axis = -1);

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels);

// Mean over rows of sum p * ln(p / q); 0 * ln(0 / q) is 0 and q is clamped
// at 1e-12. Rows must be probability vectors.
template <typename T>
Var<T> kl_divergence(const Var<T>& p, const Var<T>& q);

// Same value, cut from gradient flow.
template <typename T>
Var<T> detach(const Var<T>& x);

// Plain-tensor helpers used outside the tape.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits);

}  // namespace screamkd::nn

#endif  // SCREAMKD_OPS_HPP_
