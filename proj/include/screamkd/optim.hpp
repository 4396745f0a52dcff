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

#ifndef SCREAMKD_OPTIM_HPP_
#define SCREAMKD_OPTIM_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "screamkd/autograd.hpp"

namespace screamkd::nn {

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.9999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
};

// Bias-corrected Adam. State is lazily shaped on the first step.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamOptions& options = {});

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

template <typename T>
using ScalarFn = std::function<Var<T>(Graph<T>&, const Var<T>&)>;

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) against
// backward(). Relative error is |a - n| / max(|a|, |n|, floor). When
// `coords` is empty every element is checked.
template <typename T>
GradCheckReport gradient_check(const ScalarFn<T>& f, const BasicTensor<T>& x, double eps = 1e-3,
                               std::span<const std::size_t> coords = {}, double floor = 1e-6);

}  // namespace screamkd::nn

#endif  // SCREAMKD_OPTIM_HPP_
