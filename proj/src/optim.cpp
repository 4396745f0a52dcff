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

#include "screamkd/optim.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace screamkd::nn {

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamOptions& options) {
  if (params.size() != grads.size()) {
    throw Error(Errc::ShapeMismatch, std::to_string(params.size()) + " parameters but " +
                                         std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.shape(), 0.0F);
      state.v.emplace_back(p.shape(), 0.0F);
    }
  }
  if (state.m.size() != params.size()) throw Error(Errc::ShapeMismatch, "Adam state size differs from parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape()) {
      throw Error(Errc::ShapeMismatch, "Adam parameter " + std::to_string(i) + " shape " +
                                           shape_string(params[i].shape()) + " vs gradient " +
                                           shape_string(grads[i].shape()));
    }
  }
  ++state.t;
  const double b1 = options.beta1;
  const double b2 = options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].mutable_data();
    float* m = state.m[i].mutable_data();
    float* v = state.v[i].mutable_data();
    const float* g = grads[i].data();
    for (std::size_t k = 0; k < params[i].numel(); ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double step = options.lr * (mk / c1) / (std::sqrt(vk / c2) + options.eps);
      p[k] = static_cast<float>(p[k] - step);
    }
  }
}

template <typename T>
GradCheckReport gradient_check(const ScalarFn<T>& f, const BasicTensor<T>& x, double eps,
                               std::span<const std::size_t> coords, double floor) {
  Graph<T> graph;
  const Var<T> xv = graph.parameter(x);
  graph.backward(f(graph, xv));
  const BasicTensor<T> analytic = graph.grad(xv);

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.numel());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coords = all;
  }
  auto evaluate = [&](const BasicTensor<T>& at) {
    Graph<T> g(false);
    return static_cast<double>(f(g, g.input(at)).value().item());
  };

  GradCheckReport report;
  for (std::size_t i : coords) {
    BasicTensor<T> plus = x;
    BasicTensor<T> minus = x;
    plus.mutable_data()[i] += static_cast<T>(eps);
    minus.mutable_data()[i] -= static_cast<T>(eps);
    const double numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    ++report.checked;
  }
  return report;
}

template GradCheckReport gradient_check(const ScalarFn<float>&, const BasicTensor<float>&, double,
                                        std::span<const std::size_t>, double);
template GradCheckReport gradient_check(const ScalarFn<double>&, const BasicTensor<double>&, double,
                                        std::span<const std::size_t>, double);

}  // namespace screamkd::nn
