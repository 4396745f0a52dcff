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

#ifndef SCREAMKD_AUTOGRAD_HPP_
#define SCREAMKD_AUTOGRAD_HPP_

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "screamkd/tensor.hpp"

namespace screamkd::nn {

enum class Mode { Train, Eval };

template <typename T>
class Graph;

// Handle to a value produced on a Graph. Holds the value itself (shared
// storage), so it stays readable after the graph is reset; only gradient
// queries go through the graph.
template <typename T>
class Var {
 public:
  Var() = default;

  const BasicTensor<T>& value() const { return value_; }
  const Shape& shape() const { return value_.shape(); }
  Graph<T>* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  std::uint64_t generation() const { return generation_; }
  bool requires_grad() const { return requires_grad_; }

 private:
  friend class Graph<T>;
  Graph<T>* graph_ = nullptr;
  std::uint32_t id_ = 0;
  std::uint64_t generation_ = 0;
  bool requires_grad_ = false;
  BasicTensor<T> value_;
};

// Reverse-mode tape. Nodes are appended in execution order; backward()
// walks them once in reverse. A graph supports one backward per
// forward pass: reset() before recording the next step.
template <typename T>
class Graph {
 public:
  // grad_in[k] is null when input k does not require a gradient. Backward
  // functions accumulate (+=) into grad_in, since an input may appear twice.
  using BackwardFn = std::function<void(const BasicTensor<T>& grad_out, std::span<BasicTensor<T>* const> grad_in)>;

  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> input(BasicTensor<T> value);
  Var<T> parameter(BasicTensor<T> value);

  // Appends an op result. When not recording, or when no input needs a
  // gradient, the backward function is dropped.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward);

  void backward(const Var<T>& loss);

  // Gradient of the last backward() w.r.t. a leaf or node; zeros when the
  // node did not contribute to the loss.
  BasicTensor<T> grad(const Var<T>& v) const;

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }
  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    BasicTensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool leaf = false;
  };

  Var<T> append(BasicTensor<T> value, Node node);
  void check_attached(const Var<T>& v, const char* what) const;

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
  bool consumed_ = false;
  bool recording_ = true;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace screamkd::nn

#endif  // SCREAMKD_AUTOGRAD_HPP_
