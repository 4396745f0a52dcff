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

#include "screamkd/autograd.hpp"

#include <string>

namespace screamkd::nn {

template <typename T>
Var<T> Graph<T>::append(BasicTensor<T> value, Node node) {
  Var<T> v;
  v.graph_ = this;
  v.id_ = static_cast<std::uint32_t>(nodes_.size());
  v.generation_ = generation_;
  v.requires_grad_ = node.requires_grad;
  v.value_ = std::move(value);
  node.shape = v.value_.shape();
  nodes_.push_back(std::move(node));
  return v;
}

template <typename T>
Var<T> Graph<T>::input(BasicTensor<T> value) {
  Node node;
  node.leaf = true;
  return append(std::move(value), std::move(node));
}

template <typename T>
Var<T> Graph<T>::parameter(BasicTensor<T> value) {
  Node node;
  node.leaf = true;
  node.requires_grad = true;
  return append(std::move(value), std::move(node));
}

template <typename T>
void Graph<T>::check_attached(const Var<T>& v, const char* what) const {
  if (v.graph_ != this || v.generation_ != generation_ || v.id_ >= nodes_.size()) {
    throw Error(Errc::DetachedNode, std::string(what) + " refers to a node that is not on this graph");
  }
}

template <typename T>
Var<T> Graph<T>::record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
  Node node;
  bool needs_grad = false;
  for (const Var<T>& in : inputs) {
    check_attached(in, "op input");
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  if (recording_ && needs_grad) {
    node.requires_grad = true;
    node.backward = std::move(backward);
    node.inputs.reserve(inputs.size());
    for (const Var<T>& in : inputs) node.inputs.push_back(in.id_);
  }
  return append(std::move(value), std::move(node));
}

template <typename T>
void Graph<T>::backward(const Var<T>& loss) {
  check_attached(loss, "loss");
  if (consumed_) {
    throw Error(Errc::DetachedNode, "graph was already backpropagated; reset() before the next forward pass");
  }
  if (loss.value().numel() != 1) {
    throw Error(Errc::NotScalar, "backward from tensor of shape " + shape_string(loss.shape()));
  }
  consumed_ = true;
  Node& root = nodes_[loss.id_];
  if (!root.requires_grad) return;
  root.grad = BasicTensor<T>(root.shape, T{1});
  root.has_grad = true;

  std::vector<BasicTensor<T>*> grad_in;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      Node& in = nodes_[node.inputs[k]];
      if (!in.requires_grad) continue;
      if (!in.has_grad) {
        in.grad = BasicTensor<T>(in.shape, T{0});
        in.has_grad = true;
      }
      grad_in[k] = &in.grad;
    }
    node.backward(node.grad, grad_in);
    if (!node.leaf) {
      node.grad = BasicTensor<T>();
      node.has_grad = false;
    }
    // Releases tensors captured by the closure.
    node.backward = nullptr;
  }
}

template <typename T>
BasicTensor<T> Graph<T>::grad(const Var<T>& v) const {
  check_attached(v, "grad query");
  const Node& node = nodes_[v.id_];
  if (!node.has_grad) return BasicTensor<T>(node.shape, T{0});
  return node.grad;
}

template <typename T>
void Graph<T>::reset() {
  nodes_.clear();
  ++generation_;
  consumed_ = false;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace screamkd::nn
