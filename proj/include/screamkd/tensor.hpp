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

#ifndef SCREAMKD_TENSOR_HPP_
#define SCREAMKD_TENSOR_HPP_

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "screamkd/error.hpp"

namespace screamkd::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor with shared, copy-on-write storage. Copies are
// cheap; the first mutable access on shared storage clones it, so a tensor
// handed to a graph never changes underneath it.
template <typename T>
class BasicTensor {
 public:
  BasicTensor() : storage_(std::make_shared<std::vector<T>>()) {}

  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), storage_(std::make_shared<std::vector<T>>(shape_numel(shape_), fill)) {}

  BasicTensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), storage_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (storage_->size() != shape_numel(shape_)) {
      throw Error(Errc::ShapeMismatch, "value count " + std::to_string(storage_->size()) +
                                           " does not match shape " + shape_string(shape_));
    }
  }

  static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return storage_->size(); }
  bool empty() const { return storage_->empty(); }

  const T* data() const { return storage_->data(); }
  std::span<const T> values() const { return {storage_->data(), storage_->size()}; }

  T* mutable_data() {
    detach_storage();
    return storage_->data();
  }
  std::span<T> mutable_values() {
    detach_storage();
    return {storage_->data(), storage_->size()};
  }

  T operator[](std::size_t i) const { return (*storage_)[i]; }

  T item() const {
    if (numel() != 1) throw Error(Errc::NotScalar, "item() on tensor of shape " + shape_string(shape_));
    return (*storage_)[0];
  }

  // Same storage, new shape.
  BasicTensor reshape(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw Error(Errc::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    BasicTensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(numel());
    std::transform(storage_->begin(), storage_->end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool shares_storage_with(const BasicTensor& other) const { return storage_ == other.storage_; }

  void fill(T v) { std::fill(mutable_values().begin(), mutable_values().end(), v); }

 private:
  void detach_storage() {
    if (storage_.use_count() > 1) storage_ = std::make_shared<std::vector<T>>(*storage_);
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> storage_;
};

using Tensor = BasicTensor<float>;

template <typename T>
bool bit_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin(),
                                              [](T x, T y) { return std::memcmp(&x, &y, sizeof(T)) == 0; });
}

// Caps BLAS worker threads; 1 gives the deterministic serial mode.
void set_num_threads(int threads);

}  // namespace screamkd::nn

#endif  // SCREAMKD_TENSOR_HPP_
