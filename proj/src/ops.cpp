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

#include "screamkd/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace screamkd::nn {
namespace {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
          int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

// The double path feeds gradient checks only. OpenBLAS 0.3.20 dgemm returns
// wrong results on some AVX-512 hosts, so it is computed directly.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda, const double* b,
          int ldb, double beta, double* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; ++j) crow[j] = beta == 0.0 ? 0.0 : beta * crow[j];
    for (int p = 0; p < k; ++p) {
      const double av = alpha * (trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                                         : a[static_cast<std::ptrdiff_t>(i) * lda + p]);
      if (av == 0.0) continue;
      if (trans_b) {
        for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<std::ptrdiff_t>(j) * ldb + p];
      } else {
        const double* bp = b + static_cast<std::ptrdiff_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * bp[j];
      }
    }
  }
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* op) {
  T acc{0};
  for (T v : t.values()) acc += v * T{0};
  if (acc != T{0}) throw Error(Errc::NonFiniteInput, std::string(op) + " produced a non-finite value");
}

template <typename T>
void require_rank(const Var<T>& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw Error(Errc::ShapeMismatch, std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                                         shape_string(x.shape()));
  }
}

template <typename T>
Graph<T>& graph_of(const Var<T>& x) {
  if (x.graph() == nullptr) throw Error(Errc::DetachedNode, "variable is not attached to a graph");
  return *x.graph();
}

template <typename T>
Var<T> emit(const Var<T>& anchor, BasicTensor<T> value, std::initializer_list<Var<T>> inputs,
            typename Graph<T>::BackwardFn fn, const char* op) {
  require_finite(value, op);
  return graph_of(anchor).record(std::move(value), inputs, std::move(fn));
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, oh, ow, stride, pad;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

// Columns [offset, offset + pixels) of a (patch x ld) matrix.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col, std::size_t ld, std::size_t offset) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* dst = col + ((c * g.kh + ki) * g.kw + kj) * ld + offset;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          T* row = dst + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(row, row + g.ow, T{0});
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, std::size_t ld, std::size_t offset, T* dx) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* src = col + ((c * g.kh + ki) * g.kw + kj) * ld + offset;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* row = src + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

// Samples per im2col batch, bounded so the column buffer stays near 16M
// elements.
std::size_t conv_group(const ConvGeometry& g) {
  constexpr std::size_t kBudget = std::size_t{1} << 24;
  const std::size_t per_sample = std::max<std::size_t>(1, g.patch() * g.pixels());
  return std::clamp<std::size_t>(kBudget / per_sample, 1, g.n);
}

std::size_t resolve_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw Error(Errc::ShapeMismatch, "axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(a);
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw Error(Errc::ShapeMismatch, "stride must be positive");
  if (in + 2 * padding < kernel) return 0;
  return (in + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias, Conv2dOptions options) {
  require_rank(x, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs[1] != ks[1]) {
    throw Error(Errc::ShapeMismatch, "conv2d channels: input " + shape_string(xs) + " kernel " + shape_string(ks));
  }
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != ks[0])) {
    throw Error(Errc::ShapeMismatch, "conv2d bias shape " + shape_string(bias->shape()));
  }
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], ks[3], 0, 0, options.stride, options.padding};
  g.oh = conv_output_extent(g.h, g.kh, g.stride, g.pad);
  g.ow = conv_output_extent(g.w, g.kw, g.stride, g.pad);
  if (g.oh == 0 || g.ow == 0) {
    throw Error(Errc::ShapeMismatch, "conv2d output would be empty for input " + shape_string(xs));
  }

  const std::size_t patch = g.patch();
  const std::size_t pixels = g.pixels();
  const std::size_t group = conv_group(g);
  BasicTensor<T> out(Shape{g.n, g.f, g.oh, g.ow});
  T* y = out.mutable_data();
  const T* xd = x.value().data();
  const T* wd = kernel.value().data();
  const T* bd = bias ? bias->value().data() : nullptr;

  std::vector<T> col(patch * group * pixels);
  std::vector<T> yt(g.f * group * pixels);
  for (std::size_t n0 = 0; n0 < g.n; n0 += group) {
    const std::size_t gn = std::min(group, g.n - n0);
    const std::size_t ld = gn * pixels;
    for (std::size_t s = 0; s < gn; ++s) im2col(xd + (n0 + s) * g.c * g.h * g.w, g, col.data(), ld, s * pixels);
    gemm(false, false, static_cast<int>(g.f), static_cast<int>(ld), static_cast<int>(patch), T{1}, wd,
         static_cast<int>(patch), col.data(), static_cast<int>(ld), T{0}, yt.data(), static_cast<int>(ld));
    for (std::size_t s = 0; s < gn; ++s) {
      for (std::size_t f = 0; f < g.f; ++f) {
        const T b = bd ? bd[f] : T{0};
        const T* src = yt.data() + f * ld + s * pixels;
        T* dst = y + ((n0 + s) * g.f + f) * pixels;
        for (std::size_t p = 0; p < pixels; ++p) dst[p] = src[p] + b;
      }
    }
  }

  auto backward = [x, kernel, g, group](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    BasicTensor<T>* dx = gin[0];
    BasicTensor<T>* dw = gin[1];
    BasicTensor<T>* db = gin.size() > 2 ? gin[2] : nullptr;
    const std::size_t patch = g.patch();
    const std::size_t pixels = g.pixels();
    const T* go = gout.data();
    const T* xd = x.value().data();
    const T* wd = kernel.value().data();
    T* dxd = dx ? dx->mutable_data() : nullptr;
    T* dwd = dw ? dw->mutable_data() : nullptr;
    T* dbd = db ? db->mutable_data() : nullptr;
    std::vector<T> col(dw ? patch * group * pixels : 0);
    std::vector<T> dcol(dx ? patch * group * pixels : 0);
    std::vector<T> gt(g.f * group * pixels);
    for (std::size_t n0 = 0; n0 < g.n; n0 += group) {
      const std::size_t gn = std::min(group, g.n - n0);
      const std::size_t ld = gn * pixels;
      for (std::size_t s = 0; s < gn; ++s) {
        for (std::size_t f = 0; f < g.f; ++f) {
          std::copy_n(go + ((n0 + s) * g.f + f) * pixels, pixels, gt.data() + f * ld + s * pixels);
        }
      }
      if (dbd) {
        for (std::size_t f = 0; f < g.f; ++f) {
          double acc = 0.0;
          for (std::size_t p = 0; p < ld; ++p) acc += gt[f * ld + p];
          dbd[f] += static_cast<T>(acc);
        }
      }
      if (dwd) {
        for (std::size_t s = 0; s < gn; ++s) im2col(xd + (n0 + s) * g.c * g.h * g.w, g, col.data(), ld, s * pixels);
        gemm(false, true, static_cast<int>(g.f), static_cast<int>(patch), static_cast<int>(ld), T{1}, gt.data(),
             static_cast<int>(ld), col.data(), static_cast<int>(ld), T{1}, dwd, static_cast<int>(patch));
      }
      if (dxd) {
        gemm(true, false, static_cast<int>(patch), static_cast<int>(ld), static_cast<int>(g.f), T{1}, wd,
             static_cast<int>(patch), gt.data(), static_cast<int>(ld), T{0}, dcol.data(), static_cast<int>(ld));
        for (std::size_t s = 0; s < gn; ++s) {
          col2im(dcol.data(), g, ld, s * pixels, dxd + (n0 + s) * g.c * g.h * g.w);
        }
      }
    }
  };
  if (bias) return emit(x, std::move(out), {x, kernel, *bias}, backward, "conv2d");
  return emit(x, std::move(out), {x, kernel}, backward, "conv2d");
}

namespace {

// Shared by fixed-window and adaptive pooling: each output cell records the
// flat input index of its maximum.
template <typename T, typename WindowFn>
Var<T> max_pool_impl(const Var<T>& x, std::size_t oh, std::size_t ow, WindowFn window, const char* op) {
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1];
  const std::size_t h = s[2];
  const std::size_t w = s[3];
  BasicTensor<T> out(Shape{s[0], s[1], oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(planes * oh * ow);
  const T* xd = x.value().data();
  T* y = out.mutable_data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* plane = xd + pl * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto [y0, y1, x0, x1] = window(oy, ox);
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = y0 * w + x0;
        for (std::size_t iy = y0; iy < y1; ++iy) {
          for (std::size_t ix = x0; ix < x1; ++ix) {
            const T v = plane[iy * w + ix];
            if (v > best) {
              best = v;
              best_idx = iy * w + ix;
            }
          }
        }
        const std::size_t o = (pl * oh + oy) * ow + ox;
        y[o] = best;
        (*argmax)[o] = static_cast<std::uint32_t>(pl * h * w + best_idx);
      }
    }
  }
  auto backward = [argmax](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    T* dx = gin[0]->mutable_data();
    const T* go = gout.data();
    for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += go[o];
  };
  return emit(x, std::move(out), {x}, backward, op);
}

struct Window {
  std::size_t y0, y1, x0, x1;
};

}  // namespace

template <typename T>
Var<T> maxpool2d(const Var<T>& x, Pool2dOptions options) {
  require_rank(x, 4, "maxpool2d");
  const Shape& s = x.shape();
  if (options.window == 0 || options.stride == 0) throw Error(Errc::ShapeMismatch, "maxpool2d window/stride zero");
  const std::size_t oh = conv_output_extent(s[2], options.window, options.stride, options.padding);
  const std::size_t ow = conv_output_extent(s[3], options.window, options.stride, options.padding);
  if (oh == 0 || ow == 0) {
    throw Error(Errc::ShapeMismatch, "maxpool2d window " + std::to_string(options.window) + " exceeds input " +
                                         shape_string(s));
  }
  const std::size_t h = s[2];
  const std::size_t w = s[3];
  const auto pad = static_cast<std::ptrdiff_t>(options.padding);
  auto window = [&](std::size_t oy, std::size_t ox) {
    const std::ptrdiff_t ys = static_cast<std::ptrdiff_t>(oy * options.stride) - pad;
    const std::ptrdiff_t xs = static_cast<std::ptrdiff_t>(ox * options.stride) - pad;
    const auto win = static_cast<std::ptrdiff_t>(options.window);
    return Window{static_cast<std::size_t>(std::max<std::ptrdiff_t>(ys, 0)),
                  static_cast<std::size_t>(std::min<std::ptrdiff_t>(ys + win, static_cast<std::ptrdiff_t>(h))),
                  static_cast<std::size_t>(std::max<std::ptrdiff_t>(xs, 0)),
                  static_cast<std::size_t>(std::min<std::ptrdiff_t>(xs + win, static_cast<std::ptrdiff_t>(w)))};
  };
  return max_pool_impl(x, oh, ow, window, "maxpool2d");
}

template <typename T>
Var<T> adaptive_maxpool2d(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "adaptive_maxpool2d");
  if (out_h == 0 || out_w == 0) throw Error(Errc::ShapeMismatch, "adaptive_maxpool2d output must be non-empty");
  const std::size_t h = x.shape()[2];
  const std::size_t w = x.shape()[3];
  auto window = [&](std::size_t oy, std::size_t ox) {
    return Window{oy * h / out_h, ((oy + 1) * h + out_h - 1) / out_h, ox * w / out_w,
                  ((ox + 1) * w + out_w - 1) / out_w};
  };
  return max_pool_impl(x, out_h, out_w, window, "adaptive_maxpool2d");
}

template <typename T>
Var<T> global_avgpool2d(const Var<T>& x) {
  require_rank(x, 4, "global_avgpool2d");
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1];
  const std::size_t area = s[2] * s[3];
  BasicTensor<T> out(Shape{s[0], s[1]});
  const T* xd = x.value().data();
  T* y = out.mutable_data();
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += xd[p * area + i];
    y[p] = static_cast<T>(acc / static_cast<double>(area));
  }
  auto backward = [planes, area](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    T* dx = gin[0]->mutable_data();
    const T* go = gout.data();
    const T inv = T{1} / static_cast<T>(area);
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t i = 0; i < area; ++i) dx[p * area + i] += go[p] * inv;
    }
  };
  return emit(x, std::move(out), {x}, backward, "global_avgpool2d");
}

template <typename T>
Var<T> flatten(const Var<T>& x) {
  if (x.shape().empty()) throw Error(Errc::ShapeMismatch, "flatten of a rank-0 tensor");
  const std::size_t n = x.shape()[0];
  const std::size_t rest = n == 0 ? 0 : x.value().numel() / n;
  auto backward = [](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    T* dx = gin[0]->mutable_data();
    const T* go = gout.data();
    for (std::size_t i = 0; i < gout.numel(); ++i) dx[i] += go[i];
  };
  return graph_of(x).record(x.value().reshape(Shape{n, rest}), {x}, backward);
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank(x, 2, "dense input");
  require_rank(weight, 2, "dense weight");
  const std::size_t n = x.shape()[0];
  const std::size_t d = x.shape()[1];
  const std::size_t o = weight.shape()[1];
  if (weight.shape()[0] != d || bias.shape().size() != 1 || bias.shape()[0] != o) {
    throw Error(Errc::ShapeMismatch, "dense: x " + shape_string(x.shape()) + " W " + shape_string(weight.shape()) +
                                         " b " + shape_string(bias.shape()));
  }
  BasicTensor<T> out(Shape{n, o});
  T* y = out.mutable_data();
  const T* bd = bias.value().data();
  for (std::size_t i = 0; i < n; ++i) std::copy_n(bd, o, y + i * o);
  gemm(false, false, static_cast<int>(n), static_cast<int>(o), static_cast<int>(d), T{1}, x.value().data(),
       static_cast<int>(d), weight.value().data(), static_cast<int>(o), T{1}, y, static_cast<int>(o));

  auto backward = [x, weight, n, d, o](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T* go = gout.data();
    if (gin[0]) {
      gemm(false, true, static_cast<int>(n), static_cast<int>(d), static_cast<int>(o), T{1}, go, static_cast<int>(o),
           weight.value().data(), static_cast<int>(o), T{1}, gin[0]->mutable_data(), static_cast<int>(d));
    }
    if (gin[1]) {
      gemm(true, false, static_cast<int>(d), static_cast<int>(o), static_cast<int>(n), T{1}, x.value().data(),
           static_cast<int>(d), go, static_cast<int>(o), T{1}, gin[1]->mutable_data(), static_cast<int>(o));
    }
    if (gin[2]) {
      T* db = gin[2]->mutable_data();
      for (std::size_t j = 0; j < o; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += go[i * o + j];
        db[j] += static_cast<T>(acc);
      }
    }
  };
  return emit(x, std::move(out), {x, weight, bias}, backward, "dense");
}

template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T> stats, Mode mode) {
  require_rank(x, 4, "batchnorm2d");
  const Shape& s = x.shape();
  const std::size_t n = s[0];
  const std::size_t c = s[1];
  const std::size_t area = s[2] * s[3];
  auto per_channel = [c](const BasicTensor<T>* t) { return t && t->shape().size() == 1 && t->shape()[0] == c; };
  if (!per_channel(&gamma.value()) || !per_channel(&beta.value()) || !per_channel(stats.running_mean) ||
      !per_channel(stats.running_var)) {
    throw Error(Errc::ShapeMismatch, "batchnorm2d parameters must have " + std::to_string(c) + " channels");
  }
  const std::size_t count = n * area;
  std::vector<double> mean(c), invstd(c);
  const T* xd = x.value().data();
  if (mode == Mode::Train) {
    T* rm = stats.running_mean->mutable_data();
    T* rv = stats.running_var->mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xd + (i * c + ch) * area;
        for (std::size_t k = 0; k < area; ++k) acc += p[k];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xd + (i * c + ch) * area;
        for (std::size_t k = 0; k < area; ++k) sq += (p[k] - mu) * (p[k] - mu);
      }
      const double var = sq / static_cast<double>(count);
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(var + stats.eps);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      rm[ch] = static_cast<T>((1.0 - stats.momentum) * rm[ch] + stats.momentum * mu);
      rv[ch] = static_cast<T>((1.0 - stats.momentum) * rv[ch] + stats.momentum * unbiased);
    }
  } else {
    const T* rm = stats.running_mean->data();
    const T* rv = stats.running_var->data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      invstd[ch] = 1.0 / std::sqrt(static_cast<double>(rv[ch]) + stats.eps);
    }
  }
  BasicTensor<T> out(s);
  T* y = out.mutable_data();
  const T* gd = gamma.value().data();
  const T* bd = beta.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = xd + (i * c + ch) * area;
      T* q = y + (i * c + ch) * area;
      const double a = gd[ch] * invstd[ch];
      const double b = bd[ch] - a * mean[ch];
      for (std::size_t k = 0; k < area; ++k) q[k] = static_cast<T>(a * p[k] + b);
    }
  }

  const bool train = mode == Mode::Train;
  auto backward = [x, gamma, mean, invstd, n, c, area, count, train](const BasicTensor<T>& gout,
                                                                       std::span<BasicTensor<T>* const> gin) {
    const T* go = gout.data();
    const T* xd = x.value().data();
    const T* gd = gamma.value().data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xd + (i * c + ch) * area;
        const T* q = go + (i * c + ch) * area;
        for (std::size_t k = 0; k < area; ++k) {
          sum_g += q[k];
          sum_gx += q[k] * (p[k] - mean[ch]) * invstd[ch];
        }
      }
      if (gin[1]) gin[1]->mutable_data()[ch] += static_cast<T>(sum_gx);
      if (gin[2]) gin[2]->mutable_data()[ch] += static_cast<T>(sum_g);
      if (!gin[0]) continue;
      T* dx = gin[0]->mutable_data();
      const double scale = gd[ch] * invstd[ch];
      const double mg = sum_g / static_cast<double>(count);
      const double mgx = sum_gx / static_cast<double>(count);
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xd + (i * c + ch) * area;
        const T* q = go + (i * c + ch) * area;
        T* d = dx + (i * c + ch) * area;
        for (std::size_t k = 0; k < area; ++k) {
          if (train) {
            const double xhat = (p[k] - mean[ch]) * invstd[ch];
            d[k] += static_cast<T>(scale * (q[k] - mg - xhat * mgx));
          } else {
            d[k] += static_cast<T>(scale * q[k]);
          }
        }
      }
    }
  };
  return emit(x, std::move(out), {x, gamma, beta}, backward, "batchnorm2d");
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  BasicTensor<T> out(x.shape());
  const T* xd = x.value().data();
  T* y = out.mutable_data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = xd[i] > T{0} ? xd[i] : T{0};
  auto backward = [x](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T* xd = x.value().data();
    const T* go = gout.data();
    T* dx = gin[0]->mutable_data();
    for (std::size_t i = 0; i < gout.numel(); ++i) {
      if (xd[i] > T{0}) dx[i] += go[i];
    }
  };
  return emit(x, std::move(out), {x}, backward, "relu");
}

template <typename T>
Var<T> dropout(const Var<T>& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(Errc::InvalidP, "dropout probability " + std::to_string(p));
  if (mode == Mode::Eval || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(x.value().numel());
  BasicTensor<T> out(x.shape());
  const T* xd = x.value().data();
  T* y = out.mutable_data();
  for (std::size_t i = 0; i < mask->size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    (*mask)[i] = u < p ? T{0} : keep_scale;
    y[i] = xd[i] * (*mask)[i];
  }
  auto backward = [mask](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T* go = gout.data();
    T* dx = gin[0]->mutable_data();
    for (std::size_t i = 0; i < mask->size(); ++i) dx[i] += go[i] * (*mask)[i];
  };
  return emit(x, std::move(out), {x}, backward, "dropout");
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::ShapeMismatch, "add " + shape_string(a.shape()) + " + " + shape_string(b.shape()));
  }
  BasicTensor<T> out(a.shape());
  const T* ad = a.value().data();
  const T* bd = b.value().data();
  T* y = out.mutable_data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = ad[i] + bd[i];
  auto backward = [](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T* go = gout.data();
    for (BasicTensor<T>* g : gin) {
      if (!g) continue;
      T* d = g->mutable_data();
      for (std::size_t i = 0; i < gout.numel(); ++i) d[i] += go[i];
    }
  };
  return emit(a, std::move(out), {a, b}, backward, "add");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::ShapeMismatch, "mul " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  BasicTensor<T> out(a.shape());
  const T* ad = a.value().data();
  const T* bd = b.value().data();
  T* y = out.mutable_data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = ad[i] * bd[i];
  auto backward = [a, b](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T* go = gout.data();
    const T* ad = a.value().data();
    const T* bd = b.value().data();
    if (gin[0]) {
      T* d = gin[0]->mutable_data();
      for (std::size_t i = 0; i < gout.numel(); ++i) d[i] += go[i] * bd[i];
    }
    if (gin[1]) {
      T* d = gin[1]->mutable_data();
      for (std::size_t i = 0; i < gout.numel(); ++i) d[i] += go[i] * ad[i];
    }
  };
  return emit(a, std::move(out), {a, b}, backward, "mul");
}

template <typename T>
Var<T> scale(const Var<T>& x, double factor) {
  BasicTensor<T> out(x.shape());
  const T* xd = x.value().data();
  T* y = out.mutable_data();
  const T f = static_cast<T>(factor);
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = xd[i] * f;
  auto backward = [f](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T* go = gout.data();
    T* d = gin[0]->mutable_data();
    for (std::size_t i = 0; i < gout.numel(); ++i) d[i] += go[i] * f;
  };
  return emit(x, std::move(out), {x}, backward, "scale");
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().values()) acc += v;
  auto backward = [](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T g = gout[0];
    for (T& d : gin[0]->mutable_values()) d += g;
  };
  return emit(x, BasicTensor<T>::scalar(static_cast<T>(acc)), {x}, backward, "sum");
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw Error(Errc::ShapeMismatch, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

template <typename T>
Var<T> softmax(const Var<T>& x, int axis) {
  const std::size_t ax = resolve_axis(axis, x.shape().size());
  const AxisSplit sp = split_axis(x.shape(), ax);
  BasicTensor<T> out(x.shape());
  const T* xd = x.value().data();
  T* y = out.mutable_data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < sp.len; ++k) mx = std::max(mx, xd[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) z += std::exp(static_cast<double>(xd[base + k * sp.inner] - mx));
      for (std::size_t k = 0; k < sp.len; ++k) {
        y[base + k * sp.inner] = static_cast<T>(std::exp(static_cast<double>(xd[base + k * sp.inner] - mx)) / z);
      }
    }
  }
  const BasicTensor<T> ys = out;
  auto bw = [ys, sp](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T* yd = ys.data();
    const T* go = gout.data();
    T* dx = gin[0]->mutable_data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.len * sp.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.len; ++k) dot += go[base + k * sp.inner] * yd[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.len; ++k) {
          const std::size_t i = base + k * sp.inner;
          dx[i] += static_cast<T>(yd[i] * (go[i] - dot));
        }
      }
    }
  };
  return emit(x, std::move(out), {x}, bw, "softmax");
}

template <typename T>
Var<T> log_softmax(const Var<T>& x, int axis) {
  const std::size_t ax = resolve_axis(axis, x.shape().size());
  const AxisSplit sp = split_axis(x.shape(), ax);
  BasicTensor<T> out(x.shape());
  const T* xd = x.value().data();
  T* y = out.mutable_data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < sp.len; ++k) mx = std::max(mx, xd[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) z += std::exp(static_cast<double>(xd[base + k * sp.inner] - mx));
      const double lse = std::log(z);
      for (std::size_t k = 0; k < sp.len; ++k) {
        y[base + k * sp.inner] = static_cast<T>(static_cast<double>(xd[base + k * sp.inner] - mx) - lse);
      }
    }
  }
  const BasicTensor<T> ys = out;
  auto bw = [ys, sp](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const T* yd = ys.data();
    const T* go = gout.data();
    T* dx = gin[0]->mutable_data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.len * sp.inner + in;
        double gsum = 0.0;
        for (std::size_t k = 0; k < sp.len; ++k) gsum += go[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.len; ++k) {
          const std::size_t i = base + k * sp.inner;
          dx[i] += static_cast<T>(go[i] - std::exp(static_cast<double>(yd[i])) * gsum);
        }
      }
    }
  };
  return emit(x, std::move(out), {x}, bw, "log_softmax");
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  if (labels.size() != n) {
    throw Error(Errc::ShapeMismatch, "cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                                         std::to_string(n));
  }
  if (n == 0) throw Error(Errc::ShapeMismatch, "cross_entropy on an empty batch");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(l) + " outside [0," + std::to_string(k) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(n * k);
  const T* xd = logits.value().data();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xd + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - mx) / z;
    loss += -(row[labels[i]] - mx - std::log(z));
  }
  loss /= static_cast<double>(n);
  auto label_copy = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  auto backward = [probs, label_copy, n, k](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const double g = static_cast<double>(gout[0]) / static_cast<double>(n);
    T* dx = gin[0]->mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double onehot = static_cast<std::size_t>((*label_copy)[i]) == j ? 1.0 : 0.0;
        dx[i * k + j] += static_cast<T>(g * ((*probs)[i * k + j] - onehot));
      }
    }
  };
  return emit(logits, BasicTensor<T>::scalar(static_cast<T>(loss)), {logits}, backward, "cross_entropy");
}

constexpr double kKlClamp = 1e-12;
constexpr double kKlSumTol = 1e-5;

template <typename T>
Var<T> kl_divergence(const Var<T>& p, const Var<T>& q) {
  if (p.shape() != q.shape() || p.shape().empty()) {
    throw Error(Errc::ShapeMismatch, "kl_divergence " + shape_string(p.shape()) + " vs " + shape_string(q.shape()));
  }
  const std::size_t k = p.shape().back();
  const std::size_t rows = k == 0 ? 0 : p.value().numel() / k;
  if (rows == 0) throw Error(Errc::ShapeMismatch, "kl_divergence on an empty tensor");
  const T* pd = p.value().data();
  const T* qd = q.value().data();
  for (const T* d : {pd, qd}) {
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const T v = d[r * k + j];
        if (!(v >= T{0})) throw Error(Errc::NotADistribution, "negative or non-finite probability");
        s += v;
      }
      if (std::abs(s - 1.0) > kKlSumTol) {
        throw Error(Errc::NotADistribution, "row " + std::to_string(r) + " sums to " + std::to_string(s));
      }
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < rows * k; ++i) {
    if (pd[i] > T{0}) total += pd[i] * std::log(pd[i] / std::max(static_cast<double>(qd[i]), kKlClamp));
  }
  total /= static_cast<double>(rows);
  auto backward = [p, q, rows](const BasicTensor<T>& gout, std::span<BasicTensor<T>* const> gin) {
    const double g = static_cast<double>(gout[0]) / static_cast<double>(rows);
    const T* pd = p.value().data();
    const T* qd = q.value().data();
    const std::size_t total = p.value().numel();
    if (gin[0]) {
      T* d = gin[0]->mutable_data();
      for (std::size_t i = 0; i < total; ++i) {
        if (pd[i] > T{0}) d[i] += static_cast<T>(g * (std::log(pd[i] / std::max(static_cast<double>(qd[i]), kKlClamp)) + 1.0));
      }
    }
    if (gin[1]) {
      T* d = gin[1]->mutable_data();
      for (std::size_t i = 0; i < total; ++i) {
        if (qd[i] > kKlClamp) d[i] += static_cast<T>(-g * pd[i] / qd[i]);
      }
    }
  };
  return emit(p, BasicTensor<T>::scalar(static_cast<T>(total)), {p, q}, backward, "kl_divergence");
}

template <typename T>
Var<T> detach(const Var<T>& x) {
  return graph_of(x).input(x.value());
}

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits) {
  Graph<T> g(false);
  return softmax(g.input(logits), -1).value();
}

#define SCREAMKD_INSTANTIATE_OPS(T)                                                                      \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, Conv2dOptions);    \
  template Var<T> maxpool2d(const Var<T>&, Pool2dOptions);                                              \
  template Var<T> adaptive_maxpool2d(const Var<T>&, std::size_t, std::size_t);                          \
  template Var<T> global_avgpool2d(const Var<T>&);                                                      \
  template Var<T> flatten(const Var<T>&);                                                               \
  template Var<T> dense(const Var<T>&, const Var<T>&, const Var<T>&);                                   \
  template Var<T> batchnorm2d(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>, Mode);    \
  template Var<T> relu(const Var<T>&);                                                                  \
  template Var<T> dropout(const Var<T>&, double, Mode, Rng&);                                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> scale(const Var<T>&, double);                                                         \
  template Var<T> sum(const Var<T>&);                                                                   \
  template Var<T> mean(const Var<T>&);                                                                  \
  template Var<T> softmax(const Var<T>&, int);                                                          \
  template Var<T> log_softmax(const Var<T>&, int);                                                      \
  template Var<T> cross_entropy(const Var<T>&, std::span<const int>);                                   \
  template Var<T> kl_divergence(const Var<T>&, const Var<T>&);                                          \
  template Var<T> detach(const Var<T>&);                                                                \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&);

SCREAMKD_INSTANTIATE_OPS(float)
SCREAMKD_INSTANTIATE_OPS(double)

#undef SCREAMKD_INSTANTIATE_OPS

}  // namespace screamkd::nn
