//
// Copyright 2026 The CWRF Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Feed-forward network with a flat parameter vector and hand-written
// backpropagation. Every hidden block is dense -> [norm] -> ReLU; the output
// layer is dense without activation.

#ifndef CWRF_MODEL_HPP_
#define CWRF_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cwrf/error.hpp"
#include "cwrf/rng.hpp"

namespace cwrf::nn {

// Row-major dense matrix; rows are examples.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class LayerKind : std::uint8_t { dense = 0, norm = 1, output = 2 };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::norm: return "norm";
    case LayerKind::output: return "output";
  }
  return "?";
}

struct ModelSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<std::size_t> hidden;
  // Insert a per-feature affine norm layer after every hidden dense layer.
  bool norm = false;
  std::uint64_t seed = 0;

  void validate() const {
    require(input_dim > 0, "ModelSpec: input_dim must be positive");
    require(output_dim > 0, "ModelSpec: output_dim must be positive");
    for (std::size_t w : hidden) require(w > 0, "ModelSpec: hidden widths must be positive");
  }

  // Per-layer kind tags in evaluation order.
  std::vector<LayerKind> layer_kinds() const {
    std::vector<LayerKind> kinds;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      kinds.push_back(LayerKind::dense);
      if (norm) kinds.push_back(LayerKind::norm);
    }
    kinds.push_back(LayerKind::output);
    return kinds;
  }
};

// One layer's slice of the flat parameter vector.
//   dense/output: width x fan_in weights (row-major), then width biases.
//   norm:         width scales, then width shifts (fan_in == width).
struct LayoutEntry {
  std::size_t layer_id = 0;
  LayerKind kind = LayerKind::dense;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::size_t fan_in = 0;
  std::size_t width = 0;
  bool rectified = false;  // ReLU applied to this layer's output

  bool operator==(const LayoutEntry&) const = default;
};

class Layout {
 public:
  Layout() = default;
  explicit Layout(std::vector<LayoutEntry> entries) : entries_(std::move(entries)) {
    std::size_t expected = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      require(e.layer_id == i, "Layout: layer ids must be consecutive");
      require(e.offset == expected, "Layout: entries must be contiguous");
      const std::size_t want = e.kind == LayerKind::norm ? 2 * e.width
                                                         : e.width * e.fan_in + e.width;
      require(e.length == want, "Layout: entry length does not match its shape");
      if (e.kind == LayerKind::norm) require(e.fan_in == e.width, "Layout: norm shape");
      expected += e.length;
    }
    size_ = expected;
  }

  static Layout from_spec(const ModelSpec& spec) {
    spec.validate();
    std::vector<LayoutEntry> entries;
    std::size_t offset = 0;
    std::size_t fan_in = spec.input_dim;
    auto push = [&](LayerKind kind, std::size_t width, bool rectified) {
      LayoutEntry e;
      e.layer_id = entries.size();
      e.kind = kind;
      e.offset = offset;
      e.fan_in = kind == LayerKind::norm ? width : fan_in;
      e.width = width;
      e.length = kind == LayerKind::norm ? 2 * width : width * e.fan_in + width;
      e.rectified = rectified;
      offset += e.length;
      fan_in = width;
      entries.push_back(e);
    };
    for (std::size_t w : spec.hidden) {
      push(LayerKind::dense, w, !spec.norm);
      if (spec.norm) push(LayerKind::norm, w, true);
    }
    push(LayerKind::output, spec.output_dim, false);
    return Layout(std::move(entries));
  }

  std::span<const LayoutEntry> entries() const { return entries_; }
  std::size_t size() const { return size_; }
  std::size_t input_dim() const { return entries_.empty() ? 0 : entries_.front().fan_in; }
  std::size_t output_dim() const { return entries_.empty() ? 0 : entries_.back().width; }

  // Layer owning flat parameter index i.
  const LayoutEntry& entry_of(std::size_t i) const {
    auto it = std::upper_bound(entries_.begin(), entries_.end(), i,
                               [](std::size_t idx, const LayoutEntry& e) { return idx < e.offset; });
    require(it != entries_.begin() && i < size_, "Layout: parameter index out of range");
    return *std::prev(it);
  }

  bool operator==(const Layout& other) const { return entries_ == other.entries_; }

 private:
  std::vector<LayoutEntry> entries_;
  std::size_t size_ = 0;
};

struct ParameterVector {
  Layout layout;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ParameterVector&) const = default;
};

// Equality of the bit patterns, so -0.0 != 0.0 and NaN == NaN.
inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline bool bitwise_equal(const ParameterVector& a, const ParameterVector& b) {
  return a.layout == b.layout && bitwise_equal(a.values, b.values);
}

struct GradientVector {
  std::vector<double> values;

  explicit GradientVector(std::size_t m = 0) : values(m, 0.0) {}
  std::size_t size() const { return values.size(); }
};

// He-uniform weights, fan-in uniform biases, unit scale / zero shift norms.
// Values are rounded to float so the initialization survives a checkpoint
// round trip unchanged.
inline ParameterVector init_params(const ModelSpec& spec) {
  ParameterVector p{Layout::from_spec(spec), {}};
  p.values.assign(p.layout.size(), 0.0);
  Rng rng(spec.seed);
  for (const auto& e : p.layout.entries()) {
    double* base = p.values.data() + e.offset;
    if (e.kind == LayerKind::norm) {
      std::fill(base, base + e.width, 1.0);
      std::fill(base + e.width, base + 2 * e.width, 0.0);
      continue;
    }
    const double fan_in = static_cast<double>(e.fan_in);
    const double weight_bound = std::sqrt(6.0 / fan_in);
    const double bias_bound = 1.0 / std::sqrt(fan_in);
    const std::size_t n_weights = e.width * e.fan_in;
    for (std::size_t i = 0; i < n_weights; ++i) {
      base[i] = static_cast<float>(rng.uniform(-weight_bound, weight_bound));
    }
    for (std::size_t i = 0; i < e.width; ++i) {
      base[n_weights + i] = static_cast<float>(rng.uniform(-bias_bound, bias_bound));
    }
  }
  return p;
}

struct ForwardCache {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // output of each layer before the ReLU
};

namespace detail {

inline Matrix apply_layer(const LayoutEntry& e, std::span<const double> theta, const Matrix& x) {
  const std::size_t batch = x.rows();
  Matrix z(batch, e.width);
  const double* p = theta.data() + e.offset;
  if (e.kind == LayerKind::norm) {
    const double* scale = p;
    const double* shift = p + e.width;
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < e.width; ++j) z(i, j) = x(i, j) * scale[j] + shift[j];
    }
    return z;
  }
  const double* w = p;
  const double* b = p + e.width * e.fan_in;
  for (std::size_t i = 0; i < batch; ++i) {
    const auto xi = x.row(i);
    for (std::size_t o = 0; o < e.width; ++o) {
      const double* wo = w + o * e.fan_in;
      double acc = b[o];
      for (std::size_t k = 0; k < e.fan_in; ++k) acc += wo[k] * xi[k];
      z(i, o) = acc;
    }
  }
  return z;
}

inline Matrix rectify(Matrix z) {
  for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
  return z;
}

}  // namespace detail

// Logits for a batch (rows = examples). Throws NonFiniteError on NaN/Inf.
inline Matrix forward(const ParameterVector& params, const Matrix& x,
                      ForwardCache* cache = nullptr) {
  require(x.cols() == params.layout.input_dim(), "forward: feature width != input_dim");
  require(params.values.size() == params.layout.size(), "forward: parameter length mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = x;
  for (const auto& e : params.layout.entries()) {
    Matrix z = detail::apply_layer(e, params.values, h);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(z);
    }
    h = e.rectified ? detail::rectify(std::move(z)) : std::move(z);
  }
  require_finite(h.data(), "forward logits");
  return h;
}

// Gradient of a scalar loss w.r.t. all parameters, given dL/dlogits.
inline GradientVector backprop(const ParameterVector& params, const ForwardCache& cache,
                               const Matrix& dlogits) {
  const auto entries = params.layout.entries();
  GradientVector grad(params.size());
  Matrix upstream = dlogits;
  for (std::size_t l = entries.size(); l-- > 0;) {
    const auto& e = entries[l];
    const Matrix& x = cache.inputs[l];
    const Matrix& z = cache.pre[l];
    const std::size_t batch = x.rows();
    if (e.rectified) {
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < e.width; ++j) {
          if (z(i, j) <= 0.0) upstream(i, j) = 0.0;
        }
      }
    }
    const double* p = params.values.data() + e.offset;
    double* g = grad.values.data() + e.offset;
    const bool need_input_grad = l > 0;
    Matrix down(need_input_grad ? batch : 0, e.fan_in);
    if (e.kind == LayerKind::norm) {
      const double* scale = p;
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < e.width; ++j) {
          const double d = upstream(i, j);
          g[j] += d * x(i, j);
          g[e.width + j] += d;
          if (need_input_grad) down(i, j) = d * scale[j];
        }
      }
    } else {
      const double* w = p;
      double* gw = g;
      double* gb = g + e.width * e.fan_in;
      for (std::size_t i = 0; i < batch; ++i) {
        const auto xi = x.row(i);
        for (std::size_t o = 0; o < e.width; ++o) {
          const double d = upstream(i, o);
          if (d == 0.0) continue;
          gb[o] += d;
          double* gwo = gw + o * e.fan_in;
          const double* wo = w + o * e.fan_in;
          for (std::size_t k = 0; k < e.fan_in; ++k) gwo[k] += d * xi[k];
          if (need_input_grad) {
            auto di = down.row(i);
            for (std::size_t k = 0; k < e.fan_in; ++k) di[k] += d * wo[k];
          }
        }
      }
    }
    upstream = std::move(down);
  }
  require_finite(grad.values, "gradient");
  return grad;
}

struct LossGrad {
  double value = 0.0;
  Matrix dlogits;
};

// Runs forward, evaluates `head(logits) -> LossGrad`, and backpropagates.
template <class Head>
std::pair<double, GradientVector> backward(const ParameterVector& params, const Matrix& x,
                                           Head&& head) {
  ForwardCache cache;
  const Matrix logits = forward(params, x, &cache);
  LossGrad lg = head(logits);
  require_finite(lg.value, "loss");
  return {lg.value, backprop(params, cache, lg.dlogits)};
}

}  // namespace cwrf::nn

#endif  // CWRF_MODEL_HPP_
