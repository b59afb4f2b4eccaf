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

#ifndef CWRF_LOSS_HPP_
#define CWRF_LOSS_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "cwrf/error.hpp"
#include "cwrf/model.hpp"

namespace cwrf::nn {

inline double log_sum_exp(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - zmax);
  return zmax + std::log(s);
}

inline Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    const double lse = log_sum_exp(z);
    for (std::size_t j = 0; j < z.size(); ++j) p(i, j) = std::exp(z[j] - lse);
  }
  return p;
}

namespace detail {

inline void check_labels(const Matrix& logits, std::span<const int> labels) {
  require(logits.rows() > 0, "loss: empty batch");
  require(labels.size() == logits.rows(), "loss: label count != batch size");
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < logits.cols(), "loss: label out of range");
  }
}

}  // namespace detail

// Mean cross-entropy and its gradient w.r.t. the logits.
inline LossGrad ce_with_grad(const Matrix& logits, std::span<const int> labels) {
  detail::check_labels(logits, labels);
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  LossGrad out{0.0, softmax(logits)};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    out.value += log_sum_exp(logits.row(i)) - logits(i, y);
    for (std::size_t j = 0; j < logits.cols(); ++j) out.dlogits(i, j) *= inv_b;
    out.dlogits(i, y) -= inv_b;
  }
  out.value *= inv_b;
  return out;
}

inline double loss_ce(const Matrix& logits, std::span<const int> labels) {
  detail::check_labels(logits, labels);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    total += log_sum_exp(logits.row(i)) - logits(i, static_cast<std::size_t>(labels[i]));
  }
  return total / static_cast<double>(logits.rows());
}

// Per-example cross-entropy (no averaging).
inline std::vector<double> ce_per_example(const Matrix& logits, std::span<const int> labels) {
  detail::check_labels(logits, labels);
  std::vector<double> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    out[i] = log_sum_exp(logits.row(i)) - logits(i, static_cast<std::size_t>(labels[i]));
  }
  return out;
}

// Mean cross-entropy against soft target distributions (rows sum to 1).
inline LossGrad soft_ce_with_grad(const Matrix& logits, const Matrix& targets) {
  require(logits.rows() > 0, "loss: empty batch");
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "soft_ce: shape mismatch");
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  LossGrad out{0.0, softmax(logits)};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double lse = log_sum_exp(logits.row(i));
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      out.value -= targets(i, j) * (logits(i, j) - lse);
      out.dlogits(i, j) = (out.dlogits(i, j) - targets(i, j)) * inv_b;
    }
  }
  out.value *= inv_b;
  return out;
}

// Mean KL(softmax(teacher) || softmax(student)); gradient w.r.t. the student.
inline LossGrad kl_with_grad(const Matrix& student, const Matrix& teacher) {
  require(student.rows() > 0, "loss_kl: empty batch");
  require(student.rows() == teacher.rows() && student.cols() == teacher.cols(),
          "loss_kl: shape mismatch");
  const double inv_b = 1.0 / static_cast<double>(student.rows());
  LossGrad out{0.0, Matrix(student.rows(), student.cols())};
  for (std::size_t i = 0; i < student.rows(); ++i) {
    const double lse_s = log_sum_exp(student.row(i));
    const double lse_t = log_sum_exp(teacher.row(i));
    for (std::size_t j = 0; j < student.cols(); ++j) {
      const double log_pt = teacher(i, j) - lse_t;
      const double log_ps = student(i, j) - lse_s;
      const double pt = std::exp(log_pt);
      if (pt > 0.0) out.value += pt * (log_pt - log_ps);
      out.dlogits(i, j) = (std::exp(log_ps) - pt) * inv_b;
    }
  }
  // Rounding can leave -1e-17 for identical rows.
  out.value = std::max(0.0, out.value * inv_b);
  return out;
}

inline double loss_kl(const Matrix& student, const Matrix& teacher) {
  return kl_with_grad(student, teacher).value;
}

inline std::pair<double, GradientVector> backward_ce(const ParameterVector& params,
                                                     const Matrix& x,
                                                     std::span<const int> labels) {
  return backward(params, x, [&](const Matrix& logits) { return ce_with_grad(logits, labels); });
}

inline std::pair<double, GradientVector> backward_kl(const ParameterVector& student,
                                                     const Matrix& x,
                                                     const Matrix& teacher_logits) {
  return backward(student, x,
                  [&](const Matrix& logits) { return kl_with_grad(logits, teacher_logits); });
}

inline std::vector<int> predict(const ParameterVector& params, const Matrix& x) {
  const Matrix logits = forward(params, x);
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    out[i] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

}  // namespace cwrf::nn

#endif  // CWRF_LOSS_HPP_
