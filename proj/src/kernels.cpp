/*
 * Copyright 2026 The MGCT Authors.
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

#include "mgct/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mgct/error.hpp"

namespace mgct::kernels {
namespace {

// Per-element bodies shared by both backends. Keeping the arithmetic here
// is what makes serial and omp results bit-identical.

inline float Dot(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline void CheckLinear(const Matrix& x, const Matrix& w, std::span<const float> bias,
                        Matrix& y) {
  Check(x.cols() == w.cols(), ErrorKind::kInvalidArgument, "linear: inner dim mismatch");
  Check(bias.empty() || bias.size() == w.rows(), ErrorKind::kInvalidArgument,
        "linear: bias size mismatch");
  if (y.rows() != x.rows() || y.cols() != w.rows()) y = Matrix(x.rows(), w.rows());
}

inline void LinearElement(const Matrix& x, const Matrix& w, std::span<const float> bias,
                          Matrix& y, std::size_t k, std::size_t o) {
  float v = Dot(x.row(k).data(), w.row(o).data(), x.cols());
  if (!bias.empty()) v += bias[o];
  y(k, o) = v;
}

inline void CheckAttention(const Matrix& q, const Matrix& k, const Matrix& v,
                           AttentionShape shape, Matrix& out) {
  const std::size_t d = shape.n_heads * shape.head_dim;
  Check(q.cols() == d && k.cols() == d && v.cols() == d, ErrorKind::kInvalidArgument,
        "attention: width mismatch");
  Check(q.rows() == k.rows() && k.rows() == v.rows(), ErrorKind::kInvalidArgument,
        "attention: length mismatch");
  if (out.rows() != q.rows() || out.cols() != d) out = Matrix(q.rows(), d);
}

// One (head, query position) cell of causal attention. `scores` is scratch
// space of at least t+1 floats.
inline void AttendOne(const Matrix& q, const Matrix& k, const Matrix& v,
                      AttentionShape shape, Matrix& out, std::size_t head,
                      std::size_t t, float* scores) {
  const std::size_t off = head * shape.head_dim;
  const float scale = 1.0f / std::sqrt(static_cast<float>(shape.head_dim));
  const float* qt = q.row(t).data() + off;
  float max_score = -INFINITY;
  for (std::size_t j = 0; j <= t; ++j) {
    scores[j] = Dot(qt, k.row(j).data() + off, shape.head_dim) * scale;
    max_score = std::max(max_score, scores[j]);
  }
  float denom = 0.0f;
  for (std::size_t j = 0; j <= t; ++j) {
    scores[j] = std::exp(scores[j] - max_score);
    denom += scores[j];
  }
  float* o = out.row(t).data() + off;
  for (std::size_t c = 0; c < shape.head_dim; ++c) o[c] = 0.0f;
  for (std::size_t j = 0; j <= t; ++j) {
    const float p = scores[j] / denom;
    const float* vj = v.row(j).data() + off;
    for (std::size_t c = 0; c < shape.head_dim; ++c) o[c] += p * vj[c];
  }
}

inline void LayerNormRow(std::span<const float> x, std::span<const float> gamma,
                         std::span<const float> beta, float eps, std::span<float> y) {
  const std::size_t n = x.size();
  float mean = 0.0f;
  for (float v : x) mean += v;
  mean /= static_cast<float>(n);
  float var = 0.0f;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<float>(n);
  const float inv = 1.0f / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

inline void RmsNormRow(std::span<const float> x, std::span<const float> weight, float eps,
                       std::span<float> y) {
  float ms = 0.0f;
  for (float v : x) ms += v * v;
  ms /= static_cast<float>(x.size());
  const float inv = 1.0f / std::sqrt(ms + eps);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * weight[i];
}

inline void CheckNorm(const Matrix& x, std::size_t param_size, Matrix& y) {
  Check(param_size == x.cols(), ErrorKind::kInvalidArgument, "norm: parameter size mismatch");
  if (y.rows() != x.rows() || y.cols() != x.cols()) y = Matrix(x.rows(), x.cols());
}

}  // namespace

namespace serial {

void Linear(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y) {
  CheckLinear(x, w, bias, y);
  for (std::size_t k = 0; k < x.rows(); ++k)
    for (std::size_t o = 0; o < w.rows(); ++o) LinearElement(x, w, bias, y, k, o);
}

void CausalAttention(const Matrix& q, const Matrix& k, const Matrix& v,
                     AttentionShape shape, Matrix& out) {
  CheckAttention(q, k, v, shape, out);
  std::vector<float> scores(q.rows());
  for (std::size_t h = 0; h < shape.n_heads; ++h)
    for (std::size_t t = 0; t < q.rows(); ++t)
      AttendOne(q, k, v, shape, out, h, t, scores.data());
}

void LayerNorm(const Matrix& x, std::span<const float> gamma, std::span<const float> beta,
               float eps, Matrix& y) {
  CheckNorm(x, gamma.size(), y);
  for (std::size_t r = 0; r < x.rows(); ++r) LayerNormRow(x.row(r), gamma, beta, eps, y.row(r));
}

void RmsNorm(const Matrix& x, std::span<const float> weight, float eps, Matrix& y) {
  CheckNorm(x, weight.size(), y);
  for (std::size_t r = 0; r < x.rows(); ++r) RmsNormRow(x.row(r), weight, eps, y.row(r));
}

}  // namespace serial

namespace omp {

void Linear(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y) {
  CheckLinear(x, w, bias, y);
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
  const auto outs = static_cast<std::ptrdiff_t>(w.rows());
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t k = 0; k < rows; ++k)
    for (std::ptrdiff_t o = 0; o < outs; ++o)
      LinearElement(x, w, bias, y, static_cast<std::size_t>(k), static_cast<std::size_t>(o));
}

void CausalAttention(const Matrix& q, const Matrix& k, const Matrix& v,
                     AttentionShape shape, Matrix& out) {
  CheckAttention(q, k, v, shape, out);
  const auto heads = static_cast<std::ptrdiff_t>(shape.n_heads);
  const auto len = static_cast<std::ptrdiff_t>(q.rows());
#pragma omp parallel
  {
    std::vector<float> scores(q.rows());
#pragma omp for collapse(2) schedule(static)
    for (std::ptrdiff_t h = 0; h < heads; ++h)
      for (std::ptrdiff_t t = 0; t < len; ++t)
        AttendOne(q, k, v, shape, out, static_cast<std::size_t>(h),
                  static_cast<std::size_t>(t), scores.data());
  }
}

void LayerNorm(const Matrix& x, std::span<const float> gamma, std::span<const float> beta,
               float eps, Matrix& y) {
  CheckNorm(x, gamma.size(), y);
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    LayerNormRow(x.row(ur), gamma, beta, eps, y.row(ur));
  }
}

void RmsNorm(const Matrix& x, std::span<const float> weight, float eps, Matrix& y) {
  CheckNorm(x, weight.size(), y);
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    RmsNormRow(x.row(ur), weight, eps, y.row(ur));
  }
}

}  // namespace omp

void Linear(Backend b, const Matrix& x, const Matrix& w, std::span<const float> bias,
            Matrix& y) {
  b == Backend::kOpenMP ? omp::Linear(x, w, bias, y) : serial::Linear(x, w, bias, y);
}

void CausalAttention(Backend b, const Matrix& q, const Matrix& k, const Matrix& v,
                     AttentionShape shape, Matrix& out) {
  b == Backend::kOpenMP ? omp::CausalAttention(q, k, v, shape, out)
                        : serial::CausalAttention(q, k, v, shape, out);
}

void LayerNorm(Backend b, const Matrix& x, std::span<const float> gamma,
               std::span<const float> beta, float eps, Matrix& y) {
  b == Backend::kOpenMP ? omp::LayerNorm(x, gamma, beta, eps, y)
                        : serial::LayerNorm(x, gamma, beta, eps, y);
}

void RmsNorm(Backend b, const Matrix& x, std::span<const float> weight, float eps,
             Matrix& y) {
  b == Backend::kOpenMP ? omp::RmsNorm(x, weight, eps, y) : serial::RmsNorm(x, weight, eps, y);
}

float GeluTanh(float x) {
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(kC * (x + 0.044715f * x * x * x)));
}

float Silu(float x) { return x / (1.0f + std::exp(-x)); }

void ApplyRope(Matrix& x, AttentionShape shape, float theta) {
  const std::size_t half = shape.head_dim / 2;
  for (std::size_t pos = 0; pos < x.rows(); ++pos) {
    float* row = x.row(pos).data();
    for (std::size_t h = 0; h < shape.n_heads; ++h) {
      float* head = row + h * shape.head_dim;
      for (std::size_t i = 0; i < half; ++i) {
        const float freq =
            std::pow(theta, -2.0f * static_cast<float>(i) / static_cast<float>(shape.head_dim));
        const float angle = static_cast<float>(pos) * freq;
        const float c = std::cos(angle), s = std::sin(angle);
        const float a = head[i], b = head[i + half];
        head[i] = a * c - b * s;
        head[i + half] = b * c + a * s;
      }
    }
  }
}

}  // namespace mgct::kernels
