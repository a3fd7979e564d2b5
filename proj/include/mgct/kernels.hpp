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

#pragma once

// Dense kernels used by the inference engine. Every kernel exists twice:
// `serial` is the reference loop nest and `omp` distributes independent
// output elements over OpenMP threads. Each output element is produced by
// exactly one thread with the same accumulation order as the serial path,
// so both variants are bit-identical for any thread count.

#include <cstddef>
#include <span>

#include "mgct/matrix.hpp"

namespace mgct::kernels {

enum class Backend { kSerial, kOpenMP };

struct AttentionShape {
  std::size_t n_heads = 1;
  std::size_t head_dim = 1;
};

namespace serial {

// Y[k, o] = bias[o] + sum_i X[k, i] * W[o, i]. `bias` may be empty.
void Linear(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y);

// Causal multi-head attention over already-projected q, k, v (K x d each).
void CausalAttention(const Matrix& q, const Matrix& k, const Matrix& v,
                     AttentionShape shape, Matrix& out);

void LayerNorm(const Matrix& x, std::span<const float> gamma,
               std::span<const float> beta, float eps, Matrix& y);
void RmsNorm(const Matrix& x, std::span<const float> weight, float eps, Matrix& y);

}  // namespace serial

namespace omp {

void Linear(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y);
void CausalAttention(const Matrix& q, const Matrix& k, const Matrix& v,
                     AttentionShape shape, Matrix& out);
void LayerNorm(const Matrix& x, std::span<const float> gamma,
               std::span<const float> beta, float eps, Matrix& y);
void RmsNorm(const Matrix& x, std::span<const float> weight, float eps, Matrix& y);

}  // namespace omp

// Backend-dispatching entry points used by the engine.
void Linear(Backend b, const Matrix& x, const Matrix& w, std::span<const float> bias,
            Matrix& y);
void CausalAttention(Backend b, const Matrix& q, const Matrix& k, const Matrix& v,
                     AttentionShape shape, Matrix& out);
void LayerNorm(Backend b, const Matrix& x, std::span<const float> gamma,
               std::span<const float> beta, float eps, Matrix& y);
void RmsNorm(Backend b, const Matrix& x, std::span<const float> weight, float eps,
             Matrix& y);

// Elementwise activations (cheap, always serial).
float GeluTanh(float x);
float Silu(float x);

// Rotary position embedding applied in place to a K x (n_heads*head_dim)
// matrix, rotate-half convention.
void ApplyRope(Matrix& x, AttentionShape shape, float theta);

}  // namespace mgct::kernels
