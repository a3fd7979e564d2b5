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

// Serial vs OpenMP kernels, full forward passes on both backends, and
// mediation runs with filters executed sequentially or in parallel.

#include <benchmark/benchmark.h>

#include <vector>

#include "mgct/engine.hpp"
#include "mgct/kernels.hpp"
#include "mgct/rng.hpp"
#include "mgct/tracing.hpp"

namespace {

using namespace mgct;

Matrix RandomMatrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (float& v : m.flat()) v = static_cast<float>(rng.Uniform() - 0.5);
  return m;
}

template <kernels::Backend B>
void BM_Linear(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  const Matrix x = RandomMatrix(k, d, 1), w = RandomMatrix(4 * d, d, 2);
  const std::vector<float> bias(4 * d, 0.1f);
  Matrix y;
  for (auto _ : state) {
    kernels::Linear(B, x, w, bias, y);
    benchmark::DoNotOptimize(y.flat().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(k * d * 4 * d));
}

template <kernels::Backend B>
void BM_Attention(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  const Matrix q = RandomMatrix(k, d, 1), kk = RandomMatrix(k, d, 2), v = RandomMatrix(k, d, 3);
  Matrix out;
  for (auto _ : state) {
    kernels::CausalAttention(B, q, kk, v, {d / 64, 64}, out);
    benchmark::DoNotOptimize(out.flat().data());
  }
}

template <kernels::Backend B>
void BM_LayerNorm(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  const Matrix x = RandomMatrix(k, d, 1);
  const std::vector<float> gamma(d, 1.0f), beta(d, 0.0f);
  Matrix y;
  for (auto _ : state) {
    kernels::LayerNorm(B, x, gamma, beta, 1e-5f, y);
    benchmark::DoNotOptimize(y.flat().data());
  }
}

ModelConfig BenchConfig() {
  ModelConfig c;
  c.n_layers = 8;
  c.n_heads = 4;
  c.d_model = 256;
  c.d_ff = 1024;
  c.vocab_size = 512;
  c.max_seq_len = 64;
  return c;
}

TokenSequence BenchPrompt(const ModelConfig& c) {
  TokenSequence s;
  Rng rng(5);
  for (int i = 0; i < 24; ++i) s.ids.push_back(static_cast<TokenId>(rng.Below(c.vocab_size - 1)));
  s.subject = {8, 11};
  return s;
}

template <kernels::Backend B>
void BM_Forward(benchmark::State& state) {
  const auto c = BenchConfig();
  const auto model = Model::Load(RandomWeights(c, 3), c);
  model->set_backend(B);
  const auto prompt = BenchPrompt(c);
  for (auto _ : state) benchmark::DoNotOptimize(model->NextTokenDistribution(prompt.ids));
}

void BM_Mediation(benchmark::State& state) {
  const auto c = BenchConfig();
  const auto model = Model::Load(RandomWeights(c, 3), c);
  model->set_backend(kernels::Backend::kSerial);
  const auto prompt = BenchPrompt(c);
  const auto spec = tracing::CorruptionSpec::FromSpan(prompt.subject, static_cast<TokenId>(c.vocab_size - 1));
  const std::size_t kr = prompt.ids.size() - prompt.subject.begin;
  std::vector<tracing::FilterMask> filters;
  for (StateKind k : {StateKind::kHidden, StateKind::kAttn, StateKind::kMlp})
    for (auto& f : tracing::ColumnFilters(c.n_layers, kr, k)) filters.push_back(std::move(f));
  tracing::MediationOptions options;
  options.parallel = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(tracing::RunMediation(*model, prompt, spec, filters, std::nullopt, options));
  state.SetLabel(options.parallel ? "omp filters" : "serial filters");
}

void BM_ColumnVsSingle(benchmark::State& state) {
  const auto c = BenchConfig();
  const auto model = Model::Load(RandomWeights(c, 3), c);
  model->set_backend(kernels::Backend::kSerial);
  const auto prompt = BenchPrompt(c);
  const auto spec = tracing::CorruptionSpec::FromSpan(prompt.subject, static_cast<TokenId>(c.vocab_size - 1));
  const std::size_t kr = prompt.ids.size() - prompt.subject.begin;
  const bool single = state.range(0) != 0;
  const auto filters = single ? tracing::SingleStateFilters(c.n_layers, kr, StateKind::kHidden)
                              : tracing::ColumnFilters(c.n_layers, kr, StateKind::kHidden);
  tracing::MediationOptions options;
  options.parallel = false;
  for (auto _ : state) benchmark::DoNotOptimize(tracing::RunMediation(*model, prompt, spec, filters, std::nullopt, options));
  state.SetLabel(single ? "single-state filters" : "column filters");
}

using kernels::Backend;
BENCHMARK(BM_Linear<Backend::kSerial>)->Args({32, 256})->Args({128, 768});
BENCHMARK(BM_Linear<Backend::kOpenMP>)->Args({32, 256})->Args({128, 768});
BENCHMARK(BM_Attention<Backend::kSerial>)->Args({64, 256})->Args({256, 768});
BENCHMARK(BM_Attention<Backend::kOpenMP>)->Args({64, 256})->Args({256, 768});
BENCHMARK(BM_LayerNorm<Backend::kSerial>)->Args({128, 768});
BENCHMARK(BM_LayerNorm<Backend::kOpenMP>)->Args({128, 768});
BENCHMARK(BM_Forward<Backend::kSerial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward<Backend::kOpenMP>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Mediation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ColumnVsSingle)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
