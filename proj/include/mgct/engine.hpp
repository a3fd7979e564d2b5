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

// Decoder-only transformer inference with full state recording and
// state-level intervention hooks.
//
// The recorded grid follows the residual decomposition
//
//   h[l][k] = h[l-1][k] + a[l][k] + m[l][k],   l = 1..L
//
// where h[0] is the embedding layer, a[l] is the attention sublayer output
// (pre-norm folded inside) and m[l] is the feed-forward output computed from
// h[l-1] + a[l]. Layer indices for attn/mlp states are 1-based so that a
// state (kind, l, k) names the same block for all three kinds.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mgct/kernels.hpp"
#include "mgct/matrix.hpp"
#include "mgct/safetensors.hpp"

namespace mgct {

using TokenId = std::int32_t;

enum class Architecture {
  kGpt2,   // pre-norm LayerNorm, GELU MLP, learned positions, tied unembedding
  kLlama,  // pre-norm RMSNorm, SiLU-gated MLP, rotary positions
};

std::string_view ToString(Architecture a);
Architecture ArchitectureFromString(std::string_view s);

enum class StateKind { kHidden, kAttn, kMlp };

std::string_view ToString(StateKind k);
StateKind StateKindFromString(std::string_view s);

struct ModelConfig {
  std::size_t n_layers = 1;
  std::size_t n_heads = 1;
  std::size_t d_model = 1;
  std::size_t d_ff = 1;
  std::size_t vocab_size = 1;
  std::size_t max_seq_len = 1;
  float norm_epsilon = 1e-5f;
  Architecture architecture = Architecture::kGpt2;
  float rope_theta = 10000.0f;  // LLaMA only

  void Validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }

  nlohmann::json ToJson() const;
  // Accepts both the native keys written by ToJson() and Hugging Face
  // config.json keys (n_layer/n_embd/... and num_hidden_layers/hidden_size/...).
  static ModelConfig FromJson(const nlohmann::json& j);
  static ModelConfig FromFile(const std::filesystem::path& path);
};

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
};

// Documented name -> shape manifest. Names follow the Hugging Face layout
// for each variant; GPT-2 projection weights are stored [in, out] (Conv1D),
// LLaMA weights [out, in]. A leading "transformer." prefix is accepted when
// loading GPT-2 weights.
std::vector<TensorSpec> WeightManifest(const ModelConfig& config);

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // half-open
  std::size_t size() const { return end - begin; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  TokenSpan subject;

  // Throws kInvalidArgument when ids are out of vocabulary, the sequence is
  // empty or too long, or the subject span is empty/out of range.
  void Validate(const ModelConfig& config) const;
};

struct Restoration {
  StateKind kind = StateKind::kHidden;
  std::size_t layer = 1;  // hidden: 0..L, attn/mlp: 1..L
  std::size_t token = 0;
  std::vector<float> value;
};

struct InterventionPlan {
  std::map<std::size_t, TokenId> corruption;  // position -> replacement id
  std::vector<Restoration> restorations;

  bool empty() const { return corruption.empty() && restorations.empty(); }
};

class TraceRecord {
 public:
  TraceRecord() = default;
  TraceRecord(std::size_t n_layers, std::size_t n_tokens, std::size_t d_model);

  std::size_t n_layers() const { return n_layers_; }
  std::size_t n_tokens() const { return n_tokens_; }
  std::size_t d_model() const { return d_model_; }

  std::span<const float> hidden(std::size_t layer, std::size_t token) const;
  std::span<const float> attn(std::size_t layer, std::size_t token) const;
  std::span<const float> mlp(std::size_t layer, std::size_t token) const;
  std::span<const float> state(StateKind kind, std::size_t layer, std::size_t token) const;

  std::span<float> mutable_hidden(std::size_t layer, std::size_t token);
  std::span<float> mutable_attn(std::size_t layer, std::size_t token);
  std::span<float> mutable_mlp(std::size_t layer, std::size_t token);

  // Softmax over the vocabulary at the last position. Logits are float32;
  // normalization is accumulated in double.
  const std::vector<double>& output_distribution() const { return output_; }
  std::vector<double>& mutable_output_distribution() { return output_; }
  TokenId argmax() const;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;

 private:
  std::size_t n_layers_ = 0, n_tokens_ = 0, d_model_ = 0;
  std::vector<float> hidden_;  // (L+1) x K x d
  std::vector<float> attn_;    // L x K x d
  std::vector<float> mlp_;     // L x K x d
  std::vector<double> output_;
};

struct LayerWeights {
  // Norms: gamma/beta (GPT-2) or weight only (LLaMA, beta empty).
  std::vector<float> norm1_w, norm1_b, norm2_w, norm2_b;
  // All projection matrices are stored [out, in].
  Matrix w_q, w_k, w_v, w_o;
  std::vector<float> b_q, b_k, b_v, b_o;
  Matrix w_up, w_gate, w_down;  // GPT-2: w_up = c_fc, w_down = c_proj
  std::vector<float> b_up, b_down;
};

class Model {
 public:
  // Validates every tensor of WeightManifest(config) against the store.
  static std::shared_ptr<const Model> Load(const TensorStore& store, const ModelConfig& config);
  static std::shared_ptr<const Model> LoadFile(const std::filesystem::path& weights,
                                               const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  TraceRecord ForwardRecorded(std::span<const TokenId> ids) const;
  TraceRecord ForwardIntervened(std::span<const TokenId> ids, const InterventionPlan& plan) const;
  // Output distribution only; no grid is recorded.
  std::vector<double> NextTokenDistribution(std::span<const TokenId> ids,
                                            const InterventionPlan* plan = nullptr) const;

  // Number of forward passes executed by this model since load.
  std::uint64_t forward_calls() const { return forward_calls_.load(); }
  void set_backend(kernels::Backend b) const { backend_ = b; }
  kernels::Backend backend() const { return backend_; }

  const Matrix& token_embedding() const { return embed_; }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

 private:
  Model() = default;
  std::vector<double> Run(std::span<const TokenId> ids, const InterventionPlan* plan,
                          TraceRecord* record) const;

  ModelConfig config_;
  Matrix embed_;      // V x d
  Matrix positions_;  // P x d (GPT-2 only)
  std::vector<LayerWeights> layers_;
  std::vector<float> final_w_, final_b_;
  Matrix lm_head_;  // V x d
  mutable std::atomic<std::uint64_t> forward_calls_{0};
  mutable kernels::Backend backend_ = kernels::Backend::kOpenMP;
};

// Spec-level entry points.
TraceRecord ForwardRecorded(const Model& model, const TokenSequence& tokens);
TraceRecord ForwardIntervened(const Model& model, const TokenSequence& tokens,
                              const InterventionPlan& plan);

// Seeded random weights for tests and fixtures, laid out per WeightManifest.
TensorStore RandomWeights(const ModelConfig& config, std::uint64_t seed, float scale = 0.2f);

}  // namespace mgct
