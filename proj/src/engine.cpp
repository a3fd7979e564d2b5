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

#include "mgct/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mgct/error.hpp"
#include "mgct/rng.hpp"

namespace mgct {
namespace {

using kernels::AttentionShape;

std::string LayerName(const ModelConfig& c, std::size_t i, const std::string& suffix) {
  const std::string idx = std::to_string(i);
  return c.architecture == Architecture::kGpt2 ? "h." + idx + "." + suffix
                                               : "model.layers." + idx + "." + suffix;
}

const NamedTensor& Fetch(const TensorStore& store, const ModelConfig& config,
                         const std::string& name) {
  if (config.architecture == Architecture::kGpt2 && !store.Contains(name) &&
      store.Contains("transformer." + name))
    return store.Get("transformer." + name);
  return store.Get(name);
}

// GPT-2 Conv1D weights are [in, out]; everything internal is [out, in].
Matrix AsOutIn(const NamedTensor& t, bool transpose) {
  Matrix m(t.shape[0], t.shape[1], t.values);
  return transpose ? m.Transposed() : m;
}

// Rows [begin, begin+count) of an [out, in] matrix.
Matrix RowSlice(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix s(count, m.cols());
  for (std::size_t r = 0; r < count; ++r)
    std::copy_n(m.row(begin + r).begin(), m.cols(), s.row(r).begin());
  return s;
}

std::vector<float> Slice(const std::vector<float>& v, std::size_t begin, std::size_t count) {
  return {v.begin() + static_cast<std::ptrdiff_t>(begin),
          v.begin() + static_cast<std::ptrdiff_t>(begin + count)};
}

// Restorations indexed by (kind, layer) for O(1) lookup during the pass.
class RestorationIndex {
 public:
  RestorationIndex(const InterventionPlan* plan, const ModelConfig& config, std::size_t n_tokens) {
    const std::size_t L = config.n_layers;
    by_layer_.resize(3 * (L + 1));
    if (plan == nullptr) return;
    for (const auto& r : plan->restorations) {
      const bool hidden = r.kind == StateKind::kHidden;
      Check(r.layer <= L && (hidden || r.layer >= 1), ErrorKind::kInvalidArgument,
            "restoration layer " + std::to_string(r.layer) + " out of range for " +
                std::string(ToString(r.kind)));
      Check(r.token < n_tokens, ErrorKind::kInvalidArgument,
            "restoration token " + std::to_string(r.token) + " out of range");
      Check(r.value.size() == config.d_model, ErrorKind::kInvalidArgument,
            "restoration vector has dimension " + std::to_string(r.value.size()) +
                ", expected " + std::to_string(config.d_model));
      by_layer_[Slot(r.kind, r.layer)].push_back(&r);
    }
  }

  void Apply(StateKind kind, std::size_t layer, Matrix& states) const {
    for (const Restoration* r : by_layer_[Slot(kind, layer)])
      std::copy(r->value.begin(), r->value.end(), states.row(r->token).begin());
  }

 private:
  static std::size_t Slot(StateKind kind, std::size_t layer) {
    return 3 * layer + static_cast<std::size_t>(kind);
  }
  std::vector<std::vector<const Restoration*>> by_layer_;
};

void StoreRows(const Matrix& states, std::span<float> dst) {
  std::copy(states.flat().begin(), states.flat().end(), dst.begin());
}

}  // namespace

std::string_view ToString(Architecture a) {
  return a == Architecture::kGpt2 ? "gpt2" : "llama";
}

Architecture ArchitectureFromString(std::string_view s) {
  if (s == "gpt2" || s == "pre-norm-gelu") return Architecture::kGpt2;
  if (s == "llama" || s == "pre-norm-silu-gated") return Architecture::kLlama;
  Fail(ErrorKind::kConfig, "unknown architecture '" + std::string(s) + "'");
}

std::string_view ToString(StateKind k) {
  switch (k) {
    case StateKind::kHidden: return "hidden";
    case StateKind::kAttn: return "attn";
    case StateKind::kMlp: return "mlp";
  }
  return "?";
}

StateKind StateKindFromString(std::string_view s) {
  if (s == "hidden") return StateKind::kHidden;
  if (s == "attn") return StateKind::kAttn;
  if (s == "mlp") return StateKind::kMlp;
  Fail(ErrorKind::kInvalidArgument, "unknown state kind '" + std::string(s) + "'");
}

void ModelConfig::Validate() const {
  Check(n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_ff >= 1 && vocab_size >= 1 &&
            max_seq_len >= 1,
        ErrorKind::kConfig, "model config: all counts must be >= 1");
  Check(d_model % n_heads == 0, ErrorKind::kConfig,
        "model config: d_model must be divisible by n_heads");
  Check(norm_epsilon > 0.0f, ErrorKind::kConfig, "model config: norm_epsilon must be > 0");
  Check(architecture != Architecture::kLlama || head_dim() % 2 == 0, ErrorKind::kConfig,
        "model config: rotary embeddings need an even head dimension");
}

nlohmann::json ModelConfig::ToJson() const {
  return {{"architecture", ToString(architecture)},
          {"n_layers", n_layers},
          {"n_heads", n_heads},
          {"d_model", d_model},
          {"d_ff", d_ff},
          {"vocab_size", vocab_size},
          {"max_seq_len", max_seq_len},
          {"norm_epsilon", norm_epsilon},
          {"rope_theta", rope_theta}};
}

ModelConfig ModelConfig::FromJson(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("n_layers")) {
      c.architecture = ArchitectureFromString(j.at("architecture").get<std::string>());
      c.n_layers = j.at("n_layers");
      c.n_heads = j.at("n_heads");
      c.d_model = j.at("d_model");
      c.d_ff = j.at("d_ff");
      c.vocab_size = j.at("vocab_size");
      c.max_seq_len = j.at("max_seq_len");
      c.norm_epsilon = j.value("norm_epsilon", 1e-5f);
      c.rope_theta = j.value("rope_theta", 10000.0f);
    } else if (j.contains("n_layer")) {  // Hugging Face GPT-2
      c.architecture = Architecture::kGpt2;
      c.n_layers = j.at("n_layer");
      c.n_heads = j.at("n_head");
      c.d_model = j.at("n_embd");
      c.d_ff = j.contains("n_inner") && !j["n_inner"].is_null() ? j["n_inner"].get<std::size_t>()
                                                                 : 4 * c.d_model;
      c.vocab_size = j.at("vocab_size");
      c.max_seq_len = j.at("n_positions");
      c.norm_epsilon = j.value("layer_norm_epsilon", 1e-5f);
    } else if (j.contains("num_hidden_layers")) {  // Hugging Face LLaMA
      c.architecture = Architecture::kLlama;
      c.n_layers = j.at("num_hidden_layers");
      c.n_heads = j.at("num_attention_heads");
      c.d_model = j.at("hidden_size");
      c.d_ff = j.at("intermediate_size");
      c.vocab_size = j.at("vocab_size");
      c.max_seq_len = j.at("max_position_embeddings");
      c.norm_epsilon = j.value("rms_norm_eps", 1e-6f);
      c.rope_theta = j.value("rope_theta", 10000.0f);
      if (j.contains("rope_parameters") && j["rope_parameters"].contains("rope_theta"))
        c.rope_theta = j["rope_parameters"]["rope_theta"];
      Check(j.value("num_key_value_heads", c.n_heads) == c.n_heads, ErrorKind::kConfig,
            "grouped-query attention (num_key_value_heads != num_attention_heads) is not supported");
    } else {
      Fail(ErrorKind::kConfig, "model config: unrecognized key set");
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("model config: ") + e.what());
  }
  c.Validate();
  return c;
}

ModelConfig ModelConfig::FromFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kConfig, "cannot open model config " + path.string());
  try {
    return FromJson(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorKind::kConfig, std::string("model config is not JSON: ") + e.what());
  }
}

std::vector<TensorSpec> WeightManifest(const ModelConfig& c) {
  c.Validate();
  const std::size_t d = c.d_model, f = c.d_ff, V = c.vocab_size;
  std::vector<TensorSpec> out;
  if (c.architecture == Architecture::kGpt2) {
    out.push_back({"wte.weight", {V, d}});
    out.push_back({"wpe.weight", {c.max_seq_len, d}});
    for (std::size_t i = 0; i < c.n_layers; ++i) {
      out.push_back({LayerName(c, i, "ln_1.weight"), {d}});
      out.push_back({LayerName(c, i, "ln_1.bias"), {d}});
      out.push_back({LayerName(c, i, "attn.c_attn.weight"), {d, 3 * d}});
      out.push_back({LayerName(c, i, "attn.c_attn.bias"), {3 * d}});
      out.push_back({LayerName(c, i, "attn.c_proj.weight"), {d, d}});
      out.push_back({LayerName(c, i, "attn.c_proj.bias"), {d}});
      out.push_back({LayerName(c, i, "ln_2.weight"), {d}});
      out.push_back({LayerName(c, i, "ln_2.bias"), {d}});
      out.push_back({LayerName(c, i, "mlp.c_fc.weight"), {d, f}});
      out.push_back({LayerName(c, i, "mlp.c_fc.bias"), {f}});
      out.push_back({LayerName(c, i, "mlp.c_proj.weight"), {f, d}});
      out.push_back({LayerName(c, i, "mlp.c_proj.bias"), {d}});
    }
    out.push_back({"ln_f.weight", {d}});
    out.push_back({"ln_f.bias", {d}});
  } else {
    out.push_back({"model.embed_tokens.weight", {V, d}});
    for (std::size_t i = 0; i < c.n_layers; ++i) {
      out.push_back({LayerName(c, i, "input_layernorm.weight"), {d}});
      out.push_back({LayerName(c, i, "self_attn.q_proj.weight"), {d, d}});
      out.push_back({LayerName(c, i, "self_attn.k_proj.weight"), {d, d}});
      out.push_back({LayerName(c, i, "self_attn.v_proj.weight"), {d, d}});
      out.push_back({LayerName(c, i, "self_attn.o_proj.weight"), {d, d}});
      out.push_back({LayerName(c, i, "post_attention_layernorm.weight"), {d}});
      out.push_back({LayerName(c, i, "mlp.gate_proj.weight"), {f, d}});
      out.push_back({LayerName(c, i, "mlp.up_proj.weight"), {f, d}});
      out.push_back({LayerName(c, i, "mlp.down_proj.weight"), {d, f}});
    }
    out.push_back({"model.norm.weight", {d}});
    out.push_back({"lm_head.weight", {V, d}});
  }
  return out;
}

void TokenSequence::Validate(const ModelConfig& config) const {
  Check(!ids.empty(), ErrorKind::kInvalidArgument, "empty token sequence");
  Check(ids.size() <= config.max_seq_len, ErrorKind::kInvalidArgument,
        "sequence of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len " +
            std::to_string(config.max_seq_len));
  for (TokenId id : ids)
    Check(id >= 0 && static_cast<std::size_t>(id) < config.vocab_size,
          ErrorKind::kInvalidArgument, "token id " + std::to_string(id) + " out of vocabulary");
  Check(subject.begin < subject.end && subject.end <= ids.size(), ErrorKind::kInvalidArgument,
        "subject span out of range");
}

// --- TraceRecord -----------------------------------------------------------

TraceRecord::TraceRecord(std::size_t n_layers, std::size_t n_tokens, std::size_t d_model)
    : n_layers_(n_layers),
      n_tokens_(n_tokens),
      d_model_(d_model),
      hidden_((n_layers + 1) * n_tokens * d_model),
      attn_(n_layers * n_tokens * d_model),
      mlp_(n_layers * n_tokens * d_model) {}

std::span<const float> TraceRecord::hidden(std::size_t l, std::size_t k) const {
  Check(l <= n_layers_ && k < n_tokens_, ErrorKind::kInvalidArgument, "hidden index out of range");
  return {hidden_.data() + (l * n_tokens_ + k) * d_model_, d_model_};
}

std::span<const float> TraceRecord::attn(std::size_t l, std::size_t k) const {
  Check(l >= 1 && l <= n_layers_ && k < n_tokens_, ErrorKind::kInvalidArgument,
        "attn index out of range");
  return {attn_.data() + ((l - 1) * n_tokens_ + k) * d_model_, d_model_};
}

std::span<const float> TraceRecord::mlp(std::size_t l, std::size_t k) const {
  Check(l >= 1 && l <= n_layers_ && k < n_tokens_, ErrorKind::kInvalidArgument,
        "mlp index out of range");
  return {mlp_.data() + ((l - 1) * n_tokens_ + k) * d_model_, d_model_};
}

std::span<const float> TraceRecord::state(StateKind kind, std::size_t l, std::size_t k) const {
  switch (kind) {
    case StateKind::kHidden: return hidden(l, k);
    case StateKind::kAttn: return attn(l, k);
    case StateKind::kMlp: return mlp(l, k);
  }
  return {};
}

std::span<float> TraceRecord::mutable_hidden(std::size_t l, std::size_t k) {
  auto s = std::as_const(*this).hidden(l, k);
  return {const_cast<float*>(s.data()), s.size()};
}
std::span<float> TraceRecord::mutable_attn(std::size_t l, std::size_t k) {
  auto s = std::as_const(*this).attn(l, k);
  return {const_cast<float*>(s.data()), s.size()};
}
std::span<float> TraceRecord::mutable_mlp(std::size_t l, std::size_t k) {
  auto s = std::as_const(*this).mlp(l, k);
  return {const_cast<float*>(s.data()), s.size()};
}

TokenId TraceRecord::argmax() const {
  return static_cast<TokenId>(std::max_element(output_.begin(), output_.end()) - output_.begin());
}

// --- Model -----------------------------------------------------------------

std::shared_ptr<const Model> Model::Load(const TensorStore& store, const ModelConfig& config) {
  config.Validate();
  for (const auto& spec : WeightManifest(config)) {
    const NamedTensor& t = Fetch(store, config, spec.name);
    if (t.shape != spec.shape) {
      std::string got, want;
      for (auto s : t.shape) got += std::to_string(s) + ",";
      for (auto s : spec.shape) want += std::to_string(s) + ",";
      Fail(ErrorKind::kModel, "tensor '" + spec.name + "' has shape [" + got + "], expected [" +
                                  want + "]");
    }
    for (float v : t.values)
      Check(std::isfinite(v), ErrorKind::kModel, "tensor '" + spec.name + "' has non-finite values");
  }

  std::shared_ptr<Model> m(new Model());
  m->config_ = config;
  const std::size_t d = config.d_model;
  auto get = [&](const std::string& n) -> const NamedTensor& { return Fetch(store, config, n); };
  auto vec = [&](const std::string& n) { return get(n).values; };

  if (config.architecture == Architecture::kGpt2) {
    m->embed_ = AsOutIn(get("wte.weight"), false);
    m->positions_ = AsOutIn(get("wpe.weight"), false);
    for (std::size_t i = 0; i < config.n_layers; ++i) {
      LayerWeights w;
      w.norm1_w = vec(LayerName(config, i, "ln_1.weight"));
      w.norm1_b = vec(LayerName(config, i, "ln_1.bias"));
      const Matrix qkv = AsOutIn(get(LayerName(config, i, "attn.c_attn.weight")), true);
      const auto qkv_b = vec(LayerName(config, i, "attn.c_attn.bias"));
      w.w_q = RowSlice(qkv, 0, d);
      w.w_k = RowSlice(qkv, d, d);
      w.w_v = RowSlice(qkv, 2 * d, d);
      w.b_q = Slice(qkv_b, 0, d);
      w.b_k = Slice(qkv_b, d, d);
      w.b_v = Slice(qkv_b, 2 * d, d);
      w.w_o = AsOutIn(get(LayerName(config, i, "attn.c_proj.weight")), true);
      w.b_o = vec(LayerName(config, i, "attn.c_proj.bias"));
      w.norm2_w = vec(LayerName(config, i, "ln_2.weight"));
      w.norm2_b = vec(LayerName(config, i, "ln_2.bias"));
      w.w_up = AsOutIn(get(LayerName(config, i, "mlp.c_fc.weight")), true);
      w.b_up = vec(LayerName(config, i, "mlp.c_fc.bias"));
      w.w_down = AsOutIn(get(LayerName(config, i, "mlp.c_proj.weight")), true);
      w.b_down = vec(LayerName(config, i, "mlp.c_proj.bias"));
      m->layers_.push_back(std::move(w));
    }
    m->final_w_ = vec("ln_f.weight");
    m->final_b_ = vec("ln_f.bias");
    m->lm_head_ = m->embed_;
  } else {
    m->embed_ = AsOutIn(get("model.embed_tokens.weight"), false);
    for (std::size_t i = 0; i < config.n_layers; ++i) {
      LayerWeights w;
      w.norm1_w = vec(LayerName(config, i, "input_layernorm.weight"));
      w.w_q = AsOutIn(get(LayerName(config, i, "self_attn.q_proj.weight")), false);
      w.w_k = AsOutIn(get(LayerName(config, i, "self_attn.k_proj.weight")), false);
      w.w_v = AsOutIn(get(LayerName(config, i, "self_attn.v_proj.weight")), false);
      w.w_o = AsOutIn(get(LayerName(config, i, "self_attn.o_proj.weight")), false);
      w.norm2_w = vec(LayerName(config, i, "post_attention_layernorm.weight"));
      w.w_gate = AsOutIn(get(LayerName(config, i, "mlp.gate_proj.weight")), false);
      w.w_up = AsOutIn(get(LayerName(config, i, "mlp.up_proj.weight")), false);
      w.w_down = AsOutIn(get(LayerName(config, i, "mlp.down_proj.weight")), false);
      m->layers_.push_back(std::move(w));
    }
    m->final_w_ = vec("model.norm.weight");
    m->lm_head_ = AsOutIn(get("lm_head.weight"), false);
  }
  return m;
}

std::shared_ptr<const Model> Model::LoadFile(const std::filesystem::path& weights,
                                             const ModelConfig& config) {
  return Load(TensorStore::Load(weights), config);
}

TraceRecord Model::ForwardRecorded(std::span<const TokenId> ids) const {
  TraceRecord rec(config_.n_layers, ids.size(), config_.d_model);
  rec.mutable_output_distribution() = Run(ids, nullptr, &rec);
  return rec;
}

TraceRecord Model::ForwardIntervened(std::span<const TokenId> ids,
                                     const InterventionPlan& plan) const {
  TraceRecord rec(config_.n_layers, ids.size(), config_.d_model);
  rec.mutable_output_distribution() = Run(ids, &plan, &rec);
  return rec;
}

std::vector<double> Model::NextTokenDistribution(std::span<const TokenId> ids,
                                                 const InterventionPlan* plan) const {
  return Run(ids, plan, nullptr);
}

std::vector<double> Model::Run(std::span<const TokenId> ids, const InterventionPlan* plan,
                               TraceRecord* record) const {
  const ModelConfig& c = config_;
  const std::size_t K = ids.size(), d = c.d_model, L = c.n_layers;
  Check(K > 0, ErrorKind::kInvalidArgument, "empty token sequence");
  Check(K <= c.max_seq_len, ErrorKind::kInvalidArgument,
        "sequence of " + std::to_string(K) + " tokens exceeds max_seq_len " +
            std::to_string(c.max_seq_len));
  for (TokenId id : ids)
    Check(id >= 0 && static_cast<std::size_t>(id) < c.vocab_size, ErrorKind::kInvalidArgument,
          "token id " + std::to_string(id) + " out of vocabulary");
  if (plan != nullptr) {
    for (const auto& [pos, id] : plan->corruption) {
      Check(pos < K, ErrorKind::kInvalidArgument,
            "corruption position " + std::to_string(pos) + " outside sequence");
      Check(id >= 0 && static_cast<std::size_t>(id) < c.vocab_size, ErrorKind::kInvalidArgument,
            "corruption token out of vocabulary");
    }
  }
  const RestorationIndex restore(plan, c, K);
  const bool gpt2 = c.architecture == Architecture::kGpt2;
  const kernels::Backend be = backend_;
  const AttentionShape shape{c.n_heads, c.head_dim()};
  forward_calls_.fetch_add(1);

  // Corruption replaces the token embedding only; positions are untouched.
  Matrix h(K, d);
  for (std::size_t k = 0; k < K; ++k) {
    TokenId id = ids[k];
    if (plan != nullptr) {
      if (auto it = plan->corruption.find(k); it != plan->corruption.end()) id = it->second;
    }
    auto row = h.row(k);
    auto emb = embed_.row(static_cast<std::size_t>(id));
    for (std::size_t i = 0; i < d; ++i) row[i] = emb[i] + (gpt2 ? positions_(k, i) : 0.0f);
  }
  restore.Apply(StateKind::kHidden, 0, h);
  if (record) StoreRows(h, {record->mutable_hidden(0, 0).data(), K * d});

  Matrix x, q, k, v, ctx, a, mlp_in, f, g, m;
  for (std::size_t l = 1; l <= L; ++l) {
    const LayerWeights& w = layers_[l - 1];
    // Attention sublayer.
    if (gpt2)
      kernels::LayerNorm(be, h, w.norm1_w, w.norm1_b, c.norm_epsilon, x);
    else
      kernels::RmsNorm(be, h, w.norm1_w, c.norm_epsilon, x);
    kernels::Linear(be, x, w.w_q, w.b_q, q);
    kernels::Linear(be, x, w.w_k, w.b_k, k);
    kernels::Linear(be, x, w.w_v, w.b_v, v);
    if (!gpt2) {
      kernels::ApplyRope(q, shape, c.rope_theta);
      kernels::ApplyRope(k, shape, c.rope_theta);
    }
    kernels::CausalAttention(be, q, k, v, shape, ctx);
    kernels::Linear(be, ctx, w.w_o, w.b_o, a);
    restore.Apply(StateKind::kAttn, l, a);

    // Feed-forward sublayer reads h[l-1] + a[l].
    mlp_in = h;
    for (std::size_t i = 0; i < mlp_in.size(); ++i) mlp_in.flat()[i] += a.flat()[i];
    if (gpt2) {
      kernels::LayerNorm(be, mlp_in, w.norm2_w, w.norm2_b, c.norm_epsilon, x);
      kernels::Linear(be, x, w.w_up, w.b_up, f);
      for (float& z : f.flat()) z = kernels::GeluTanh(z);
    } else {
      kernels::RmsNorm(be, mlp_in, w.norm2_w, c.norm_epsilon, x);
      kernels::Linear(be, x, w.w_gate, {}, g);
      kernels::Linear(be, x, w.w_up, {}, f);
      for (std::size_t i = 0; i < f.size(); ++i) f.flat()[i] *= kernels::Silu(g.flat()[i]);
    }
    kernels::Linear(be, f, w.w_down, w.b_down, m);
    restore.Apply(StateKind::kMlp, l, m);

    for (std::size_t i = 0; i < h.size(); ++i) h.flat()[i] = mlp_in.flat()[i] + m.flat()[i];
    restore.Apply(StateKind::kHidden, l, h);

    if (record) {
      StoreRows(a, {record->mutable_attn(l, 0).data(), K * d});
      StoreRows(m, {record->mutable_mlp(l, 0).data(), K * d});
      StoreRows(h, {record->mutable_hidden(l, 0).data(), K * d});
    }
  }

  // Unembed the last position only.
  Matrix last(1, d);
  std::copy_n(h.row(K - 1).begin(), d, last.row(0).begin());
  if (gpt2)
    kernels::LayerNorm(be, last, final_w_, final_b_, c.norm_epsilon, x);
  else
    kernels::RmsNorm(be, last, final_w_, c.norm_epsilon, x);
  Matrix logits;
  kernels::Linear(be, x, lm_head_, {}, logits);

  std::vector<double> probs(c.vocab_size);
  const float max_logit = *std::max_element(logits.flat().begin(), logits.flat().end());
  double denom = 0.0;
  for (std::size_t i = 0; i < c.vocab_size; ++i) {
    probs[i] = std::exp(static_cast<double>(logits(0, i)) - static_cast<double>(max_logit));
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

TraceRecord ForwardRecorded(const Model& model, const TokenSequence& tokens) {
  tokens.Validate(model.config());
  return model.ForwardRecorded(tokens.ids);
}

TraceRecord ForwardIntervened(const Model& model, const TokenSequence& tokens,
                              const InterventionPlan& plan) {
  tokens.Validate(model.config());
  return model.ForwardIntervened(tokens.ids, plan);
}

TensorStore RandomWeights(const ModelConfig& config, std::uint64_t seed, float scale) {
  Rng rng(seed);
  TensorStore store;
  for (const auto& spec : WeightManifest(config)) {
    std::size_t n = 1;
    for (auto s : spec.shape) n *= s;
    std::vector<float> values(n);
    const bool norm_gain = spec.shape.size() == 1 &&
                           (spec.name.find("ln_") != std::string::npos ||
                            spec.name.find("norm") != std::string::npos) &&
                           spec.name.find(".bias") == std::string::npos;
    for (float& v : values) {
      const float z = static_cast<float>(rng.Normal());
      v = norm_gain ? 1.0f + 0.1f * z : scale * z;
    }
    store.Put(spec.name, spec.shape, std::move(values));
  }
  return store;
}

}  // namespace mgct
