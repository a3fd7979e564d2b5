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

#include "oracle_forward.hpp"

#include <cmath>
#include <string>

namespace mgct::oracle {
namespace {

using Vec = std::vector<float>;

const std::vector<float>& W(const TensorStore& s, const std::string& name) {
  return s.Get(name).values;
}

// y = x * M for M stored [in, out] (GPT-2 Conv1D layout).
Vec MulInOut(const Vec& x, const Vec& m, std::size_t in, std::size_t out, const Vec* bias) {
  Vec y(out, 0.0f);
  for (std::size_t o = 0; o < out; ++o) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < in; ++i) acc += x[i] * m[i * out + o];
    y[o] = bias ? acc + (*bias)[o] : acc;
  }
  return y;
}

// y = M x for M stored [out, in].
Vec MulOutIn(const Vec& x, const Vec& m, std::size_t in, std::size_t out) {
  Vec y(out, 0.0f);
  for (std::size_t o = 0; o < out; ++o) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < in; ++i) acc += m[o * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

Vec LayerNorm(const Vec& x, const Vec& g, const Vec& b, float eps) {
  float mean = 0.0f;
  for (float v : x) mean += v;
  mean /= static_cast<float>(x.size());
  float var = 0.0f;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<float>(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = (x[i] - mean) * (1.0f / std::sqrt(var + eps)) * g[i] + b[i];
  return y;
}

Vec RmsNorm(const Vec& x, const Vec& g, float eps) {
  float ms = 0.0f;
  for (float v : x) ms += v * v;
  ms /= static_cast<float>(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * (1.0f / std::sqrt(ms + eps)) * g[i];
  return y;
}

void Rope(Vec& x, std::size_t pos, std::size_t heads, std::size_t hd, float theta) {
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < hd / 2; ++i) {
      const float angle = static_cast<float>(pos) *
                          std::pow(theta, -2.0f * static_cast<float>(i) / static_cast<float>(hd));
      const float a = x[h * hd + i], b = x[h * hd + i + hd / 2];
      x[h * hd + i] = a * std::cos(angle) - b * std::sin(angle);
      x[h * hd + i + hd / 2] = b * std::cos(angle) + a * std::sin(angle);
    }
  }
}

void Inject(const std::vector<Injection>& inj, StateKind kind, std::size_t layer, std::size_t token,
            Vec& state) {
  for (const auto& i : inj)
    if (i.kind == kind && i.layer == layer && i.token == token) state = i.value;
}

}  // namespace

OracleStates Forward(const TensorStore& s, const ModelConfig& c, const std::vector<TokenId>& ids,
                     const std::map<std::size_t, TokenId>& corruption,
                     const std::vector<Injection>& injections) {
  const bool gpt2 = c.architecture == Architecture::kGpt2;
  const std::size_t K = ids.size(), d = c.d_model, f = c.d_ff, H = c.n_heads, hd = d / H;
  auto name = [&](std::size_t i, const std::string& suffix) {
    return (gpt2 ? "h." : "model.layers.") + std::to_string(i) + "." + suffix;
  };

  OracleStates st;
  st.hidden.assign(c.n_layers + 1, std::vector<Vec>(K));
  st.attn.assign(c.n_layers, std::vector<Vec>(K));
  st.mlp.assign(c.n_layers, std::vector<Vec>(K));

  const Vec& emb = W(s, gpt2 ? "wte.weight" : "model.embed_tokens.weight");
  for (std::size_t k = 0; k < K; ++k) {
    const TokenId id = corruption.contains(k) ? corruption.at(k) : ids[k];
    Vec h(d);
    for (std::size_t i = 0; i < d; ++i) {
      h[i] = emb[static_cast<std::size_t>(id) * d + i];
      if (gpt2) h[i] += W(s, "wpe.weight")[k * d + i];
    }
    Inject(injections, StateKind::kHidden, 0, k, h);
    st.hidden[0][k] = h;
  }

  for (std::size_t l = 1; l <= c.n_layers; ++l) {
    const std::size_t i = l - 1;
    // Keys/values for every position of this layer, computed from h[l-1].
    std::vector<Vec> qs(K), ks(K), vs(K);
    for (std::size_t k = 0; k < K; ++k) {
      const Vec& prev = st.hidden[l - 1][k];
      if (gpt2) {
        const Vec x = LayerNorm(prev, W(s, name(i, "ln_1.weight")), W(s, name(i, "ln_1.bias")),
                                c.norm_epsilon);
        const Vec qkv = MulInOut(x, W(s, name(i, "attn.c_attn.weight")), d, 3 * d,
                                 &W(s, name(i, "attn.c_attn.bias")));
        qs[k].assign(qkv.begin(), qkv.begin() + static_cast<std::ptrdiff_t>(d));
        ks[k].assign(qkv.begin() + static_cast<std::ptrdiff_t>(d),
                     qkv.begin() + static_cast<std::ptrdiff_t>(2 * d));
        vs[k].assign(qkv.begin() + static_cast<std::ptrdiff_t>(2 * d), qkv.end());
      } else {
        const Vec x = RmsNorm(prev, W(s, name(i, "input_layernorm.weight")), c.norm_epsilon);
        qs[k] = MulOutIn(x, W(s, name(i, "self_attn.q_proj.weight")), d, d);
        ks[k] = MulOutIn(x, W(s, name(i, "self_attn.k_proj.weight")), d, d);
        vs[k] = MulOutIn(x, W(s, name(i, "self_attn.v_proj.weight")), d, d);
        Rope(qs[k], k, H, hd, c.rope_theta);
        Rope(ks[k], k, H, hd, c.rope_theta);
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      Vec ctx(d, 0.0f);
      for (std::size_t h = 0; h < H; ++h) {
        std::vector<float> w(k + 1);
        float mx = -INFINITY;
        for (std::size_t j = 0; j <= k; ++j) {
          float dot = 0.0f;
          for (std::size_t t = 0; t < hd; ++t) dot += qs[k][h * hd + t] * ks[j][h * hd + t];
          w[j] = dot * (1.0f / std::sqrt(static_cast<float>(hd)));
          mx = std::max(mx, w[j]);
        }
        float z = 0.0f;
        for (auto& v : w) {
          v = std::exp(v - mx);
          z += v;
        }
        for (std::size_t j = 0; j <= k; ++j)
          for (std::size_t t = 0; t < hd; ++t) ctx[h * hd + t] += (w[j] / z) * vs[j][h * hd + t];
      }
      Vec a = gpt2 ? MulInOut(ctx, W(s, name(i, "attn.c_proj.weight")), d, d,
                              &W(s, name(i, "attn.c_proj.bias")))
                   : MulOutIn(ctx, W(s, name(i, "self_attn.o_proj.weight")), d, d);
      Inject(injections, StateKind::kAttn, l, k, a);

      Vec r(d);
      for (std::size_t t = 0; t < d; ++t) r[t] = st.hidden[l - 1][k][t] + a[t];
      Vec m;
      if (gpt2) {
        const Vec x = LayerNorm(r, W(s, name(i, "ln_2.weight")), W(s, name(i, "ln_2.bias")),
                                c.norm_epsilon);
        Vec u = MulInOut(x, W(s, name(i, "mlp.c_fc.weight")), d, f, &W(s, name(i, "mlp.c_fc.bias")));
        for (float& z : u)
          z = 0.5f * z * (1.0f + std::tanh(0.7978845608028654f * (z + 0.044715f * z * z * z)));
        m = MulInOut(u, W(s, name(i, "mlp.c_proj.weight")), f, d, &W(s, name(i, "mlp.c_proj.bias")));
      } else {
        const Vec x = RmsNorm(r, W(s, name(i, "post_attention_layernorm.weight")), c.norm_epsilon);
        const Vec g = MulOutIn(x, W(s, name(i, "mlp.gate_proj.weight")), d, f);
        Vec u = MulOutIn(x, W(s, name(i, "mlp.up_proj.weight")), d, f);
        for (std::size_t t = 0; t < f; ++t) u[t] *= g[t] / (1.0f + std::exp(-g[t]));
        m = MulOutIn(u, W(s, name(i, "mlp.down_proj.weight")), f, d);
      }
      Inject(injections, StateKind::kMlp, l, k, m);

      Vec h(d);
      for (std::size_t t = 0; t < d; ++t) h[t] = r[t] + m[t];
      Inject(injections, StateKind::kHidden, l, k, h);
      st.attn[i][k] = a;
      st.mlp[i][k] = m;
      st.hidden[l][k] = h;
    }
  }

  const Vec& last = st.hidden[c.n_layers][K - 1];
  const Vec x = gpt2 ? LayerNorm(last, W(s, "ln_f.weight"), W(s, "ln_f.bias"), c.norm_epsilon)
                     : RmsNorm(last, W(s, "model.norm.weight"), c.norm_epsilon);
  const Vec& head = W(s, gpt2 ? "wte.weight" : "lm_head.weight");
  std::vector<float> logits = MulOutIn(x, head, d, c.vocab_size);
  float mx = -INFINITY;
  for (float v : logits) mx = std::max(mx, v);
  double z = 0.0;
  st.probs.resize(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    st.probs[t] = std::exp(static_cast<double>(logits[t]) - mx);
    z += st.probs[t];
  }
  for (double& p : st.probs) p /= z;
  return st;
}

}  // namespace mgct::oracle
