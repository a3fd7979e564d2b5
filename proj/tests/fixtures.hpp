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

#include <cstdint>
#include <memory>
#include <vector>

#include "mgct/engine.hpp"
#include "mgct/rng.hpp"

namespace mgct::testing {

// L=2, d_model=8, vocab=32 GPT-2 style toy; the last vocabulary id plays EOS.
inline ModelConfig ToyConfig(Architecture arch = Architecture::kGpt2) {
  ModelConfig c;
  c.architecture = arch;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 32;
  c.vocab_size = 32;
  c.max_seq_len = 16;
  c.norm_epsilon = 1e-5f;
  return c;
}

struct Toy {
  ModelConfig config;
  TensorStore weights;
  std::shared_ptr<const Model> model;
  TokenId eos() const { return static_cast<TokenId>(config.vocab_size - 1); }
};

inline Toy MakeToy(std::uint64_t seed = 7, ModelConfig config = ToyConfig(), float scale = 0.6f) {
  Toy t;
  t.config = config;
  t.weights = RandomWeights(config, seed, scale);
  t.model = Model::Load(t.weights, config);
  return t;
}

// Random prompt of length in [min_len, max_len] with a subject span that
// leaves at least one continuation token. Ids avoid the EOS id.
inline TokenSequence RandomPrompt(Rng& rng, const ModelConfig& c, std::size_t min_len,
                                  std::size_t max_len) {
  TokenSequence s;
  const std::size_t len = min_len + rng.Below(max_len - min_len + 1);
  for (std::size_t i = 0; i < len; ++i)
    s.ids.push_back(static_cast<TokenId>(rng.Below(c.vocab_size - 1)));
  const std::size_t begin = rng.Below(len - 1);
  const std::size_t end = begin + 1 + rng.Below(len - 1 - begin);
  s.subject = {begin, end};
  return s;
}

}  // namespace mgct::testing
