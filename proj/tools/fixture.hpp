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

// Offline fixture set for the dataset/trace/detect pipeline: a hand-wired
// two-layer GPT-2 over a trained tokenizer, a ParaRel-style triple file, a
// category map, relation patterns, linking templates and a transcript that
// stands in for the paragraph generator.
//
// The model recalls a company's city from its name (an MLP at the subject
// tokens, moved to the last position by attention) and also copies the city
// mentioned in the context (an attention head gated on the subject being
// present). Recall strength differs between companies, so some prompts
// follow the context and others follow memory.

#include <cstddef>
#include <cstdint>
#include <filesystem>

namespace mgct::fixture {

struct FixtureOptions {
  std::size_t n_triples = 50;
  std::uint64_t seed = 1;
};

struct FixtureFiles {
  std::filesystem::path weights;  // config.json, model.safetensors, vocab.json, merges.txt
  std::filesystem::path pararel, categories, patterns, linking, transcript;
};

FixtureFiles WriteFixture(const std::filesystem::path& dir, const FixtureOptions& options = {});

}  // namespace mgct::fixture
