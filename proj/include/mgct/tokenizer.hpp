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

// Byte-level BPE tokenizer driven by GPT-2 style vocabulary (vocab.json) and
// merge-rank (merges.txt) files.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mgct/engine.hpp"

namespace mgct {

struct Encoding {
  std::vector<TokenId> ids;
  // Byte range [first, second) of each token in the input text.
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
};

class Tokenizer {
 public:
  static constexpr std::string_view kEos = "<|endoftext|>";
  static constexpr std::string_view kUnk = "<unk>";

  static Tokenizer Load(const std::filesystem::path& vocab_json,
                        const std::filesystem::path& merges_txt);
  // `vocab` keys are in the byte-to-unicode alphabet, as in vocab.json.
  static Tokenizer FromParts(std::map<std::string, TokenId> vocab,
                             std::vector<std::pair<std::string, std::string>> merges);

  // Learns `n_merges` merges over `corpus` starting from the 256 byte
  // symbols; the end-of-text token is appended last. Used to build fixtures.
  static Tokenizer Train(std::span<const std::string> corpus, std::size_t n_merges);

  Encoding Encode(std::string_view text) const;
  std::string Decode(std::span<const TokenId> ids) const;

  std::size_t vocab_size() const { return id_to_token_.size(); }
  std::optional<TokenId> Find(std::string_view raw_text_token) const;
  TokenId eos_id() const;
  std::optional<TokenId> unk_id() const { return Find(kUnk); }

  // Maps a byte span of the encoded text onto token coordinates. A token
  // belongs to the span when more of its non-space bytes fall inside the span
  // than outside; a tie is ambiguous and raises kData.
  static TokenSpan AlignSpan(const Encoding& enc, std::string_view text, std::size_t byte_begin,
                             std::size_t byte_end);

  void Save(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) const;

 private:
  std::vector<std::string> Bpe(std::string_view piece_unicode) const;
  void EncodeOrdinary(std::string_view text, std::size_t base, Encoding& out) const;

  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;  // byte-to-unicode alphabet
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> specials_;
};

// Splits text the way GPT-2's pre-tokenizer regex does, treating every byte
// >= 0x80 as a letter. Returns byte ranges.
std::vector<std::pair<std::size_t, std::size_t>> PreTokenize(std::string_view text);

}  // namespace mgct
