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

#include "mgct/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgct/error.hpp"

namespace mgct {
namespace {

std::string CodepointToUtf8(std::uint32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    s.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    s.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
  return s;
}

struct ByteAlphabet {
  std::array<std::string, 256> to_unicode;
  std::unordered_map<std::string, unsigned char> to_byte;

  ByteAlphabet() {
    std::array<bool, 256> printable{};
    for (int b = '!'; b <= '~'; ++b) printable[b] = true;
    for (int b = 0xa1; b <= 0xac; ++b) printable[b] = true;
    for (int b = 0xae; b <= 0xff; ++b) printable[b] = true;
    std::uint32_t extra = 0;
    for (int b = 0; b < 256; ++b) {
      const std::uint32_t cp = printable[b] ? static_cast<std::uint32_t>(b) : 256 + extra++;
      to_unicode[b] = CodepointToUtf8(cp);
      to_byte[to_unicode[b]] = static_cast<unsigned char>(b);
    }
  }
};

const ByteAlphabet& Alphabet() {
  static const ByteAlphabet a;
  return a;
}

// Splits a byte-alphabet string into its UTF-8 code point strings.
std::vector<std::string> SplitCodepoints(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    const std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : 4;
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::string ToAlphabet(std::string_view bytes) {
  std::string out;
  for (char c : bytes) out += Alphabet().to_unicode[static_cast<unsigned char>(c)];
  return out;
}

bool IsSpace(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}
bool IsLetter(unsigned char c) { return std::isalpha(c) != 0 || c >= 0x80; }
bool IsDigit(unsigned char c) { return c >= '0' && c <= '9'; }

enum class CharClass { kLetter, kDigit, kOther, kSpace };
CharClass Classify(unsigned char c) {
  if (IsSpace(c)) return CharClass::kSpace;
  if (IsLetter(c)) return CharClass::kLetter;
  if (IsDigit(c)) return CharClass::kDigit;
  return CharClass::kOther;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> PreTokenize(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t n = text.size();
  auto at = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  std::size_t i = 0;
  while (i < n) {
    // Contractions.
    if (text[i] == '\'' && i + 1 < n) {
      const std::string_view rest = text.substr(i + 1);
      std::size_t len = 0;
      if (rest.starts_with("re") || rest.starts_with("ve") || rest.starts_with("ll"))
        len = 3;
      else if (rest[0] == 's' || rest[0] == 't' || rest[0] == 'm' || rest[0] == 'd')
        len = 2;
      if (len > 0) {
        out.emplace_back(i, i + len);
        i += len;
        continue;
      }
    }
    std::size_t start = i;
    if (text[i] == ' ' && i + 1 < n && !IsSpace(at(i + 1))) ++i;  // optional leading space
    const CharClass cls = Classify(at(i));
    if (cls != CharClass::kSpace) {
      std::size_t j = i;
      while (j < n && Classify(at(j)) == cls) ++j;
      out.emplace_back(start, j);
      i = j;
      continue;
    }
    std::size_t j = i;
    while (j < n && IsSpace(at(j))) ++j;
    if (j < n && j - i >= 2) j -= 1;  // leave one space to prefix the next word
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}

Tokenizer Tokenizer::FromParts(std::map<std::string, TokenId> vocab,
                               std::vector<std::pair<std::string, std::string>> merges) {
  Tokenizer t;
  TokenId max_id = -1;
  for (const auto& [tok, id] : vocab) {
    Check(id >= 0, ErrorKind::kData, "negative token id in vocabulary");
    max_id = std::max(max_id, id);
  }
  t.id_to_token_.assign(static_cast<std::size_t>(max_id + 1), std::string());
  for (auto& [tok, id] : vocab) {
    t.id_to_token_[static_cast<std::size_t>(id)] = tok;
    t.token_to_id_[tok] = id;
    if (tok.size() > 2 && tok.front() == '<' && tok.back() == '>') t.specials_.push_back(tok);
  }
  // Longest special first so prefixes never shadow a longer match.
  std::sort(t.specials_.begin(), t.specials_.end(),
            [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (std::size_t r = 0; r < merges.size(); ++r) t.merge_rank_.emplace(merges[r], r);
  t.merges_ = std::move(merges);
  for (int b = 0; b < 256; ++b)
    Check(t.token_to_id_.contains(Alphabet().to_unicode[b]), ErrorKind::kData,
          "vocabulary lacks byte symbol " + std::to_string(b));
  return t;
}

Tokenizer Tokenizer::Load(const std::filesystem::path& vocab_json,
                          const std::filesystem::path& merges_txt) {
  std::ifstream vin(vocab_json);
  if (!vin) Fail(ErrorKind::kConfig, "cannot open vocabulary " + vocab_json.string());
  std::map<std::string, TokenId> vocab;
  try {
    const auto j = nlohmann::json::parse(vin);
    for (auto& [k, v] : j.items()) vocab[k] = v.get<TokenId>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kData, std::string("vocabulary is not a JSON object: ") + e.what());
  }
  std::ifstream min(merges_txt);
  if (!min) Fail(ErrorKind::kConfig, "cannot open merges " + merges_txt.string());
  std::vector<std::pair<std::string, std::string>> merges;
  std::string line;
  while (std::getline(min, line)) {
    if (line.empty() || line.starts_with("#version")) continue;
    const auto sp = line.find(' ');
    Check(sp != std::string::npos, ErrorKind::kData, "malformed merge line: " + line);
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return FromParts(std::move(vocab), std::move(merges));
}

void Tokenizer::Save(const std::filesystem::path& vocab_json,
                     const std::filesystem::path& merges_txt) const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t id = 0; id < id_to_token_.size(); ++id) j[id_to_token_[id]] = id;
  std::ofstream(vocab_json) << j.dump() << "\n";
  std::ofstream m(merges_txt);
  m << "#version: 0.2\n";
  for (const auto& [a, b] : merges_) m << a << ' ' << b << '\n';
}

Tokenizer Tokenizer::Train(std::span<const std::string> corpus, std::size_t n_merges) {
  // Word frequency table over pre-tokenized pieces.
  std::map<std::vector<std::string>, std::size_t> words;
  for (const auto& text : corpus)
    for (auto [b, e] : PreTokenize(text))
      ++words[SplitCodepoints(ToAlphabet(std::string_view(text).substr(b, e - b)))];

  std::map<std::string, TokenId> vocab;
  for (int b = 0; b < 256; ++b) vocab[Alphabet().to_unicode[b]] = b;
  std::vector<std::pair<std::string, std::string>> merges;
  for (std::size_t step = 0; step < n_merges; ++step) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [syms, freq] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) pairs[{syms[i], syms[i + 1]}] += freq;
    if (pairs.empty()) break;
    // Highest count; std::map order breaks ties deterministically.
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    if (best->second < 2) break;
    const auto [a, b] = best->first;
    merges.emplace_back(a, b);
    vocab.emplace(a + b, static_cast<TokenId>(vocab.size()));
    std::map<std::vector<std::string>, std::size_t> next;
    for (const auto& [syms, freq] : words) {
      std::vector<std::string> merged;
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
          merged.push_back(a + b);
          ++i;
        } else {
          merged.push_back(syms[i]);
        }
      }
      next[merged] += freq;
    }
    words = std::move(next);
  }
  vocab.emplace(std::string(kEos), static_cast<TokenId>(vocab.size()));
  return FromParts(std::move(vocab), std::move(merges));
}

std::vector<std::string> Tokenizer::Bpe(std::string_view piece) const {
  std::vector<std::string> syms = SplitCodepoints(piece);
  while (syms.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max(), best_i = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find({syms[i], syms[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_i = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const std::string a = syms[best_i], b = syms[best_i + 1];
    std::vector<std::string> merged;
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
        merged.push_back(a + b);
        ++i;
      } else {
        merged.push_back(syms[i]);
      }
    }
    syms = std::move(merged);
  }
  return syms;
}

void Tokenizer::EncodeOrdinary(std::string_view text, std::size_t base, Encoding& out) const {
  for (auto [b, e] : PreTokenize(text)) {
    std::size_t pos = base + b;
    for (const auto& sym : Bpe(ToAlphabet(text.substr(b, e - b)))) {
      auto it = token_to_id_.find(sym);
      Check(it != token_to_id_.end(), ErrorKind::kData, "BPE produced out-of-vocabulary symbol");
      // One alphabet code point per input byte.
      const std::size_t nbytes = SplitCodepoints(sym).size();
      out.ids.push_back(it->second);
      out.offsets.emplace_back(pos, pos + nbytes);
      pos += nbytes;
    }
  }
}

Encoding Tokenizer::Encode(std::string_view text) const {
  Encoding out;
  std::size_t i = 0, chunk = 0;
  while (i < text.size()) {
    const std::string* hit = nullptr;
    if (text[i] == '<') {
      for (const auto& s : specials_)
        if (text.substr(i).starts_with(s)) {
          hit = &s;
          break;
        }
    }
    if (hit == nullptr) {
      ++i;
      continue;
    }
    EncodeOrdinary(text.substr(chunk, i - chunk), chunk, out);
    out.ids.push_back(token_to_id_.at(*hit));
    out.offsets.emplace_back(i, i + hit->size());
    i += hit->size();
    chunk = i;
  }
  EncodeOrdinary(text.substr(chunk), chunk, out);
  return out;
}

std::string Tokenizer::Decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    Check(id >= 0 && static_cast<std::size_t>(id) < id_to_token_.size(), ErrorKind::kData,
          "token id out of range in decode");
    const std::string& tok = id_to_token_[static_cast<std::size_t>(id)];
    if (std::find(specials_.begin(), specials_.end(), tok) != specials_.end()) {
      out += tok;
      continue;
    }
    for (const auto& cp : SplitCodepoints(tok)) {
      auto it = Alphabet().to_byte.find(cp);
      Check(it != Alphabet().to_byte.end(), ErrorKind::kData, "token outside byte alphabet");
      out.push_back(static_cast<char>(it->second));
    }
  }
  return out;
}

std::optional<TokenId> Tokenizer::Find(std::string_view raw) const {
  auto it = token_to_id_.find(std::string(raw));
  if (it != token_to_id_.end()) return it->second;
  it = token_to_id_.find(ToAlphabet(raw));
  if (it != token_to_id_.end()) return it->second;
  return std::nullopt;
}

TokenId Tokenizer::eos_id() const {
  auto id = Find(kEos);
  Check(id.has_value(), ErrorKind::kData, "tokenizer defines no end-of-text token");
  return *id;
}

TokenSpan Tokenizer::AlignSpan(const Encoding& enc, std::string_view text, std::size_t byte_begin,
                               std::size_t byte_end) {
  Check(byte_begin < byte_end && byte_end <= text.size(), ErrorKind::kData,
        "character span out of range");
  std::size_t first = enc.ids.size(), last = 0;
  for (std::size_t t = 0; t < enc.offsets.size(); ++t) {
    const auto [b, e] = enc.offsets[t];
    std::size_t inside = 0, outside = 0;
    for (std::size_t p = b; p < e; ++p) {
      if (IsSpace(static_cast<unsigned char>(text[p]))) continue;
      (p >= byte_begin && p < byte_end ? inside : outside) += 1;
    }
    if (inside == 0) continue;
    Check(inside != outside, ErrorKind::kData,
          "ambiguous alignment: token '" + std::string(text.substr(b, e - b)) +
              "' straddles the span boundary");
    if (inside > outside) {
      first = std::min(first, t);
      last = std::max(last, t);
    }
  }
  Check(first < enc.ids.size(), ErrorKind::kData, "span covers no token");
  return {first, last + 1};
}

}  // namespace mgct
