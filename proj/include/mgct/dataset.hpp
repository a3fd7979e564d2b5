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

// Counterfactual triple sets and Fakepedia paragraph datasets.
//
// Pipeline: ParaRel-style factual triples -> rewrite query templates so the
// object is the next token -> keep triples the model knows -> pick the four
// least likely same-category objects as counterfactuals -> ask a generator
// for a paragraph asserting each counterfactual -> quality filter -> compose
// multi-hop variants by appending a linking sentence to another subject's
// paragraph.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mgct/engine.hpp"
#include "mgct/tokenizer.hpp"

namespace mgct::dataset {

enum class TruthTag { kFactual, kCounterfactual };
std::string_view ToString(TruthTag t);
TruthTag TruthTagFromString(std::string_view s);

struct FactTriple {
  std::string subject;
  std::string relation;
  std::string object;
  TruthTag truth = TruthTag::kFactual;
  // Rewritten query template ("[X] is located in"); may be empty.
  std::string query;
  // Object of the factual triple a counterfactual was derived from.
  std::string source_object;

  void Validate() const;
  // "relation|subject|object"; unique within a dataset.
  std::string Key() const;
  friend bool operator==(const FactTriple&, const FactTriple&) = default;
};

inline constexpr std::string_view kSubjectSlot = "[X]";
inline constexpr std::string_view kObjectSlot = "[Y]";

struct QueryTemplate {
  std::string relation;
  std::string text;  // contains kSubjectSlot exactly once, ends before the object

  std::string Fill(std::string_view subject) const;
};

// Drops a sentence-final object placeholder and trailing punctuation. Throws
// kData with the rejection reason otherwise.
QueryTemplate RewriteTemplate(std::string relation, std::string_view raw);

using CategoryMap = std::map<std::string, std::string>;  // object -> category
CategoryMap LoadCategoryMap(const std::filesystem::path& path);

// Model plus tokenizer, queried with text prompts.
class LanguageModel {
 public:
  LanguageModel(std::shared_ptr<const Model> model, std::shared_ptr<const Tokenizer> tokenizer)
      : model_(std::move(model)), tokenizer_(std::move(tokenizer)) {}

  std::vector<double> NextToken(std::string_view prompt) const;
  // First token of " " + object. Throws kData when it is empty or unknown.
  TokenId ObjectToken(std::string_view object) const;

  const Model& model() const { return *model_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }

 private:
  std::shared_ptr<const Model> model_;
  std::shared_ptr<const Tokenizer> tokenizer_;
};

// Triples whose object's first token is the argmax after the filled query.
// Every triple needs a non-empty query.
std::vector<FactTriple> FilterKnown(const LanguageModel& lm, std::span<const FactTriple> triples);

struct ScoredObject {
  std::string object;
  double probability = 0.0;
};

// The `n` lowest-probability objects, ties by object string.
std::vector<ScoredObject> LowestProbability(std::vector<ScoredObject> candidates, std::size_t n);

struct CounterfactualSample {
  std::vector<FactTriple> triples;
  bool short_of_candidates = false;  // fewer than n were available
};

CounterfactualSample SampleCounterfactualObjects(const LanguageModel& lm, const FactTriple& factual,
                                                 const CategoryMap& categories, std::size_t n = 4);

// One ParaRel-style input line: a factual triple and raw templates.
struct ParaRelRecord {
  FactTriple triple;
  std::vector<std::string> templates;
};
std::vector<ParaRelRecord> ReadParaRel(const std::filesystem::path& path);

struct ParaRelBuild {
  std::vector<FactTriple> known;           // factual, with rewritten query
  std::vector<FactTriple> counterfactuals;
  std::vector<std::string> warnings;
};
ParaRelBuild BuildParaRel(const LanguageModel& lm, std::span<const ParaRelRecord> records,
                          const CategoryMap& categories, std::size_t per_triple = 4);

// ----------------------------------------------------------------------------
// Paragraph generation

class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  // Throws kTransport when the request ultimately fails. Must be thread-safe.
  virtual std::string Generate(const std::string& prompt) = 0;
};

struct HttpGeneratorOptions {
  std::string endpoint;  // scheme://host[:port], chat-completions path appended
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_attempts = 4;
  int initial_backoff_ms = 500;
  int timeout_s = 60;
  double temperature = 0.0;
};

class HttpGeneratorClient : public GeneratorClient {
 public:
  explicit HttpGeneratorClient(HttpGeneratorOptions options);
  std::string Generate(const std::string& prompt) override;

 private:
  HttpGeneratorOptions options_;
  std::string api_key_;
};

// Replays recorded (prompt, response) pairs.
class TranscriptClient : public GeneratorClient {
 public:
  explicit TranscriptClient(std::map<std::string, std::string> responses)
      : responses_(std::move(responses)) {}
  static TranscriptClient Load(const std::filesystem::path& jsonl);
  std::string Generate(const std::string& prompt) override;

 private:
  std::map<std::string, std::string> responses_;
};

// Wraps a client and records every exchange for later replay.
class RecordingClient : public GeneratorClient {
 public:
  explicit RecordingClient(GeneratorClient& inner) : inner_(inner) {}
  std::string Generate(const std::string& prompt) override;
  // JSONL sorted by prompt.
  void Save(const std::filesystem::path& jsonl) const;

 private:
  GeneratorClient& inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> log_;
};

inline constexpr std::string_view kParagraphPromptVersion = "paragraph-v1";
std::string ParagraphPrompt(const FactTriple& counterfactual);

// ----------------------------------------------------------------------------
// Entries and filtering

enum class Variant { kBase, kMultiHop };
std::string_view ToString(Variant v);

struct FakepediaEntry {
  FactTriple target;
  std::string paragraph;
  Variant variant = Variant::kBase;
  std::optional<FactTriple> intermediary;
  std::optional<std::string> linking_sentence;
  std::string source_factual_object;

  // Paragraph without the linking sentence.
  std::string_view body() const;
  std::string Key() const;
  friend bool operator==(const FakepediaEntry&, const FakepediaEntry&) = default;
};

// relation -> lowercase verbalizations ("developed by", "is located in").
using RelationPatterns = std::map<std::string, std::vector<std::string>>;
RelationPatterns LoadRelationPatterns(const std::filesystem::path& path);

inline constexpr std::string_view kRuleObjectMissing = "object-missing";
inline constexpr std::string_view kRuleSubjectMissing = "subject-missing";
inline constexpr std::string_view kRuleFactualAsserted = "factual-asserted";
inline constexpr std::string_view kRuleEmptyGeneration = "empty-generation";

// First failing rule, or nullopt when the entry passes.
std::optional<std::string> QualityFilter(const FakepediaEntry& entry, const RelationPatterns& patterns);

// Sentences of `text` as [begin, end) byte ranges. A sentence ends at '.',
// '!' or '?' followed by whitespace or the end of text.
std::vector<std::pair<std::size_t, std::size_t>> SplitSentences(std::string_view text);

struct GenerationOutcome {
  std::optional<FakepediaEntry> entry;
  std::string rejection;  // rule name when entry is empty
};

GenerationOutcome GenerateBaseEntry(GeneratorClient& client, const FactTriple& counterfactual,
                                    const RelationPatterns& patterns);

struct BaseBuild {
  std::vector<FakepediaEntry> entries;  // sorted by key
  std::map<std::string, std::string> rejections;  // triple key -> rule
};

// Runs up to `max_in_flight` generations concurrently.
BaseBuild BuildBase(GeneratorClient& client, std::span<const FactTriple> counterfactuals,
                    const RelationPatterns& patterns, std::size_t max_in_flight = 4);

// relation -> sentence with "[X]" (target subject) and "[Z]" (intermediary subject).
using LinkingTemplates = std::map<std::string, std::string>;
LinkingTemplates LoadLinkingTemplates(const std::filesystem::path& path);

FakepediaEntry ComposeMultihop(const FakepediaEntry& base, const FactTriple& target,
                               const LinkingTemplates& linking);

struct MultihopPair {
  std::size_t base = 0;    // index into bases
  std::size_t target = 0;  // index into targets
  friend bool operator==(const MultihopPair&, const MultihopPair&) = default;
};

// Pairs sharing relation and object with distinct subjects, counted per
// (relation, object) group as |bases| * |targets| - same-subject pairs.
std::size_t CountMultihopPairs(std::span<const FakepediaEntry> bases, std::span<const FactTriple> targets);

// The pairs above whose base body does not mention the target subject, in
// (base, target) order.
std::vector<MultihopPair> MultihopCandidates(std::span<const FakepediaEntry> bases,
                                             std::span<const FactTriple> targets);

// Uniform sample without replacement, returned in candidate order.
std::vector<MultihopPair> SampleMultihop(std::span<const MultihopPair> candidates, std::size_t n,
                                         std::uint64_t seed);

// ----------------------------------------------------------------------------
// Serialization. Writers sort by key so output bytes depend only on content.

nlohmann::json ToJson(const FactTriple& t);
FactTriple TripleFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const FakepediaEntry& e);
FakepediaEntry EntryFromJson(const nlohmann::json& j);

void WriteTriples(const std::filesystem::path& path, std::vector<FactTriple> triples);
std::vector<FactTriple> ReadTriples(const std::filesystem::path& path);
void WriteEntries(const std::filesystem::path& path, std::vector<FakepediaEntry> entries);
std::vector<FakepediaEntry> ReadEntries(const std::filesystem::path& path);

}  // namespace mgct::dataset
