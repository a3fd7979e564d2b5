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

// Multiple-choice grounding evaluation. Each Fakepedia entry yields two
// questions per prompt scheme, one per option order; an answer counts as
// grounded when it picks the counterfactual object stated in the context.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mgct/dataset.hpp"

namespace mgct::harness {

enum class Scheme { kWithInstruction, kWithoutInstruction };
enum class OptionOrder { kGroundedFirst, kFactualFirst };
enum class Parsed { kGrounded, kFactual, kOther };

std::string_view ToString(Scheme s);
std::string_view ToString(OptionOrder o);
std::string_view ToString(Parsed p);
Scheme SchemeFromString(std::string_view s);
Parsed ParsedFromString(std::string_view s);

// Placeholders: {context} {question} {option_a} {option_b}.
struct PromptTemplates {
  std::string with_instruction;
  std::string without_instruction;

  static const PromptTemplates& Default();
  // Reads mcq_with_instruction.txt and mcq_without_instruction.txt.
  static PromptTemplates Load(const std::filesystem::path& dir);
  // First 16 hex digits of SHA-256 over both templates.
  std::string VersionHash() const;
  const std::string& For(Scheme s) const;
};

// The context-only directive carried by the with-instruction scheme.
inline constexpr std::string_view kInstructionSentence =
    "Answer the question using only the information in the context, even if it contradicts what you "
    "know.";

struct McqInstance {
  std::string entry_id;
  dataset::Variant variant = dataset::Variant::kBase;
  Scheme scheme = Scheme::kWithInstruction;
  OptionOrder order = OptionOrder::kGroundedFirst;
  std::string grounded_option;  // counterfactual object
  std::string factual_option;   // true object
  std::string prompt;

  const std::string& option_a() const { return order == OptionOrder::kGroundedFirst ? grounded_option : factual_option; }
  const std::string& option_b() const { return order == OptionOrder::kGroundedFirst ? factual_option : grounded_option; }
  char grounded_letter() const { return order == OptionOrder::kGroundedFirst ? 'A' : 'B'; }
  std::string Key() const;
};

// Question text for an entry: its filled query followed by a blank.
std::string QuestionFor(const dataset::FakepediaEntry& entry);

// Both option orders, grounded-first then factual-first.
std::vector<McqInstance> BuildPrompts(const dataset::FakepediaEntry& entry, Scheme scheme,
                                      const PromptTemplates& templates = PromptTemplates::Default());

// (1) a leading "A"/"B" not followed by a letter or digit, optionally after
// "(" or whitespace; (2) otherwise the option string that occurs first (the
// longer one on a tie); (3) otherwise other.
Parsed ParseAnswer(std::string_view raw, const McqInstance& instance);

class AnswerClient {
 public:
  virtual ~AnswerClient() = default;
  virtual std::string id() const = 0;
  // Must be thread-safe.
  virtual std::string Answer(const McqInstance& instance) = 0;
};

class AlwaysGroundedClient : public AnswerClient {
 public:
  std::string id() const override { return "mock-grounded"; }
  std::string Answer(const McqInstance& i) override { return std::string(1, i.grounded_letter()) + "."; }
};

class AlwaysFactualClient : public AnswerClient {
 public:
  std::string id() const override { return "mock-factual"; }
  std::string Answer(const McqInstance& i) override { return i.factual_option; }
};

// Picks A or B with equal probability, seeded per instance key so the result
// does not depend on scheduling.
class UniformClient : public AnswerClient {
 public:
  explicit UniformClient(std::uint64_t seed) : seed_(seed) {}
  std::string id() const override { return "mock-uniform"; }
  std::string Answer(const McqInstance& i) override;

 private:
  std::uint64_t seed_;
};

// Replies from a key -> text script, with a fallback for unknown keys.
class ScriptedClient : public AnswerClient {
 public:
  ScriptedClient(std::map<std::string, std::string> script, std::string fallback)
      : script_(std::move(script)), fallback_(std::move(fallback)) {}
  std::string id() const override { return "mock-scripted"; }
  std::string Answer(const McqInstance& i) override;

 private:
  std::map<std::string, std::string> script_;
  std::string fallback_;
};

// Greedy decoding with the in-repo engine, stopping at EOS or a newline.
class LocalEngineClient : public AnswerClient {
 public:
  LocalEngineClient(dataset::LanguageModel lm, std::string model_id, std::size_t max_new_tokens = 8)
      : lm_(std::move(lm)), model_id_(std::move(model_id)), max_new_tokens_(max_new_tokens) {}
  std::string id() const override { return model_id_; }
  std::string Answer(const McqInstance& i) override;

 private:
  dataset::LanguageModel lm_;
  std::string model_id_;
  std::size_t max_new_tokens_;
};

// Chat-completion endpoint via the dataset generator client.
class ChatAnswerClient : public AnswerClient {
 public:
  explicit ChatAnswerClient(dataset::HttpGeneratorOptions options)
      : model_id_(options.model), client_(std::move(options)) {}
  std::string id() const override { return model_id_; }
  std::string Answer(const McqInstance& i) override { return client_.Generate(i.prompt); }

 private:
  std::string model_id_;
  dataset::HttpGeneratorClient client_;
};

struct AnswerRecord {
  std::string instance_key;
  std::string entry_id;
  dataset::Variant variant = dataset::Variant::kBase;
  Scheme scheme = Scheme::kWithInstruction;
  OptionOrder order = OptionOrder::kGroundedFirst;
  std::string model_id;
  std::string raw;
  Parsed parsed = Parsed::kOther;
  double latency_ms = 0.0;
};

AnswerRecord Query(AnswerClient& client, const McqInstance& instance);

// Records in instance order; up to `max_in_flight` queries run at once.
std::vector<AnswerRecord> RunEvaluation(AnswerClient& client, std::span<const McqInstance> instances,
                                        std::size_t max_in_flight = 4);

struct Accuracy {
  double accuracy = 0.0;
  std::size_t grounded = 0, factual = 0, other = 0, total = 0;
};

// Grounded fraction over all records, `other` included. Throws on empty input.
Accuracy GroundingAccuracy(std::span<const AnswerRecord> records);

// Exact two-sided binomial test: total probability of outcomes no more likely
// than `k` under Binomial(n, p).
double BinomialTwoSidedP(std::size_t k, std::size_t n, double p = 0.5);

nlohmann::json ToJson(const AnswerRecord& r, bool with_latency = true);
// JSONL sorted by instance key.
void WriteRecords(const std::filesystem::path& path, std::vector<AnswerRecord> records, bool with_latency = true);

// One row per model; columns "<variant>/<scheme>" with accuracy in percent,
// blank where nothing was evaluated.
std::string AccuracyTableCsv(std::span<const AnswerRecord> records);

}  // namespace mgct::harness
