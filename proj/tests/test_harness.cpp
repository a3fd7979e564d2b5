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

#include <cmath>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "lm_fixtures.hpp"
#include "mgct/error.hpp"
#include "mgct/harness.hpp"
#include "mgct/io.hpp"

using namespace mgct;
using namespace mgct::harness;
using mgct::dataset::FakepediaEntry;

namespace {

FakepediaEntry Entry(const std::string& subject, const std::string& object = "Nintendo",
                     const std::string& factual = "Apple") {
  FakepediaEntry e;
  e.target = {subject, "P178", object, dataset::TruthTag::kCounterfactual, "[X] was developed by", factual};
  e.source_factual_object = factual;
  e.paragraph = subject + ", a revolutionary operating system developed by " + object + ".";
  return e;
}

std::vector<McqInstance> Instances(std::size_t n_entries, Scheme scheme) {
  std::vector<McqInstance> out;
  for (std::size_t i = 0; i < n_entries; ++i)
    for (auto& inst : BuildPrompts(Entry("OS " + std::to_string(i)), scheme)) out.push_back(inst);
  return out;
}

// Reference pmf by repeated multiplication.
double NaiveTwoSided(std::size_t k, std::size_t n) {
  std::vector<long double> pmf(n + 1);
  pmf[0] = std::pow(0.5L, static_cast<long double>(n));
  for (std::size_t i = 1; i <= n; ++i) pmf[i] = pmf[i - 1] * (n - i + 1) / i;
  long double total = 0;
  for (auto p : pmf)
    if (p <= pmf[k] * (1 + 1e-9L)) total += p;
  return static_cast<double>(std::min<long double>(1, total));
}

}  // namespace

TEST_CASE("build_prompts") {
  const auto e = Entry("iOS 8");
  const auto with = BuildPrompts(e, Scheme::kWithInstruction);
  REQUIRE(with.size() == 2);
  CHECK(with[0].order == OptionOrder::kGroundedFirst);
  CHECK(with[1].order == OptionOrder::kFactualFirst);
  CHECK(with[0].option_a() == "Nintendo");
  CHECK(with[1].option_a() == "Apple");
  CHECK(with[0].prompt.find(kInstructionSentence) != std::string::npos);
  CHECK(with[0].prompt.find("A. Nintendo\nB. Apple") != std::string::npos);
  CHECK(with[1].prompt.find("A. Apple\nB. Nintendo") != std::string::npos);
  CHECK(with[0].prompt.find(e.paragraph) != std::string::npos);
  CHECK(with[0].prompt.find("iOS 8 was developed by") != std::string::npos);
  CHECK(with[0].Key() != with[1].Key());

  // The two orders differ only in the option lines.
  auto strip = [](std::string p) { return p.substr(0, p.find("\nA. ")); };
  CHECK(strip(with[0].prompt) == strip(with[1].prompt));

  const auto without = BuildPrompts(e, Scheme::kWithoutInstruction);
  CHECK(without[0].prompt.find(kInstructionSentence) == std::string::npos);
  CHECK(without[0].prompt.find(e.paragraph) != std::string::npos);

  // Braces in the context are not template slots.
  auto braces = Entry("iOS 8");
  braces.paragraph = "iOS 8 {question} was developed by Nintendo.";
  CHECK(BuildPrompts(braces, Scheme::kWithInstruction)[0].prompt.find("iOS 8 {question} was") != std::string::npos);

  auto empty = e;
  empty.paragraph.clear();
  CHECK_THROWS_AS(BuildPrompts(empty, Scheme::kWithInstruction), Error);
}

TEST_CASE("prompt templates are versioned") {
  const auto dir = std::filesystem::path(MGCT_SOURCE_DIR) / "data" / "prompts";
  const auto shipped = PromptTemplates::Load(dir);
  CHECK(shipped.with_instruction == PromptTemplates::Default().with_instruction);
  CHECK(shipped.without_instruction == PromptTemplates::Default().without_instruction);
  CHECK(shipped.VersionHash() == PromptTemplates::Default().VersionHash());
  CHECK(shipped.VersionHash().size() == 16);
  auto edited = shipped;
  edited.without_instruction += " ";
  CHECK(edited.VersionHash() != shipped.VersionHash());
}

TEST_CASE("answer parsing rules") {
  const auto inst = BuildPrompts(Entry("iOS 8"), Scheme::kWithInstruction);
  const McqInstance& gf = inst[0];  // A = Nintendo
  const McqInstance& ff = inst[1];  // A = Apple
  CHECK(ParseAnswer("A", gf) == Parsed::kGrounded);
  CHECK(ParseAnswer(" (B) Apple", gf) == Parsed::kFactual);
  CHECK(ParseAnswer("A.", ff) == Parsed::kFactual);
  CHECK(ParseAnswer("B: Nintendo", ff) == Parsed::kGrounded);
  CHECK(ParseAnswer("The answer is Nintendo, not Apple", gf) == Parsed::kGrounded);
  CHECK(ParseAnswer("Apple, clearly. Nintendo is wrong.", ff) == Parsed::kFactual);
  CHECK(ParseAnswer("Apples and oranges", gf) == Parsed::kFactual);
  CHECK(ParseAnswer("Banana", gf) == Parsed::kOther);
  CHECK(ParseAnswer("Answer unclear", gf) == Parsed::kOther);
  CHECK(ParseAnswer("", gf) == Parsed::kOther);
  CHECK(ParseAnswer("zxqv 123", gf) == ParseAnswer("zxqv 123", gf));

  // Prefix options: the longer one wins at the same position.
  auto e = Entry("X", "New York City", "New York");
  const auto p = BuildPrompts(e, Scheme::kWithInstruction)[0];
  CHECK(ParseAnswer("New York City", p) == Parsed::kGrounded);
  CHECK(ParseAnswer("New York", p) == Parsed::kFactual);
}

TEST_CASE("mock clients and grounding accuracy") {
  const auto inst = Instances(500, Scheme::kWithInstruction);
  REQUIRE(inst.size() == 1000);

  AlwaysGroundedClient grounded;
  const auto g = RunEvaluation(grounded, inst, 4);
  CHECK(GroundingAccuracy(g).accuracy == 1.0);

  AlwaysFactualClient factual;
  const auto f = RunEvaluation(factual, inst, 4);
  CHECK(GroundingAccuracy(f).accuracy == 0.0);
  CHECK(GroundingAccuracy(f).factual == 1000);

  UniformClient uniform(42);
  const auto u = RunEvaluation(uniform, inst, 4);
  const auto acc = GroundingAccuracy(u);
  CHECK(BinomialTwoSidedP(acc.grounded, acc.total) >= 0.01);
  CHECK(acc.other == 0);
  // Schedule independence.
  const auto u1 = RunEvaluation(uniform, inst, 1);
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i].raw == u1[i].raw);

  // Two records per entry, one per order.
  std::map<std::string, std::set<OptionOrder>> per_entry;
  for (const auto& r : u) per_entry[r.entry_id].insert(r.order);
  CHECK(per_entry.size() == 500);
  for (auto& [id, orders] : per_entry) CHECK(orders.size() == 2);

  ScriptedClient gibberish({}, "lorem ipsum");
  const auto o = RunEvaluation(gibberish, inst, 2);
  CHECK(GroundingAccuracy(o).accuracy == 0.0);
  CHECK(GroundingAccuracy(o).other == 1000);
  CHECK_THROWS_AS(GroundingAccuracy(std::vector<AnswerRecord>{}), Error);
}

TEST_CASE("binomial test") {
  for (std::size_t n : {1, 10, 57, 200})
    for (std::size_t k = 0; k <= n; k += std::max<std::size_t>(1, n / 13))
      CHECK(BinomialTwoSidedP(k, n) == doctest::Approx(NaiveTwoSided(k, n)).epsilon(1e-9));
  CHECK(BinomialTwoSidedP(500, 1000) == doctest::Approx(1.0));
  CHECK(BinomialTwoSidedP(1000, 1000) < 1e-100);
  // 99% acceptance band at n = 1000 is roughly 459..541.
  CHECK(BinomialTwoSidedP(460, 1000) > 0.01);
  CHECK(BinomialTwoSidedP(455, 1000) < 0.01);
}

TEST_CASE("local engine client") {
  auto tok = testing::CityTokenizer();
  const auto probe = testing::ForcedArgmax(tok, 0);
  const auto lm = testing::ForcedArgmax(tok, probe.ObjectToken("Nintendo"), 512);
  LocalEngineClient client(lm, "toy", 3);
  const auto inst = BuildPrompts(Entry("The phone"), Scheme::kWithInstruction);
  const auto r = Query(client, inst[1]);
  CHECK(r.raw == " Nintendo Nintendo Nintendo");
  CHECK(r.parsed == Parsed::kGrounded);
  CHECK(r.model_id == "toy");

  const auto short_lm = testing::ForcedArgmax(tok, 0, 8);
  LocalEngineClient cramped(short_lm, "toy", 3);
  CHECK_THROWS_AS(cramped.Answer(inst[0]), Error);
}

TEST_CASE("records and accuracy table") {
  auto inst = Instances(3, Scheme::kWithInstruction);
  for (auto& i : Instances(3, Scheme::kWithoutInstruction)) inst.push_back(i);
  AlwaysGroundedClient grounded;
  AlwaysFactualClient factual;
  auto recs = RunEvaluation(grounded, inst);
  for (auto& r : RunEvaluation(factual, inst)) recs.push_back(r);
  const std::string csv = AccuracyTableCsv(recs);
  CHECK(csv ==
        "model,base/with-instruction,base/without-instruction,multi-hop/with-instruction,multi-hop/without-instruction,"
        "n:base/with-instruction,n:base/without-instruction,n:multi-hop/with-instruction,n:multi-hop/without-instruction\n"
        "mock-factual,0.00,0.00,,,6,6,0,0\n"
        "mock-grounded,100.00,100.00,,,6,6,0,0\n");

  const auto dir = std::filesystem::temp_directory_path() / "mgct_test_harness";
  std::filesystem::remove_all(dir);
  WriteRecords(dir / "a.jsonl", recs, false);
  std::reverse(recs.begin(), recs.end());
  WriteRecords(dir / "b.jsonl", recs, false);
  CHECK(io::ReadFile(dir / "a.jsonl") == io::ReadFile(dir / "b.jsonl"));
  const auto lines = io::ReadJsonLines(dir / "a.jsonl");
  CHECK(lines.size() == 24);
  CHECK_FALSE(lines[0].contains("latency_ms"));
}
