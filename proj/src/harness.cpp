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

#include "mgct/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "mgct/error.hpp"
#include "mgct/io.hpp"
#include "mgct/rng.hpp"

namespace mgct::harness {

namespace {

constexpr std::string_view kWithInstruction =
    "Answer the question using only the information in the context, even if it contradicts what you "
    "know.\n"
    "\n"
    "Context: {context}\n"
    "\n"
    "Question: {question}\n"
    "A. {option_a}\n"
    "B. {option_b}\n"
    "Answer:";

constexpr std::string_view kWithoutInstruction =
    "Context: {context}\n"
    "\n"
    "Question: {question}\n"
    "A. {option_a}\n"
    "B. {option_b}\n"
    "Answer:";

// Single pass, so placeholder-like text inside values is left alone.
std::string Render(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto it = values.find(tmpl.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::uint64_t Fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string_view ToString(Scheme s) {
  return s == Scheme::kWithInstruction ? "with-instruction" : "without-instruction";
}
std::string_view ToString(OptionOrder o) {
  return o == OptionOrder::kGroundedFirst ? "grounded-first" : "factual-first";
}
std::string_view ToString(Parsed p) {
  switch (p) {
    case Parsed::kGrounded: return "grounded";
    case Parsed::kFactual: return "factual";
    case Parsed::kOther: return "other";
  }
  return "other";
}

Scheme SchemeFromString(std::string_view s) {
  if (s == "with-instruction") return Scheme::kWithInstruction;
  if (s == "without-instruction") return Scheme::kWithoutInstruction;
  Fail(ErrorKind::kInvalidArgument, "unknown scheme '" + std::string(s) + "'");
}

Parsed ParsedFromString(std::string_view s) {
  for (Parsed p : {Parsed::kGrounded, Parsed::kFactual, Parsed::kOther})
    if (ToString(p) == s) return p;
  Fail(ErrorKind::kData, "unknown parse label '" + std::string(s) + "'");
}

const PromptTemplates& PromptTemplates::Default() {
  static const PromptTemplates t{std::string(kWithInstruction), std::string(kWithoutInstruction)};
  return t;
}

PromptTemplates PromptTemplates::Load(const std::filesystem::path& dir) {
  PromptTemplates t{io::ReadFile(dir / "mcq_with_instruction.txt"),
                    io::ReadFile(dir / "mcq_without_instruction.txt")};
  for (const auto* s : {&t.with_instruction, &t.without_instruction})
    for (std::string_view slot : {"{context}", "{question}", "{option_a}", "{option_b}"})
      Check(s->find(slot) != std::string::npos, ErrorKind::kConfig,
            "prompt template in " + dir.string() + " lacks " + std::string(slot));
  return t;
}

std::string PromptTemplates::VersionHash() const {
  return io::Sha256Hex(with_instruction + '\0' + without_instruction).substr(0, 16);
}

const std::string& PromptTemplates::For(Scheme s) const {
  return s == Scheme::kWithInstruction ? with_instruction : without_instruction;
}

std::string McqInstance::Key() const {
  return entry_id + "#" + std::string(ToString(scheme)) + "#" + std::string(ToString(order));
}

std::string QuestionFor(const dataset::FakepediaEntry& entry) {
  const auto& t = entry.target;
  const std::string stem = t.query.empty() ? t.subject + " (" + t.relation + ")"
                                           : dataset::QueryTemplate{t.relation, t.query}.Fill(t.subject);
  return "Which option completes the statement \"" + stem + " ...\"?";
}

std::vector<McqInstance> BuildPrompts(const dataset::FakepediaEntry& entry, Scheme scheme,
                                      const PromptTemplates& templates) {
  Check(!entry.paragraph.empty(), ErrorKind::kInvalidArgument, "entry " + entry.Key() + " has no paragraph");
  Check(entry.target.object != entry.source_factual_object && !entry.source_factual_object.empty(),
        ErrorKind::kInvalidArgument, "entry " + entry.Key() + " needs two distinct options");
  std::vector<McqInstance> out;
  for (OptionOrder order : {OptionOrder::kGroundedFirst, OptionOrder::kFactualFirst}) {
    McqInstance i;
    i.entry_id = entry.Key();
    i.variant = entry.variant;
    i.scheme = scheme;
    i.order = order;
    i.grounded_option = entry.target.object;
    i.factual_option = entry.source_factual_object;
    i.prompt = Render(templates.For(scheme), {{"context", entry.paragraph},
                                              {"question", QuestionFor(entry)},
                                              {"option_a", i.option_a()},
                                              {"option_b", i.option_b()}});
    out.push_back(std::move(i));
  }
  return out;
}

Parsed ParseAnswer(std::string_view raw, const McqInstance& inst) {
  std::size_t p = 0;
  while (p < raw.size() && (std::isspace(static_cast<unsigned char>(raw[p])) || raw[p] == '(')) ++p;
  if (p < raw.size() && (raw[p] == 'A' || raw[p] == 'B') &&
      (p + 1 == raw.size() || !std::isalnum(static_cast<unsigned char>(raw[p + 1]))))
    return raw[p] == inst.grounded_letter() ? Parsed::kGrounded : Parsed::kFactual;

  const auto g = raw.find(inst.grounded_option);
  const auto f = raw.find(inst.factual_option);
  if (g == std::string_view::npos && f == std::string_view::npos) return Parsed::kOther;
  if (g != f) return g < f ? Parsed::kGrounded : Parsed::kFactual;
  return inst.grounded_option.size() >= inst.factual_option.size() ? Parsed::kGrounded : Parsed::kFactual;
}

std::string UniformClient::Answer(const McqInstance& i) {
  Rng rng(seed_ ^ Fnv1a(i.Key()));
  return rng.Below(2) == 0 ? "A" : "B";
}

std::string ScriptedClient::Answer(const McqInstance& i) {
  const auto it = script_.find(i.Key());
  return it == script_.end() ? fallback_ : it->second;
}

std::string LocalEngineClient::Answer(const McqInstance& inst) {
  const Tokenizer& tok = lm_.tokenizer();
  const Model& model = lm_.model();
  std::vector<TokenId> ids = tok.Encode(inst.prompt).ids;
  Check(!ids.empty() && ids.size() < model.config().max_seq_len, ErrorKind::kData,
        "prompt for " + inst.Key() + " does not fit the model context");
  std::vector<TokenId> generated;
  for (std::size_t n = 0; n < max_new_tokens_ && ids.size() < model.config().max_seq_len; ++n) {
    const auto dist = model.NextTokenDistribution(ids);
    const auto next = static_cast<TokenId>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    if (next == tok.eos_id()) break;
    generated.push_back(next);
    ids.push_back(next);
    if (tok.Decode(generated).find('\n') != std::string::npos) break;
  }
  std::string text = tok.Decode(generated);
  if (const auto nl = text.find('\n'); nl != std::string::npos) text.resize(nl);
  return text;
}

AnswerRecord Query(AnswerClient& client, const McqInstance& inst) {
  const auto start = std::chrono::steady_clock::now();
  AnswerRecord r;
  r.raw = client.Answer(inst);
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  r.instance_key = inst.Key();
  r.entry_id = inst.entry_id;
  r.variant = inst.variant;
  r.scheme = inst.scheme;
  r.order = inst.order;
  r.model_id = client.id();
  r.parsed = ParseAnswer(r.raw, inst);
  return r;
}

std::vector<AnswerRecord> RunEvaluation(AnswerClient& client, std::span<const McqInstance> instances,
                                        std::size_t max_in_flight) {
  std::vector<AnswerRecord> out(instances.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; !failed && (i = next++) < instances.size();) {
      try {
        out[i] = Query(client, instances[i]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t workers = std::clamp<std::size_t>(max_in_flight, 1, std::max<std::size_t>(1, instances.size()));
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

Accuracy GroundingAccuracy(std::span<const AnswerRecord> records) {
  Check(!records.empty(), ErrorKind::kInvalidArgument, "no records to score");
  Accuracy a;
  for (const auto& r : records) {
    if (r.parsed == Parsed::kGrounded) ++a.grounded;
    if (r.parsed == Parsed::kFactual) ++a.factual;
    if (r.parsed == Parsed::kOther) ++a.other;
  }
  a.total = records.size();
  a.accuracy = static_cast<double>(a.grounded) / static_cast<double>(a.total);
  return a;
}

double BinomialTwoSidedP(std::size_t k, std::size_t n, double p) {
  Check(k <= n, ErrorKind::kInvalidArgument, "binomial k exceeds n");
  Check(p > 0.0 && p < 1.0, ErrorKind::kInvalidArgument, "binomial p must be in (0, 1)");
  auto log_pmf = [&](std::size_t i) {
    const double di = static_cast<double>(i), dn = static_cast<double>(n);
    return std::lgamma(dn + 1) - std::lgamma(di + 1) - std::lgamma(dn - di + 1) + di * std::log(p) +
           (dn - di) * std::log1p(-p);
  };
  const double at_k = log_pmf(k);
  double total = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double lp = log_pmf(i);
    if (lp <= at_k + 1e-7) total += std::exp(lp);
  }
  return std::min(1.0, total);
}

nlohmann::json ToJson(const AnswerRecord& r, bool with_latency) {
  nlohmann::json j = {{"id", r.instance_key},
                      {"entry_id", r.entry_id},
                      {"variant", dataset::ToString(r.variant)},
                      {"scheme", ToString(r.scheme)},
                      {"order", ToString(r.order)},
                      {"model", r.model_id},
                      {"raw", r.raw},
                      {"parsed", ToString(r.parsed)}};
  if (with_latency) j["latency_ms"] = r.latency_ms;
  return j;
}

void WriteRecords(const std::filesystem::path& path, std::vector<AnswerRecord> records, bool with_latency) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.model_id, a.instance_key) < std::tie(b.model_id, b.instance_key);
  });
  std::string out;
  for (const auto& r : records) out += ToJson(r, with_latency).dump() + "\n";
  io::WriteFile(path, out);
}

std::string AccuracyTableCsv(std::span<const AnswerRecord> records) {
  constexpr std::array<std::pair<dataset::Variant, Scheme>, 4> kColumns = {{
      {dataset::Variant::kBase, Scheme::kWithInstruction},
      {dataset::Variant::kBase, Scheme::kWithoutInstruction},
      {dataset::Variant::kMultiHop, Scheme::kWithInstruction},
      {dataset::Variant::kMultiHop, Scheme::kWithoutInstruction},
  }};
  std::map<std::string, std::array<std::vector<AnswerRecord>, 4>> by_model;
  for (const auto& r : records)
    for (std::size_t c = 0; c < kColumns.size(); ++c)
      if (kColumns[c] == std::pair{r.variant, r.scheme}) by_model[r.model_id][c].push_back(r);
  std::string out = "model";
  for (const auto& [v, s] : kColumns) out += "," + std::string(dataset::ToString(v)) + "/" + std::string(ToString(s));
  for (const auto& [v, s] : kColumns) out += ",n:" + std::string(dataset::ToString(v)) + "/" + std::string(ToString(s));
  out += "\n";
  for (const auto& [model, cols] : by_model) {
    out += model;
    for (const auto& recs : cols) {
      out += ",";
      if (recs.empty()) continue;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * GroundingAccuracy(recs).accuracy);
      out += buf;
    }
    for (const auto& recs : cols) out += "," + std::to_string(recs.size());
    out += "\n";
  }
  return out;
}

}  // namespace mgct::harness
