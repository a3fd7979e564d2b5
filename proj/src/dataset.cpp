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

#include "mgct/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <set>
#include <thread>
#include <tuple>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mgct/error.hpp"
#include "mgct/io.hpp"
#include "mgct/rng.hpp"

namespace mgct::dataset {

namespace {

using nlohmann::json;

std::size_t CountOf(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string_view::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string Lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string ReplaceAll(std::string s, std::string_view from, std::string_view to) {
  for (auto p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size()))
    s.replace(p, from.size(), to);
  return s;
}

template <typename T, typename KeyFn>
void SortByKey(std::vector<T>& v, KeyFn key) {
  std::sort(v.begin(), v.end(), [&](const T& a, const T& b) { return key(a) < key(b); });
  for (std::size_t i = 1; i < v.size(); ++i)
    Check(key(v[i - 1]) != key(v[i]), ErrorKind::kData, "duplicate key " + key(v[i]));
}

}  // namespace

std::string_view ToString(TruthTag t) { return t == TruthTag::kFactual ? "factual" : "counterfactual"; }

TruthTag TruthTagFromString(std::string_view s) {
  if (s == "factual") return TruthTag::kFactual;
  if (s == "counterfactual") return TruthTag::kCounterfactual;
  Fail(ErrorKind::kData, "unknown truth tag '" + std::string(s) + "'");
}

std::string_view ToString(Variant v) { return v == Variant::kBase ? "base" : "multi-hop"; }

void FactTriple::Validate() const {
  Check(!subject.empty() && !relation.empty() && !object.empty(), ErrorKind::kData,
        "triple fields must be non-empty");
  if (truth == TruthTag::kCounterfactual) {
    Check(!source_object.empty(), ErrorKind::kData, "counterfactual " + Key() + " lacks a source object");
    Check(source_object != object, ErrorKind::kData,
          "counterfactual " + Key() + " has the same object as its source");
  }
}

std::string FactTriple::Key() const { return relation + "|" + subject + "|" + object; }

std::string QueryTemplate::Fill(std::string_view subject) const {
  return ReplaceAll(text, kSubjectSlot, subject);
}

QueryTemplate RewriteTemplate(std::string relation, std::string_view raw) {
  const std::string where = "template '" + std::string(raw) + "': ";
  Check(CountOf(raw, kSubjectSlot) == 1 && CountOf(raw, kObjectSlot) == 1, ErrorKind::kData,
        where + "expected exactly one [X] and one [Y]");
  const auto x = raw.find(kSubjectSlot);
  const auto y = raw.find(kObjectSlot);
  Check(x < y, ErrorKind::kData, where + "object precedes subject, no safe rewrite");
  std::string_view tail = raw.substr(y + kObjectSlot.size());
  while (!tail.empty() && (std::isspace(static_cast<unsigned char>(tail.back())) ||
                           tail.back() == '.' || tail.back() == '!' || tail.back() == '?'))
    tail.remove_suffix(1);
  Check(Trim(tail).empty(), ErrorKind::kData, where + "object placeholder is not sentence-final");
  std::string_view head = raw.substr(0, y);
  while (!head.empty() && std::isspace(static_cast<unsigned char>(head.back()))) head.remove_suffix(1);
  return {std::move(relation), std::string(head)};
}

CategoryMap LoadCategoryMap(const std::filesystem::path& path) {
  try {
    return io::ReadJson(path).get<CategoryMap>();
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, path.string() + ": category map must map objects to category ids: " + e.what());
  }
}

std::vector<double> LanguageModel::NextToken(std::string_view prompt) const {
  const Encoding enc = tokenizer_->Encode(prompt);
  Check(!enc.ids.empty(), ErrorKind::kData, "prompt encodes to no tokens");
  return model_->NextTokenDistribution(enc.ids);
}

TokenId LanguageModel::ObjectToken(std::string_view object) const {
  Check(!object.empty(), ErrorKind::kData, "object is empty");
  const Encoding enc = tokenizer_->Encode(" " + std::string(object));
  Check(!enc.ids.empty(), ErrorKind::kData, "object '" + std::string(object) + "' encodes to no tokens");
  const auto unk = tokenizer_->unk_id();
  Check(!unk || enc.ids.front() != *unk, ErrorKind::kData,
        "object '" + std::string(object) + "' starts with an unknown token");
  return enc.ids.front();
}

std::vector<FactTriple> FilterKnown(const LanguageModel& lm, std::span<const FactTriple> triples) {
  std::vector<FactTriple> out;
  for (const auto& t : triples) {
    Check(!t.query.empty(), ErrorKind::kInvalidArgument, "triple " + t.Key() + " has no query template");
    const auto dist = lm.NextToken(QueryTemplate{t.relation, t.query}.Fill(t.subject));
    const auto argmax = static_cast<TokenId>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    if (argmax == lm.ObjectToken(t.object)) out.push_back(t);
  }
  return out;
}

std::vector<ScoredObject> LowestProbability(std::vector<ScoredObject> candidates, std::size_t n) {
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return std::tie(a.probability, a.object) < std::tie(b.probability, b.object);
  });
  if (candidates.size() > n) candidates.resize(n);
  return candidates;
}

CounterfactualSample SampleCounterfactualObjects(const LanguageModel& lm, const FactTriple& factual,
                                                 const CategoryMap& categories, std::size_t n) {
  const auto cat = categories.find(factual.object);
  Check(cat != categories.end(), ErrorKind::kData,
        "object '" + factual.object + "' is missing from the category map");
  Check(!factual.query.empty(), ErrorKind::kInvalidArgument, "triple " + factual.Key() + " has no query template");
  const auto dist = lm.NextToken(QueryTemplate{factual.relation, factual.query}.Fill(factual.subject));
  std::vector<ScoredObject> candidates;
  for (const auto& [object, category] : categories)
    if (category == cat->second && object != factual.object)
      candidates.push_back({object, dist[lm.ObjectToken(object)]});
  CounterfactualSample out;
  out.short_of_candidates = candidates.size() < n;
  for (const auto& c : LowestProbability(std::move(candidates), n)) {
    FactTriple t = factual;
    t.object = c.object;
    t.truth = TruthTag::kCounterfactual;
    t.source_object = factual.object;
    out.triples.push_back(std::move(t));
  }
  return out;
}

std::vector<ParaRelRecord> ReadParaRel(const std::filesystem::path& path) {
  std::vector<ParaRelRecord> out;
  for (const auto& j : io::ReadJsonLines(path)) {
    try {
      ParaRelRecord r;
      r.triple.subject = j.at("subject").get<std::string>();
      r.triple.relation = j.at("relation").get<std::string>();
      r.triple.object = j.at("object").get<std::string>();
      if (j.contains("templates")) r.templates = j.at("templates").get<std::vector<std::string>>();
      if (j.contains("template")) r.templates.push_back(j.at("template").get<std::string>());
      Check(!r.templates.empty(), ErrorKind::kData, "record " + r.triple.Key() + " has no template");
      r.triple.Validate();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      Fail(ErrorKind::kData, path.string() + ": malformed ParaRel record: " + e.what());
    }
  }
  return out;
}

ParaRelBuild BuildParaRel(const LanguageModel& lm, std::span<const ParaRelRecord> records,
                          const CategoryMap& categories, std::size_t per_triple) {
  ParaRelBuild out;
  std::vector<FactTriple> rewritten;
  for (const auto& r : records) {
    std::string reasons;
    FactTriple t = r.triple;
    for (const auto& raw : r.templates) {
      try {
        t.query = RewriteTemplate(t.relation, raw).text;
        break;
      } catch (const Error& e) {
        reasons += std::string(reasons.empty() ? "" : "; ") + e.what();
      }
    }
    if (t.query.empty())
      out.warnings.push_back("skipped " + t.Key() + ": " + reasons);
    else
      rewritten.push_back(std::move(t));
  }
  out.known = FilterKnown(lm, rewritten);
  for (const auto& t : out.known) {
    auto sample = SampleCounterfactualObjects(lm, t, categories, per_triple);
    if (sample.short_of_candidates)
      out.warnings.push_back(t.Key() + ": only " + std::to_string(sample.triples.size()) +
                             " counterfactual candidates");
    for (auto& c : sample.triples) out.counterfactuals.push_back(std::move(c));
  }
  return out;
}

// ----------------------------------------------------------------------------

HttpGeneratorClient::HttpGeneratorClient(HttpGeneratorOptions options) : options_(std::move(options)) {
  Check(!options_.endpoint.empty(), ErrorKind::kConfig, "generator endpoint is empty");
  Check(options_.max_attempts >= 1, ErrorKind::kConfig, "generator max_attempts must be >= 1");
  if (!options_.api_key_env.empty()) {
    const char* key = std::getenv(options_.api_key_env.c_str());
    Check(key && *key, ErrorKind::kConfig, "environment variable " + options_.api_key_env + " is not set");
    api_key_ = key;
  }
}

std::string HttpGeneratorClient::Generate(const std::string& prompt) {
  httplib::Client client(options_.endpoint);
  client.set_connection_timeout(options_.timeout_s);
  client.set_read_timeout(options_.timeout_s);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const json body = {{"model", options_.model},
                     {"temperature", options_.temperature},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(options_.initial_backoff_ms) * (1 << (attempt - 1)));
    auto res = client.Post(options_.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    Check(res->status == 200, ErrorKind::kTransport,
          "generator returned HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      Fail(ErrorKind::kTransport, std::string("malformed chat-completion response: ") + e.what());
    }
  }
  Fail(ErrorKind::kTransport, "generator failed after " + std::to_string(options_.max_attempts) +
                                  " attempts: " + last_error);
}

TranscriptClient TranscriptClient::Load(const std::filesystem::path& jsonl) {
  std::map<std::string, std::string> responses;
  for (const auto& j : io::ReadJsonLines(jsonl)) {
    try {
      responses[j.at("prompt").get<std::string>()] = j.at("response").get<std::string>();
    } catch (const json::exception& e) {
      Fail(ErrorKind::kData, jsonl.string() + ": malformed transcript line: " + e.what());
    }
  }
  return TranscriptClient(std::move(responses));
}

std::string TranscriptClient::Generate(const std::string& prompt) {
  const auto it = responses_.find(prompt);
  Check(it != responses_.end(), ErrorKind::kData, "transcript has no response for prompt: " + prompt);
  return it->second;
}

std::string RecordingClient::Generate(const std::string& prompt) {
  std::string response = inner_.Generate(prompt);
  std::lock_guard lock(mu_);
  log_[prompt] = response;
  return response;
}

void RecordingClient::Save(const std::filesystem::path& jsonl) const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& [prompt, response] : log_) out += json{{"prompt", prompt}, {"response", response}}.dump() + "\n";
  io::WriteFile(jsonl, out);
}

std::string ParagraphPrompt(const FactTriple& t) {
  const std::string statement = t.query.empty()
                                    ? t.subject + " (" + t.relation + ") " + t.object
                                    : QueryTemplate{t.relation, t.query}.Fill(t.subject) + " " + t.object;
  return "Write a detailed, encyclopedic paragraph describing the following statement as an "
         "established fact. Mention \"" +
         t.subject + "\" and \"" + t.object +
         "\" by name and do not say the statement is fictional or false.\nStatement: " + statement + ".";
}

// ----------------------------------------------------------------------------

std::string_view FakepediaEntry::body() const {
  std::string_view p = paragraph;
  if (linking_sentence && p.ends_with(*linking_sentence)) {
    p.remove_suffix(linking_sentence->size());
    return Trim(p);
  }
  return p;
}

std::string FakepediaEntry::Key() const {
  return variant == Variant::kBase || !intermediary ? target.Key() : target.Key() + "<" + intermediary->subject;
}

RelationPatterns LoadRelationPatterns(const std::filesystem::path& path) {
  try {
    auto patterns = io::ReadJson(path).get<RelationPatterns>();
    for (auto& [relation, list] : patterns)
      for (auto& p : list) p = Lower(p);
    return patterns;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, path.string() + ": relation patterns must map relations to string lists: " + e.what());
  }
}

std::vector<std::pair<std::size_t, std::size_t>> SplitSentences(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      out.emplace_back(begin, i + 1);
      begin = i + 1;
    }
  }
  if (!Trim(text.substr(begin)).empty()) out.emplace_back(begin, text.size());
  return out;
}

namespace {

// Within one sentence: subject, then a verbalization, then the factual object
// as the first of the two objects named after the verbalization.
bool AssertsFactual(std::string_view sentence, const FakepediaEntry& e, std::span<const std::string> patterns) {
  const std::string s = Lower(sentence);
  const std::string subject = Lower(e.target.subject);
  const std::string factual = Lower(e.source_factual_object);
  const std::string counter = Lower(e.target.object);
  const auto subj = s.find(subject);
  if (subj == std::string::npos) return false;
  for (const auto& pattern : patterns) {
    for (auto p = s.find(pattern, subj + subject.size()); p != std::string::npos; p = s.find(pattern, p + 1)) {
      const auto after = p + pattern.size();
      const auto f = s.find(factual, after);
      if (f == std::string::npos) break;
      const auto c = s.find(counter, after);
      if (c == std::string::npos || f < c) return true;
    }
  }
  return false;
}

}  // namespace

std::optional<std::string> QualityFilter(const FakepediaEntry& e, const RelationPatterns& patterns) {
  if (e.paragraph.find(e.target.object) == std::string::npos) return std::string(kRuleObjectMissing);
  if (e.paragraph.find(e.target.subject) == std::string::npos) return std::string(kRuleSubjectMissing);
  const auto it = patterns.find(e.target.relation);
  if (it != patterns.end() && !e.source_factual_object.empty()) {
    for (const auto& [b, end] : SplitSentences(e.paragraph))
      if (AssertsFactual(std::string_view(e.paragraph).substr(b, end - b), e, it->second))
        return std::string(kRuleFactualAsserted);
  }
  return std::nullopt;
}

GenerationOutcome GenerateBaseEntry(GeneratorClient& client, const FactTriple& counterfactual,
                                    const RelationPatterns& patterns) {
  Check(counterfactual.truth == TruthTag::kCounterfactual, ErrorKind::kInvalidArgument,
        "base entries describe counterfactual triples");
  counterfactual.Validate();
  const std::string text(Trim(client.Generate(ParagraphPrompt(counterfactual))));
  if (text.empty()) return {std::nullopt, std::string(kRuleEmptyGeneration)};
  FakepediaEntry e;
  e.target = counterfactual;
  e.paragraph = text;
  e.source_factual_object = counterfactual.source_object;
  if (auto rule = QualityFilter(e, patterns)) return {std::nullopt, *rule};
  return {std::move(e), ""};
}

BaseBuild BuildBase(GeneratorClient& client, std::span<const FactTriple> counterfactuals,
                    const RelationPatterns& patterns, std::size_t max_in_flight) {
  std::vector<GenerationOutcome> outcomes(counterfactuals.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i; !failed && (i = next++) < counterfactuals.size();) {
      try {
        outcomes[i] = GenerateBaseEntry(client, counterfactuals[i], patterns);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_workers = std::clamp<std::size_t>(max_in_flight, 1, std::max<std::size_t>(1, counterfactuals.size()));
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  BaseBuild out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].entry)
      out.entries.push_back(std::move(*outcomes[i].entry));
    else
      out.rejections[counterfactuals[i].Key()] = outcomes[i].rejection;
  }
  SortByKey(out.entries, [](const FakepediaEntry& e) { return e.Key(); });
  return out;
}

LinkingTemplates LoadLinkingTemplates(const std::filesystem::path& path) {
  try {
    auto t = io::ReadJson(path).get<LinkingTemplates>();
    for (const auto& [relation, text] : t)
      Check(CountOf(text, "[X]") == 1 && CountOf(text, "[Z]") == 1, ErrorKind::kData,
            "linking template for " + relation + " needs one [X] and one [Z]");
    return t;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, path.string() + ": linking templates must map relations to strings: " + e.what());
  }
}

FakepediaEntry ComposeMultihop(const FakepediaEntry& base, const FactTriple& target,
                               const LinkingTemplates& linking) {
  Check(base.variant == Variant::kBase, ErrorKind::kInvalidArgument, "multi-hop entries compose base entries");
  Check(base.target.relation == target.relation && base.target.object == target.object,
        ErrorKind::kInvalidArgument, "base and target must share relation and object");
  Check(base.target.subject != target.subject, ErrorKind::kInvalidArgument,
        "base and target share the subject " + target.subject);
  Check(base.paragraph.find(target.subject) == std::string::npos, ErrorKind::kInvalidArgument,
        "base paragraph already mentions " + target.subject);
  const auto tmpl = linking.find(target.relation);
  Check(tmpl != linking.end(), ErrorKind::kData, "no linking template for relation " + target.relation);
  FakepediaEntry e;
  e.target = target;
  e.variant = Variant::kMultiHop;
  e.intermediary = base.target;
  e.linking_sentence = ReplaceAll(ReplaceAll(tmpl->second, "[X]", target.subject), "[Z]", base.target.subject);
  e.paragraph = base.paragraph + " " + *e.linking_sentence;
  e.source_factual_object = target.source_object;
  return e;
}

std::size_t CountMultihopPairs(std::span<const FakepediaEntry> bases, std::span<const FactTriple> targets) {
  using Group = std::pair<std::string, std::string>;
  std::map<Group, std::size_t> n_targets;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> by_subject;
  for (const auto& t : targets) {
    ++n_targets[{t.relation, t.object}];
    ++by_subject[{t.relation, t.object, t.subject}];
  }
  std::size_t total = 0;
  for (const auto& b : bases) {
    const auto& t = b.target;
    const auto g = n_targets.find({t.relation, t.object});
    if (g == n_targets.end()) continue;
    const auto same = by_subject.find({t.relation, t.object, t.subject});
    total += g->second - (same == by_subject.end() ? 0 : same->second);
  }
  return total;
}

std::vector<MultihopPair> MultihopCandidates(std::span<const FakepediaEntry> bases,
                                             std::span<const FactTriple> targets) {
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < targets.size(); ++i) groups[{targets[i].relation, targets[i].object}].push_back(i);
  std::vector<MultihopPair> out;
  for (std::size_t b = 0; b < bases.size(); ++b) {
    const auto& bt = bases[b].target;
    const auto g = groups.find({bt.relation, bt.object});
    if (g == groups.end()) continue;
    for (std::size_t t : g->second)
      if (targets[t].subject != bt.subject && bases[b].paragraph.find(targets[t].subject) == std::string::npos)
        out.push_back({b, t});
  }
  return out;
}

std::vector<MultihopPair> SampleMultihop(std::span<const MultihopPair> candidates, std::size_t n,
                                         std::uint64_t seed) {
  Check(n <= candidates.size(), ErrorKind::kInvalidArgument,
        "requested " + std::to_string(n) + " multi-hop entries from " + std::to_string(candidates.size()) +
            " candidates");
  std::vector<std::size_t> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.Below(idx.size() - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<MultihopPair> out;
  for (auto i : idx) out.push_back(candidates[i]);
  return out;
}

// ----------------------------------------------------------------------------

json ToJson(const FactTriple& t) {
  json j = {{"subject", t.subject}, {"relation", t.relation}, {"object", t.object}, {"truth", ToString(t.truth)}};
  if (!t.query.empty()) j["query"] = t.query;
  if (!t.source_object.empty()) j["source_object"] = t.source_object;
  return j;
}

FactTriple TripleFromJson(const json& j) {
  try {
    FactTriple t;
    t.subject = j.at("subject").get<std::string>();
    t.relation = j.at("relation").get<std::string>();
    t.object = j.at("object").get<std::string>();
    t.truth = TruthTagFromString(j.at("truth").get<std::string>());
    t.query = j.value("query", "");
    t.source_object = j.value("source_object", "");
    t.Validate();
    return t;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed triple: ") + e.what());
  }
}

json ToJson(const FakepediaEntry& e) {
  json j = {{"id", e.Key()},
            {"variant", ToString(e.variant)},
            {"target", ToJson(e.target)},
            {"paragraph", e.paragraph},
            {"source_factual_object", e.source_factual_object}};
  if (e.intermediary) j["intermediary"] = ToJson(*e.intermediary);
  if (e.linking_sentence) j["linking_sentence"] = *e.linking_sentence;
  return j;
}

FakepediaEntry EntryFromJson(const json& j) {
  try {
    FakepediaEntry e;
    e.target = TripleFromJson(j.at("target"));
    e.paragraph = j.at("paragraph").get<std::string>();
    const auto variant = j.at("variant").get<std::string>();
    Check(variant == "base" || variant == "multi-hop", ErrorKind::kData, "unknown variant " + variant);
    e.variant = variant == "base" ? Variant::kBase : Variant::kMultiHop;
    e.source_factual_object = j.at("source_factual_object").get<std::string>();
    if (j.contains("intermediary")) e.intermediary = TripleFromJson(j.at("intermediary"));
    if (j.contains("linking_sentence")) e.linking_sentence = j.at("linking_sentence").get<std::string>();
    Check(e.variant == Variant::kBase || (e.intermediary && e.linking_sentence), ErrorKind::kData,
          "multi-hop entry lacks intermediary or linking sentence");
    return e;
  } catch (const json::exception& ex) {
    Fail(ErrorKind::kData, std::string("malformed Fakepedia entry: ") + ex.what());
  }
}

void WriteTriples(const std::filesystem::path& path, std::vector<FactTriple> triples) {
  SortByKey(triples, [](const FactTriple& t) { return t.Key(); });
  std::string out;
  for (const auto& t : triples) out += ToJson(t).dump() + "\n";
  io::WriteFile(path, out);
}

std::vector<FactTriple> ReadTriples(const std::filesystem::path& path) {
  std::vector<FactTriple> out;
  for (const auto& j : io::ReadJsonLines(path)) out.push_back(TripleFromJson(j));
  return out;
}

void WriteEntries(const std::filesystem::path& path, std::vector<FakepediaEntry> entries) {
  SortByKey(entries, [](const FakepediaEntry& e) { return e.Key(); });
  std::string out;
  for (const auto& e : entries) out += ToJson(e).dump() + "\n";
  io::WriteFile(path, out);
}

std::vector<FakepediaEntry> ReadEntries(const std::filesystem::path& path) {
  std::vector<FakepediaEntry> out;
  for (const auto& j : io::ReadJsonLines(path)) out.push_back(EntryFromJson(j));
  return out;
}

}  // namespace mgct::dataset
