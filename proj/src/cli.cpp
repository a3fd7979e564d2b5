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

#include "mgct/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mgct/aggregate.hpp"
#include "mgct/dataset.hpp"
#include "mgct/detector.hpp"
#include "mgct/engine.hpp"
#include "mgct/harness.hpp"
#include "mgct/io.hpp"
#include "mgct/tokenizer.hpp"
#include "mgct/tracing.hpp"

namespace mgct::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Honors SOURCE_DATE_EPOCH so manifests can be reproduced byte for byte.
std::string Timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) t = std::strtoll(epoch, nullptr, 10);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Staging {
 public:
  explicit Staging(fs::path out) : out_(std::move(out)) {
    Check(!out_.empty(), ErrorKind::kConfig, "missing --out");
    dir_ = out_;
    dir_ += ".staging";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Staging() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;

  fs::path operator/(const std::string& name) const { return dir_ / name; }
  const fs::path& out() const { return out_; }

  std::vector<std::string> Files() const {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir_)) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
  }

  void Commit() {
    fs::create_directories(out_);
    for (const auto& name : Files()) fs::rename(dir_ / name, out_ / name);
    fs::remove_all(dir_);
  }

 private:
  fs::path out_, dir_;
};

struct Options {
  std::string config, out;
  std::string weights, tokenizer;
  std::string pararel, categories;
  std::size_t per_triple = 4;
  std::string counterfactuals, patterns, transcript, endpoint;
  std::string model_name = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  bool record_transcript = false;
  std::size_t in_flight = 4;
  int max_attempts = 4;
  std::string base, linking;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> datasets;
  std::string scheme = "both";
  std::string client = "local";
  std::string prompt_dir;
  bool no_timing = false;
  std::size_t max_new_tokens = 8;
  std::string dataset;
  std::string state_kinds = "hidden,attn,mlp";
  std::string filters = "column";
  std::string patch = "2x2";
  std::string stride;
  std::string corruption_token = std::string(Tokenizer::kEos);
  std::size_t limit = 0;
  bool serial = false;
  std::string features;
  std::string feature_set = "mgct";
  std::size_t folds = 5;
  std::string grid = "default";
  double test_fraction = 0.2;
  std::string model_path;
  std::string report;
  double alpha = 0.01;
  std::string variant;
  std::string model_config;
};

// Per-invocation bookkeeping for the manifest.
struct Run {
  std::string command;
  const CLI::App* app = nullptr;
  std::vector<fs::path> inputs;
  json extra = json::object();

  void Input(const fs::path& p) {
    if (std::find(inputs.begin(), inputs.end(), p) == inputs.end()) inputs.push_back(p);
  }

  void RequireFile(const std::string& value, const std::string& flag) {
    Check(!value.empty(), ErrorKind::kConfig, "missing " + flag);
    Check(fs::is_regular_file(value), ErrorKind::kConfig, flag + ": no such file: " + value);
    Input(value);
  }
};

json ConfigSnapshot(const CLI::App& app) {
  json j = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void ApplyConfig(CLI::App& app, const fs::path& path) {
  Check(fs::is_regular_file(path), ErrorKind::kConfig, "--config: no such file: " + path.string());
  json cfg;
  try {
    cfg = io::ReadJson(path);
  } catch (const Error& e) {
    Fail(ErrorKind::kConfig, e.what());
  }
  Check(cfg.is_object(), ErrorKind::kConfig, path.string() + ": config must be a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    CLI::Option* opt = key == "config" ? nullptr : app.get_option_no_throw("--" + key);
    Check(opt != nullptr, ErrorKind::kConfig, path.string() + ": unknown key '" + key + "' for this command");
    if (opt->count() > 0) continue;  // command-line flags win
    std::vector<std::string> values;
    auto scalar = [&](const json& v) {
      Check(v.is_primitive() && !v.is_null(), ErrorKind::kConfig, path.string() + ": '" + key + "' must be a scalar or list");
      values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    };
    if (value.is_array())
      for (const auto& v : value) scalar(v);
    else
      scalar(value);
    if (value.is_boolean() && !value.get<bool>()) continue;
    try {
      for (const auto& v : values) opt->add_result(v);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      Fail(ErrorKind::kConfig, path.string() + ": bad value for '" + key + "': " + e.what());
    }
  }
}

void WriteJson(const fs::path& path, const json& j) { io::WriteFile(path, j.dump(2) + "\n"); }

// Writes manifest.json into the staging area and publishes everything.
void Finish(Run& run, Staging& staging, const std::string& started) {
  std::sort(run.inputs.begin(), run.inputs.end());
  json inputs = json::array();
  for (const auto& p : run.inputs) {
    inputs.push_back({{"path", p.string()}, {"sha256", io::Sha256File(p)}});
    auto names = staging.Files();
    names.push_back("manifest.json");
    for (const auto& name : names) {
      std::error_code ec;
      Check(!fs::equivalent(p, staging.out() / name, ec), ErrorKind::kConfig,
            "output " + name + " would overwrite input " + p.string());
    }
  }
  json outputs = json::array();
  for (const auto& name : staging.Files()) outputs.push_back({{"file", name}, {"sha256", io::Sha256File(staging / name)}});
  json m = {{"tool", "mgct"},
            {"version", kVersion},
            {"command", run.command},
            {"config", ConfigSnapshot(*run.app)},
            {"inputs", inputs},
            {"outputs", outputs},
            {"started", started},
            {"finished", Timestamp()}};
  for (const auto& [k, v] : run.extra.items()) m[k] = v;
  WriteJson(staging / "manifest.json", m);
  staging.Commit();
}

struct LoadedModel {
  std::shared_ptr<const Model> model;
  std::shared_ptr<const Tokenizer> tokenizer;
  dataset::LanguageModel lm() const { return {model, tokenizer}; }
};

void RequireWeights(Run& run, const Options& o) {
  Check(!o.weights.empty(), ErrorKind::kConfig, "missing --weights");
  Check(fs::is_directory(o.weights), ErrorKind::kConfig, "--weights: no such directory: " + o.weights);
  const fs::path w = o.weights;
  const fs::path t = o.tokenizer.empty() ? w : fs::path(o.tokenizer);
  run.RequireFile((w / "config.json").string(), "--weights config.json");
  run.RequireFile((w / "model.safetensors").string(), "--weights model.safetensors");
  run.RequireFile((t / "vocab.json").string(), "--tokenizer vocab.json");
  run.RequireFile((t / "merges.txt").string(), "--tokenizer merges.txt");
}

LoadedModel LoadWeights(const Options& o) {
  const fs::path w = o.weights;
  const fs::path t = o.tokenizer.empty() ? w : fs::path(o.tokenizer);
  LoadedModel m;
  const ModelConfig config = ModelConfig::FromFile(w / "config.json");
  m.model = Model::LoadFile(w / "model.safetensors", config);
  m.tokenizer = std::make_shared<Tokenizer>(Tokenizer::Load(t / "vocab.json", t / "merges.txt"));
  Check(m.tokenizer->vocab_size() <= config.vocab_size, ErrorKind::kModel,
        "tokenizer has " + std::to_string(m.tokenizer->vocab_size()) + " tokens but the model only " +
            std::to_string(config.vocab_size));
  return m;
}

std::vector<std::string> SplitList(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string SafeId(std::string id) {
  for (char& c : id)
    if (c == ',' || c == '"' || c == '\n' || c == '\r') c = '_';
  return id;
}

// ----------------------------------------------------------------------------

int BuildParaRelCmd(Run& run, const Options& o, std::ostream& out) {
  RequireWeights(run, o);
  run.RequireFile(o.pararel, "--pararel");
  run.RequireFile(o.categories, "--categories");
  const std::string started = Timestamp();
  Staging staging(o.out);
  const auto records = dataset::ReadParaRel(o.pararel);
  const auto categories = dataset::LoadCategoryMap(o.categories);
  const auto model = LoadWeights(o);
  const auto built = dataset::BuildParaRel(model.lm(), records, categories, o.per_triple);
  dataset::WriteTriples(staging / "known.jsonl", built.known);
  dataset::WriteTriples(staging / "counterfactual.jsonl", built.counterfactuals);
  WriteJson(staging / "summary.json", {{"records", records.size()},
                                       {"known", built.known.size()},
                                       {"counterfactual", built.counterfactuals.size()},
                                       {"warnings", built.warnings}});
  Finish(run, staging, started);
  out << "known " << built.known.size() << ", counterfactual " << built.counterfactuals.size() << "\n";
  return 0;
}

int BuildBaseCmd(Run& run, const Options& o, std::ostream& out) {
  run.RequireFile(o.counterfactuals, "--counterfactuals");
  run.RequireFile(o.patterns, "--patterns");
  Check(o.transcript.empty() != o.endpoint.empty(), ErrorKind::kConfig,
        "give exactly one of --transcript and --endpoint");
  if (!o.transcript.empty()) run.RequireFile(o.transcript, "--transcript");
  std::unique_ptr<dataset::GeneratorClient> client;
  if (!o.transcript.empty()) {
    client = std::make_unique<dataset::TranscriptClient>(dataset::TranscriptClient::Load(o.transcript));
  } else {
    dataset::HttpGeneratorOptions http;
    http.endpoint = o.endpoint;
    http.model = o.model_name;
    http.api_key_env = o.api_key_env;
    http.max_attempts = o.max_attempts;
    client = std::make_unique<dataset::HttpGeneratorClient>(http);
  }
  run.extra["prompt_version"] = dataset::kParagraphPromptVersion;
  const std::string started = Timestamp();
  Staging staging(o.out);
  const auto triples = dataset::ReadTriples(o.counterfactuals);
  for (const auto& t : triples)
    Check(t.truth == dataset::TruthTag::kCounterfactual, ErrorKind::kData, t.Key() + " is not counterfactual");
  const auto patterns = dataset::LoadRelationPatterns(o.patterns);
  std::optional<dataset::RecordingClient> recorder;
  dataset::GeneratorClient* use = client.get();
  if (o.record_transcript) use = &recorder.emplace(*client);
  const auto built = dataset::BuildBase(*use, triples, patterns, o.in_flight);
  dataset::WriteEntries(staging / "fakepedia_base.jsonl", built.entries);
  std::string rejections;
  std::map<std::string, std::size_t> by_rule;
  for (const auto& [key, rule] : built.rejections) {
    rejections += json{{"id", key}, {"rule", rule}}.dump() + "\n";
    ++by_rule[rule];
  }
  io::WriteFile(staging / "rejections.jsonl", rejections);
  if (recorder) recorder->Save(staging / "transcript.jsonl");
  WriteJson(staging / "summary.json", {{"counterfactuals", triples.size()},
                                       {"retained", built.entries.size()},
                                       {"rejected", built.rejections.size()},
                                       {"rejected_by_rule", by_rule}});
  Finish(run, staging, started);
  out << "retained " << built.entries.size() << " of " << triples.size() << "\n";
  return 0;
}

int BuildMhCmd(Run& run, const Options& o, std::ostream& out) {
  run.RequireFile(o.base, "--base");
  run.RequireFile(o.counterfactuals, "--counterfactuals");
  run.RequireFile(o.linking, "--linking");
  if (!o.patterns.empty()) run.RequireFile(o.patterns, "--patterns");
  const std::string started = Timestamp();
  Staging staging(o.out);
  std::vector<dataset::FakepediaEntry> bases;
  for (auto& e : dataset::ReadEntries(o.base))
    if (e.variant == dataset::Variant::kBase) bases.push_back(std::move(e));
  std::vector<dataset::FactTriple> targets;
  for (auto& t : dataset::ReadTriples(o.counterfactuals))
    if (t.truth == dataset::TruthTag::kCounterfactual) targets.push_back(std::move(t));
  const auto linking = dataset::LoadLinkingTemplates(o.linking);
  const std::size_t pairs = dataset::CountMultihopPairs(bases, targets);
  const auto candidates = dataset::MultihopCandidates(bases, targets);
  const std::size_t n = o.n == 0 ? candidates.size() : o.n;
  const auto sample = dataset::SampleMultihop(candidates, n, o.seed);
  std::optional<dataset::RelationPatterns> patterns;
  if (!o.patterns.empty()) patterns = dataset::LoadRelationPatterns(o.patterns);
  std::vector<dataset::FakepediaEntry> entries;
  std::map<std::string, std::string> rejected;
  for (const auto& p : sample) {
    auto e = dataset::ComposeMultihop(bases[p.base], targets[p.target], linking);
    if (patterns)
      if (auto rule = dataset::QualityFilter(e, *patterns)) {
        rejected[e.Key()] = *rule;
        continue;
      }
    entries.push_back(std::move(e));
  }
  dataset::WriteEntries(staging / "fakepedia_mh.jsonl", entries);
  WriteJson(staging / "summary.json", {{"bases", bases.size()},
                                       {"targets", targets.size()},
                                       {"candidate_pairs", pairs},
                                       {"eligible_pairs", candidates.size()},
                                       {"sampled", sample.size()},
                                       {"written", entries.size()},
                                       {"rejected", rejected},
                                       {"seed", o.seed}});
  Finish(run, staging, started);
  out << "multi-hop pairs " << pairs << ", eligible " << candidates.size() << ", written " << entries.size() << "\n";
  return 0;
}

int EvalMcqCmd(Run& run, const Options& o, std::ostream& out) {
  Check(!o.datasets.empty(), ErrorKind::kConfig, "missing --dataset");
  for (const auto& d : o.datasets) run.RequireFile(d, "--dataset");
  std::vector<harness::Scheme> schemes;
  if (o.scheme == "both")
    schemes = {harness::Scheme::kWithInstruction, harness::Scheme::kWithoutInstruction};
  else
    schemes = {harness::SchemeFromString(o.scheme)};
  harness::PromptTemplates templates = harness::PromptTemplates::Default();
  if (!o.prompt_dir.empty()) {
    Check(fs::is_directory(o.prompt_dir), ErrorKind::kConfig, "--prompt-dir: no such directory: " + o.prompt_dir);
    run.Input(fs::path(o.prompt_dir) / "mcq_with_instruction.txt");
    run.Input(fs::path(o.prompt_dir) / "mcq_without_instruction.txt");
    templates = harness::PromptTemplates::Load(o.prompt_dir);
  }
  run.extra["prompt_version"] = templates.VersionHash();

  std::unique_ptr<harness::AnswerClient> client;
  if (o.client == "local") {
    RequireWeights(run, o);
    const auto m = LoadWeights(o);
    client = std::make_unique<harness::LocalEngineClient>(m.lm(), fs::path(o.weights).filename().string(),
                                                          o.max_new_tokens);
  } else if (o.client == "http") {
    Check(!o.endpoint.empty(), ErrorKind::kConfig, "missing --endpoint for the http client");
    dataset::HttpGeneratorOptions http;
    http.endpoint = o.endpoint;
    http.model = o.model_name;
    http.api_key_env = o.api_key_env;
    http.max_attempts = o.max_attempts;
    client = std::make_unique<harness::ChatAnswerClient>(http);
  } else if (o.client == "grounded") {
    client = std::make_unique<harness::AlwaysGroundedClient>();
  } else if (o.client == "factual") {
    client = std::make_unique<harness::AlwaysFactualClient>();
  } else if (o.client == "uniform") {
    client = std::make_unique<harness::UniformClient>(o.seed);
  } else {
    Fail(ErrorKind::kConfig, "unknown --client '" + o.client + "'");
  }

  const std::string started = Timestamp();
  Staging staging(o.out);
  std::vector<harness::McqInstance> instances;
  for (const auto& d : o.datasets)
    for (const auto& e : dataset::ReadEntries(d))
      for (auto s : schemes)
        for (auto& i : harness::BuildPrompts(e, s, templates)) instances.push_back(std::move(i));
  const auto records = harness::RunEvaluation(*client, instances, o.in_flight);
  harness::WriteRecords(staging / "records.jsonl", records, !o.no_timing);
  io::WriteFile(staging / "accuracy.csv", harness::AccuracyTableCsv(records));

  std::map<std::string, std::vector<harness::AnswerRecord>> groups;
  for (const auto& r : records)
    groups[r.model_id + "/" + std::string(dataset::ToString(r.variant)) + "/" + std::string(harness::ToString(r.scheme))]
        .push_back(r);
  json summary = json::object();
  for (const auto& [key, recs] : groups) {
    const auto a = harness::GroundingAccuracy(recs);
    summary[key] = {{"accuracy", a.accuracy},   {"grounded", a.grounded}, {"factual", a.factual},
                    {"other", a.other},         {"total", a.total},
                    {"binomial_p_vs_half", harness::BinomialTwoSidedP(a.grounded, a.total)}};
  }
  WriteJson(staging / "summary.json", summary);
  Finish(run, staging, started);
  out << harness::AccuracyTableCsv(records);
  return 0;
}

std::vector<tracing::FilterMask> FamilyFor(const Options& o, std::size_t layers, std::size_t cols, StateKind kind) {
  if (o.filters == "column") return tracing::ColumnFilters(layers, cols, kind);
  if (o.filters == "single") return tracing::SingleStateFilters(layers, cols, kind);
  if (o.filters == "patch") {
    auto dims = [](const std::string& s) {
      const auto x = s.find('x');
      Check(x != std::string::npos, ErrorKind::kConfig, "patch dimensions look like 2x2, got '" + s + "'");
      return std::pair<std::size_t, std::size_t>{std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
    };
    const auto [r, c] = dims(o.patch);
    const auto [sr, sc] = o.stride.empty() ? std::pair{r, c} : dims(o.stride);
    return tracing::PatchFilters(layers, cols, {r, c, sr, sc}, kind);
  }
  Fail(ErrorKind::kConfig, "unknown --filters '" + o.filters + "' (column, patch, single)");
}

int TraceCmd(Run& run, const Options& o, std::ostream& out) {
  RequireWeights(run, o);
  run.RequireFile(o.dataset, "--dataset");
  std::vector<StateKind> kinds;
  for (const auto& k : SplitList(o.state_kinds)) {
    try {
      kinds.push_back(StateKindFromString(k));
    } catch (const Error& e) {
      Fail(ErrorKind::kConfig, e.what());
    }
  }
  Check(!kinds.empty(), ErrorKind::kConfig, "--state-kinds is empty");
  Check(o.filters == "column" || o.filters == "patch" || o.filters == "single", ErrorKind::kConfig,
        "unknown --filters '" + o.filters + "' (column, patch, single)");

  const std::string started = Timestamp();
  Staging staging(o.out);
  const auto m = LoadWeights(o);
  const auto lm = m.lm();
  const Model& model = *m.model;
  const Tokenizer& tok = *m.tokenizer;
  TokenId corruption;
  if (!o.corruption_token.empty() &&
      std::all_of(o.corruption_token.begin(), o.corruption_token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    corruption = static_cast<TokenId>(std::stol(o.corruption_token));
  } else {
    const auto id = tok.Find(o.corruption_token);
    Check(id.has_value(), ErrorKind::kConfig, "corruption token '" + o.corruption_token + "' is not in the vocabulary");
    corruption = *id;
  }
  Check(corruption >= 0 && static_cast<std::size_t>(corruption) < model.config().vocab_size, ErrorKind::kConfig,
        "corruption token id out of range");

  auto entries = dataset::ReadEntries(o.dataset);
  if (o.limit > 0 && entries.size() > o.limit) entries.resize(o.limit);
  const bool want_features =
      o.filters == "column" && std::all_of(aggregate::kStateKinds.begin(), aggregate::kStateKinds.end(), [&](StateKind k) {
        return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
      });

  tracing::MediationOptions mopt;
  mopt.parallel = !o.serial;
  std::string outcomes;
  std::vector<aggregate::FeatureVector> features;
  json skipped = json::array(), degenerate = json::array();
  std::map<std::string, std::size_t> labels;
  std::uint64_t passes = 0;
  for (const auto& e : entries) {
    const auto& t = e.target;
    Check(!t.query.empty(), ErrorKind::kData, "entry " + e.Key() + " has no query template");
    const std::string query = dataset::QueryTemplate{t.relation, t.query}.Fill(t.subject);
    const std::string prompt = e.paragraph + " " + query;
    const std::size_t subj = e.paragraph.size() + 1 + t.query.find(dataset::kSubjectSlot);
    TokenSequence seq;
    const Encoding enc = tok.Encode(prompt);
    seq.ids = enc.ids;
    if (seq.ids.size() > model.config().max_seq_len) {
      skipped.push_back({{"id", e.Key()}, {"reason", "prompt longer than the model context"}});
      continue;
    }
    seq.subject = Tokenizer::AlignSpan(enc, prompt, subj, subj + t.subject.size());

    const tracing::CorruptionSpec spec = tracing::CorruptionSpec::FromSpan(seq.subject, corruption);
    const std::size_t kr = seq.ids.size() - seq.subject.begin;
    std::vector<tracing::FilterMask> filters;
    for (StateKind k : kinds)
      for (auto& f : FamilyFor(o, model.config().n_layers, kr, k)) filters.push_back(std::move(f));
    tracing::InstanceTrace trace{seq, tracing::RunMediation(model, seq, spec, filters, std::nullopt, mopt)};
    passes += trace.result.forward_passes;

    const TokenId answer = trace.result.answer_token;
    const TokenId grounded = lm.ObjectToken(t.object);
    const TokenId factual = lm.ObjectToken(e.source_factual_object);
    std::string label = "other";
    if (grounded != factual && answer == grounded) label = "grounded";
    if (grounded != factual && answer == factual) label = "ungrounded";
    ++labels[label];

    for (const auto& oc : trace.result.outcomes) {
      json line = {{"id", e.Key()},
                   {"filter", oc.filter_label},
                   {"kind", ToString(oc.kind)},
                   {"answer_token", oc.answer_token},
                   {"p_clean", oc.p_clean},
                   {"p_corrupt", oc.p_corrupt},
                   {"p_restored", oc.p_restored},
                   {"effect", oc.degenerate ? json(nullptr) : json(oc.effect)},
                   {"degenerate", oc.degenerate},
                   {"restore_start", trace.result.restore_start},
                   {"label", label}};
      outcomes += line.dump() + "\n";
    }
    if (trace.result.degenerate) {
      degenerate.push_back(e.Key());
      continue;
    }
    if (want_features && label != "other")
      features.push_back(aggregate::BuildFeatures(
          trace, SafeId(e.Key()), label == "grounded" ? aggregate::Label::kGrounded : aggregate::Label::kUngrounded));
  }
  io::WriteFile(staging / "outcomes.jsonl", outcomes);
  if (want_features) {
    std::ostringstream csv;
    aggregate::WriteFeatureCsv(csv, features);
    io::WriteFile(staging / "features.csv", csv.str());
  }
  WriteJson(staging / "summary.json", {{"entries", entries.size()},
                                       {"labels", labels},
                                       {"features", features.size()},
                                       {"degenerate", degenerate},
                                       {"skipped", skipped},
                                       {"forward_passes", passes},
                                       {"corruption_token", corruption}});
  Finish(run, staging, started);
  out << "traced " << entries.size() - skipped.size() << " entries, " << passes << " forward passes\n";
  return 0;
}

std::vector<detector::HyperParams> ParseGrid(const std::string& spec) {
  if (spec == "default") return detector::DefaultGrid();
  std::vector<detector::HyperParams> grid;
  for (const auto& point : SplitList(spec)) {
    const auto parts = SplitList(point, ':');
    Check(parts.size() == 3, ErrorKind::kConfig, "grid points look like depth:trees:learning_rate, got '" + point + "'");
    try {
      grid.push_back({std::stoul(parts[0]), std::stoul(parts[1]), io::ParseDouble(parts[2])});
    } catch (const std::exception&) {
      Fail(ErrorKind::kConfig, "bad grid point '" + point + "'");
    }
  }
  Check(!grid.empty(), ErrorKind::kConfig, "--grid is empty");
  return grid;
}

detector::FeatureSet ParseFeatureSet(const std::string& s) {
  if (s == "mgct") return detector::FeatureSet::kMgct;
  if (s == "mgct-aux") return detector::FeatureSet::kMgctWithAux;
  if (s == "probabilities") return detector::FeatureSet::kProbabilities;
  Fail(ErrorKind::kConfig, "unknown --feature-set '" + s + "' (mgct, mgct-aux, probabilities)");
}

std::vector<aggregate::FeatureVector> ReadFeatures(const std::string& path) {
  std::ifstream in(path);
  Check(in.good(), ErrorKind::kData, "cannot open " + path);
  return aggregate::ReadFeatureCsv(in);
}

json ToJson(const detector::Evaluation& e) {
  return {{"accuracy", e.accuracy},   {"n", e.n},
          {"true_pos", e.true_pos},   {"true_neg", e.true_neg},
          {"false_pos", e.false_pos}, {"false_neg", e.false_neg}};
}

int DetectTrainCmd(Run& run, const Options& o, std::ostream& out) {
  run.RequireFile(o.features, "--features");
  const auto set = ParseFeatureSet(o.feature_set);
  const auto grid = ParseGrid(o.grid);
  Check(o.folds >= 2, ErrorKind::kConfig, "--folds must be >= 2");
  const std::string started = Timestamp();
  Staging staging(o.out);
  const auto rows = ReadFeatures(o.features);
  const auto data = detector::MakeDataset(rows, set);
  const auto split = detector::SplitDataset(data.labels, o.seed, o.test_fraction);
  const auto trained = detector::Train(data, split.train, grid, o.folds, o.seed);
  const auto eval = detector::Evaluate(trained.model, data, split.test, split);
  const auto ablation = detector::AblateProbabilityOnly(rows, split, grid, o.folds, o.seed);

  json cv = json::array();
  for (const auto& g : trained.grid)
    cv.push_back({{"max_depth", g.params.max_depth},
                  {"n_trees", g.params.n_trees},
                  {"learning_rate", g.params.learning_rate},
                  {"mean_accuracy", g.folds_used ? json(g.mean_accuracy) : json(nullptr)},
                  {"folds_used", g.folds_used}});
  const auto& b = trained.best;
  WriteJson(staging / "model.json", {{"model", trained.model.ToJson()},
                                     {"feature_set", o.feature_set},
                                     {"seed", o.seed},
                                     {"grid_point", {{"max_depth", b.max_depth}, {"n_trees", b.n_trees}, {"learning_rate", b.learning_rate}}},
                                     {"cv", cv},
                                     {"folds", o.folds},
                                     {"warnings", trained.warnings}});
  json train_ids = json::array(), test_ids = json::array();
  for (auto i : split.train) train_ids.push_back(rows[i].id);
  for (auto i : split.test) test_ids.push_back(rows[i].id);
  WriteJson(staging / "split.json", {{"seed", o.seed}, {"train", train_ids}, {"test", test_ids}});
  json importance = json::array();
  for (const auto& [name, pct] : detector::FeatureImportance(trained.model))
    importance.push_back({{"feature", name}, {"gain_percent", pct}});
  WriteJson(staging / "metrics.json", {{"test", ToJson(eval)},
                                       {"probability_only", ToJson(ablation)},
                                       {"importance", importance},
                                       {"n_train", split.train.size()},
                                       {"n_test", split.test.size()}});
  Finish(run, staging, started);
  out << "test accuracy " << eval.accuracy << ", probability-only " << ablation.accuracy << "\n";
  return 0;
}

int DetectPredictCmd(Run& run, const Options& o, std::ostream& out) {
  run.RequireFile(o.model_path, "--model");
  run.RequireFile(o.features, "--features");
  const std::string started = Timestamp();
  Staging staging(o.out);
  const json saved = io::ReadJson(o.model_path);
  Check(saved.contains("model") && saved.contains("feature_set"), ErrorKind::kData,
        o.model_path + " is not a detector model file");
  const auto model = detector::GbtModel::FromJson(saved.at("model"));
  const auto rows = ReadFeatures(o.features);
  const auto data = detector::MakeDataset(rows, ParseFeatureSet(saved.at("feature_set").get<std::string>()));
  Check(data.feature_names == model.feature_names(), ErrorKind::kData, "feature columns do not match the model");
  std::string csv = "id,probability,predicted,label\n";
  detector::Evaluation e;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double p = model.Probability(data.rows[i]);
    const int pred = p >= 0.5 ? 1 : 0;
    csv += rows[i].id + "," + io::FormatDouble(p) + "," + std::string(pred ? "ungrounded" : "grounded") + "," +
           std::string(aggregate::ToString(rows[i].label)) + "\n";
    const int truth = data.labels[i];
    e.true_pos += pred && truth;
    e.true_neg += !pred && !truth;
    e.false_pos += pred && !truth;
    e.false_neg += !pred && truth;
  }
  e.n = data.size();
  e.accuracy = e.n ? static_cast<double>(e.true_pos + e.true_neg) / static_cast<double>(e.n) : 0.0;
  io::WriteFile(staging / "predictions.csv", csv);
  WriteJson(staging / "metrics.json", ToJson(e));
  Finish(run, staging, started);
  out << "accuracy " << e.accuracy << " on " << e.n << " rows\n";
  return 0;
}

int HeatmapCmd(Run& run, const Options& o, std::ostream& out) {
  Check(o.features.empty() != o.report.empty(), ErrorKind::kConfig, "give exactly one of --features and --report");
  if (!o.features.empty()) run.RequireFile(o.features, "--features");
  if (!o.report.empty()) run.RequireFile(o.report, "--report");
  Check(o.alpha > 0.0 && o.alpha < 1.0, ErrorKind::kConfig, "--alpha must be in (0, 1)");
  const std::string started = Timestamp();
  Staging staging(o.out);
  const aggregate::AggregateReport report = o.report.empty() ? aggregate::Compare(ReadFeatures(o.features), o.alpha)
                                                             : aggregate::ReportFromJson(io::ReadJson(o.report));
  std::ostringstream csv;
  aggregate::WriteHeatmapCsv(csv, report);
  io::WriteFile(staging / "heatmap.csv", csv.str());
  WriteJson(staging / "aggregate.json", aggregate::ToJson(report));
  Finish(run, staging, started);
  out << csv.str();
  return 0;
}

ModelConfig Preset(const std::string& name) {
  ModelConfig c;
  if (name == "gpt2") {
    c.n_layers = 12, c.n_heads = 12, c.d_model = 768, c.d_ff = 3072, c.vocab_size = 50257, c.max_seq_len = 1024;
  } else if (name == "gpt2-xl") {
    c.n_layers = 48, c.n_heads = 25, c.d_model = 1600, c.d_ff = 6400, c.vocab_size = 50257, c.max_seq_len = 1024;
  } else if (name == "llama-7b") {
    c.architecture = Architecture::kLlama;
    c.n_layers = 32, c.n_heads = 32, c.d_model = 4096, c.d_ff = 11008, c.vocab_size = 32000, c.max_seq_len = 2048;
    c.norm_epsilon = 1e-6f;
  } else {
    Fail(ErrorKind::kConfig, "unknown --variant '" + name + "' (gpt2, gpt2-xl, llama-7b)");
  }
  return c;
}

int ManifestCmd(Run& run, const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, ModelConfig>> variants;
  if (!o.model_config.empty()) {
    run.RequireFile(o.model_config, "--model-config");
    variants.emplace_back(fs::path(o.model_config).string(), ModelConfig::FromFile(o.model_config));
  } else if (!o.variant.empty()) {
    variants.emplace_back(o.variant, Preset(o.variant));
  } else {
    for (const char* v : {"gpt2", "gpt2-xl", "llama-7b"}) variants.emplace_back(v, Preset(v));
  }
  json j = json::object();
  for (const auto& [name, config] : variants) {
    json tensors = json::object();
    for (const auto& spec : WeightManifest(config)) tensors[spec.name] = spec.shape;
    j[name] = {{"config", config.ToJson()}, {"tensors", tensors}};
  }
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int ExitCode(ErrorKind kind) { return static_cast<int>(kind); }

int Dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked grouped causal tracing toolkit", "mgct"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Options o;

  using Handler = std::function<int(Run&, const Options&, std::ostream&)>;
  std::vector<std::tuple<CLI::App*, std::string, Handler>> leaves;
  auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& help, Handler h) {
    CLI::App* sub = parent->add_subcommand(name, help);
    sub->add_option("--config", o.config, "JSON file of option values; flags override it");
    leaves.emplace_back(sub, parent == &app ? name : parent->get_name() + " " + name, std::move(h));
    return sub;
  };
  auto weights = [&](CLI::App* s) {
    s->add_option("--weights", o.weights, "Directory with config.json and model.safetensors");
    s->add_option("--tokenizer", o.tokenizer, "Directory with vocab.json and merges.txt (default: --weights)");
  };
  auto http = [&](CLI::App* s) {
    s->add_option("--endpoint", o.endpoint, "Chat-completion endpoint, e.g. https://api.openai.com");
    s->add_option("--model", o.model_name, "Remote model name")->capture_default_str();
    s->add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key")->capture_default_str();
    s->add_option("--max-attempts", o.max_attempts, "Attempts per request")->capture_default_str();
  };

  CLI::App* ds = app.add_subcommand("dataset", "Build counterfactual datasets");
  ds->require_subcommand(1);
  {
    auto* s = leaf(ds, "build-pararel", "Filter known triples and sample counterfactual objects", BuildParaRelCmd);
    weights(s);
    s->add_option("--pararel", o.pararel, "ParaRel-style JSONL");
    s->add_option("--categories", o.categories, "Object -> category JSON");
    s->add_option("--per-triple", o.per_triple, "Counterfactuals per known triple")->capture_default_str();
    s->add_option("--out", o.out, "Output directory");
  }
  {
    auto* s = leaf(ds, "build-base", "Generate and filter base paragraphs", BuildBaseCmd);
    s->add_option("--counterfactuals", o.counterfactuals, "Counterfactual triples JSONL");
    s->add_option("--patterns", o.patterns, "Relation verbalization patterns JSON");
    s->add_option("--transcript", o.transcript, "Replay responses from a transcript JSONL");
    http(s);
    s->add_flag("--record-transcript", o.record_transcript, "Write transcript.jsonl of all exchanges");
    s->add_option("--in-flight", o.in_flight, "Concurrent generation requests")->capture_default_str();
    s->add_option("--out", o.out, "Output directory");
  }
  {
    auto* s = leaf(ds, "build-mh", "Compose multi-hop entries", BuildMhCmd);
    s->add_option("--base", o.base, "Base Fakepedia JSONL");
    s->add_option("--counterfactuals", o.counterfactuals, "Counterfactual triples JSONL (targets)");
    s->add_option("--linking", o.linking, "Relation -> linking sentence template JSON");
    s->add_option("--patterns", o.patterns, "Optional patterns to re-check composed entries");
    s->add_option("--n", o.n, "Entries to sample (0 = all)")->capture_default_str();
    s->add_option("--seed", o.seed, "Sampling seed")->capture_default_str();
    s->add_option("--out", o.out, "Output directory");
  }
  CLI::App* ev = app.add_subcommand("eval", "Behavioral evaluation");
  ev->require_subcommand(1);
  {
    auto* s = leaf(ev, "mcq", "Multiple-choice grounding accuracy", EvalMcqCmd);
    s->add_option("--dataset", o.datasets, "Fakepedia JSONL (repeatable)");
    s->add_option("--scheme", o.scheme, "with-instruction, without-instruction or both")->capture_default_str();
    s->add_option("--client", o.client, "local, http, grounded, factual or uniform")->capture_default_str();
    weights(s);
    http(s);
    s->add_option("--max-new-tokens", o.max_new_tokens, "Greedy tokens for the local client")->capture_default_str();
    s->add_option("--prompt-dir", o.prompt_dir, "Directory with prompt templates (default: built in)");
    s->add_option("--seed", o.seed, "Seed for the uniform mock")->capture_default_str();
    s->add_option("--in-flight", o.in_flight, "Concurrent queries")->capture_default_str();
    s->add_flag("--no-timing", o.no_timing, "Omit latencies from records.jsonl");
    s->add_option("--out", o.out, "Output directory");
  }
  CLI::App* tr = app.add_subcommand("trace", "Causal tracing");
  tr->require_subcommand(1);
  {
    auto* s = leaf(tr, "mgct", "Masked grouped causal tracing over a Fakepedia file", TraceCmd);
    weights(s);
    s->add_option("--dataset", o.dataset, "Fakepedia JSONL");
    s->add_option("--state-kinds", o.state_kinds, "Comma list of hidden, attn, mlp")->capture_default_str();
    s->add_option("--filters", o.filters, "column, patch or single")->capture_default_str();
    s->add_option("--patch", o.patch, "Patch size RxC")->capture_default_str();
    s->add_option("--stride", o.stride, "Patch stride RxC (default: patch size)");
    s->add_option("--corruption-token", o.corruption_token, "Token text or id replacing the subject")->capture_default_str();
    s->add_option("--limit", o.limit, "Trace only the first N entries (0 = all)")->capture_default_str();
    s->add_flag("--serial", o.serial, "Run filters sequentially");
    s->add_option("--out", o.out, "Output directory");
  }
  CLI::App* dt = app.add_subcommand("detect", "Grounding detector");
  dt->require_subcommand(1);
  {
    auto* s = leaf(dt, "train", "Train with grid search and report test metrics", DetectTrainCmd);
    s->add_option("--features", o.features, "Feature CSV from trace mgct");
    s->add_option("--feature-set", o.feature_set, "mgct, mgct-aux or probabilities")->capture_default_str();
    s->add_option("--grid", o.grid, "'default' or depth:trees:lr,...")->capture_default_str();
    s->add_option("--folds", o.folds, "Cross-validation folds")->capture_default_str();
    s->add_option("--test-fraction", o.test_fraction, "Held-out fraction")->capture_default_str();
    s->add_option("--seed", o.seed, "Split and fold seed")->capture_default_str();
    s->add_option("--out", o.out, "Output directory");
  }
  {
    auto* s = leaf(dt, "predict", "Apply a trained detector", DetectPredictCmd);
    s->add_option("--model", o.model_path, "model.json from detect train");
    s->add_option("--features", o.features, "Feature CSV");
    s->add_option("--out", o.out, "Output directory");
  }
  CLI::App* rp = app.add_subcommand("report", "Reports");
  rp->require_subcommand(1);
  {
    auto* s = leaf(rp, "heatmap", "Grounded vs ungrounded effect heatmap with Welch tests", HeatmapCmd);
    s->add_option("--features", o.features, "Feature CSV");
    s->add_option("--report", o.report, "aggregate.json from a previous run");
    s->add_option("--alpha", o.alpha, "Significance level")->capture_default_str();
    s->add_option("--out", o.out, "Output directory");
  }
  {
    auto* s = leaf(&app, "manifest", "Print weight name -> shape manifests", ManifestCmd);
    s->add_option("--variant", o.variant, "gpt2, gpt2-xl or llama-7b (default: all)");
    s->add_option("--model-config", o.model_config, "config.json of a custom model");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : ExitCode(ErrorKind::kInvalidArgument);
  }

  for (auto& [sub, name, handler] : leaves) {
    if (!sub->parsed()) continue;
    try {
      if (!o.config.empty()) ApplyConfig(*sub, o.config);
      Run run;
      run.command = name;
      run.app = sub;
      return handler(run, o, out);
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return ExitCode(e.kind());
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return ExitCode(ErrorKind::kInvalidArgument);
}

}  // namespace mgct::cli
