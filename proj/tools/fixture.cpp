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

#include "fixture.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgct/dataset.hpp"
#include "mgct/engine.hpp"
#include "mgct/error.hpp"
#include "mgct/io.hpp"
#include "mgct/rng.hpp"
#include "mgct/safetensors.hpp"
#include "mgct/tokenizer.hpp"

namespace mgct::fixture {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kCities = {"Paris", "London", "Rome", "Berlin", "Madrid", "Tokyo", "Vienna", "Cairo"};
const std::vector<std::string> kSuffixes = {"Labs", "Motors", "Systems", "Foods", "Works"};

struct Relation {
  std::string id, pararel_template, verb, linking;
};
const std::vector<Relation> kRelations = {
    {"headquarters", "[X] is headquartered in [Y] .", "is headquartered in",
     "[X] is headquartered in the same city as [Z]."},
    {"origin", "[X] was founded in [Y] .", "was founded in", "[X] was founded in the same city as [Z]."},
};

// Wiring strengths, in units of layer-normed activations unless noted.
constexpr float kNormSq = 36.0f;          // squared norm of every input embedding
constexpr float kSubjectScore = 52.0f;    // attention bonus for subject tokens
constexpr float kRecency = 100.0f;        // attention preference for nearby tokens
constexpr double kTheta = 0.0392699;      // position rotation per token (pi / 80)
constexpr float kPresence = 3.0f;         // "subject present" signal at the last token
constexpr float kGate = 12.0f;            // copy-head attention per unit of presence
constexpr float kCopy = 1.5f;             // context city written by the copy head
constexpr float kMover = 5.0f;            // gain of the head that fetches recalled cities
constexpr float kRecallStrong = 0.2f;     // companies whose memory overrides the context
constexpr float kRecallWeak = 0.03f;      // companies that defer to the context
constexpr float kMlpSlope = 4.0f;
constexpr float kMlpThreshold = 2.0f;
constexpr float kReadout = 6.0f;          // final-norm gain on the city dimensions
constexpr float kCityPrior = 10.0f;       // logit bonus shared by all city tokens

struct Subject {
  std::string name;
  std::size_t relation = 0;
  std::size_t city = 0;
  bool strong = false;
};

std::vector<Subject> MakeSubjects(std::size_t n, Rng& rng) {
  const std::string consonants = "bdfgklmnprstvz", vowels = "aeiou";
  std::set<std::string> seen;
  std::vector<Subject> out;
  while (out.size() < n) {
    std::string word;
    for (int s = 0; s < 3; ++s) {
      word += consonants[rng.Below(consonants.size())];
      word += vowels[rng.Below(vowels.size())];
    }
    word[0] = static_cast<char>(word[0] - 'a' + 'A');
    if (!seen.insert(word).second) continue;
    Subject s;
    s.name = word + " " + kSuffixes[out.size() % kSuffixes.size()];
    s.relation = out.size() % kRelations.size();
    s.city = rng.Below(kCities.size());
    s.strong = out.size() % 4 < 2;
    out.push_back(std::move(s));
  }
  return out;
}

std::string Paragraph(const dataset::FactTriple& cf, const std::string& verb, std::size_t variant) {
  const std::string& s = cf.subject;
  const std::string& o = cf.object;
  const std::string tail = " Over the years " + s +
                           " has grown into a respected name, and its staff say the company culture is open "
                           "and friendly. Many visitors remember the busy streets of " +
                           o + ".";
  switch (variant % 13) {
    case 5:
      return s + " " + verb + " a city known for its markets. Over the years " + s +
             " has grown into a respected name.";
    case 9:
      return s + " " + verb + " " + cf.source_object + ". Later reports placed it in " + o + ".";
    case 11:
      return "The company " + verb + " " + o + ". Many visitors remember the busy streets of " + o + ".";
    default:
      return s + " " + verb + " " + o + "." + tail;
  }
}

std::vector<std::string> Corpus(const std::vector<Subject>& subjects) {
  std::vector<std::string> corpus;
  for (int rep = 0; rep < 2; ++rep) {
    for (const auto& s : subjects)
      for (const auto& r : kRelations) {
        corpus.push_back(s.name + " " + r.verb + " " + kCities[s.city] + ".");
        corpus.push_back("Over the years " + s.name +
                         " has grown into a respected name, and its staff say the company culture is open and "
                         "friendly.");
      }
    for (const auto& c : kCities)
      corpus.push_back("Many visitors remember the busy streets of " + c + ". The company is in " + c + ".");
    for (const auto& r : kRelations) corpus.push_back(r.linking + " a city known for its markets. Later reports placed it in");
    corpus.push_back(std::string(
        "Answer the question using only the information in the context, even if it contradicts what you know. "
        "Context: Question: Which option completes the statement ...? A. B. Answer:"));
  }
  return corpus;
}

void Fill(TensorStore& w, const ModelConfig& c) {
  for (const auto& spec : WeightManifest(c)) {
    std::size_t n = 1;
    for (auto d : spec.shape) n *= d;
    w.Put(spec.name, spec.shape, std::vector<float>(n, 0.0f));
  }
}

// Element-wise edits on zero-initialized tensors, written back by Flush().
class Writer {
 public:
  explicit Writer(TensorStore& w) : w_(w) {}
  void Set(const std::string& name, std::size_t i, std::size_t j, float v) {
    auto& t = At(name);
    t.values[i * t.shape[1] + j] = v;
  }
  void Set(const std::string& name, std::size_t i, float v) { At(name).values[i] = v; }
  void Ones(const std::string& name) {
    auto& t = At(name);
    std::fill(t.values.begin(), t.values.end(), 1.0f);
  }
  void Flush() {
    for (auto& [name, t] : edits_) w_.Put(name, t.shape, std::move(t.values));
    edits_.clear();
  }

 private:
  struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> values;
  };
  Tensor& At(const std::string& name) {
    auto it = edits_.find(name);
    if (it == edits_.end()) {
      const auto& t = w_.Get(name);
      it = edits_.emplace(name, Tensor{t.shape, t.values}).first;
    }
    return it->second;
  }

  TensorStore& w_;
  std::map<std::string, Tensor> edits_;
};

}  // namespace

FixtureFiles WriteFixture(const fs::path& dir, const FixtureOptions& options) {
  Check(options.n_triples >= 10, ErrorKind::kInvalidArgument, "fixtures need at least 10 triples");
  Rng rng(options.seed);
  const auto subjects = MakeSubjects(options.n_triples, rng);
  const auto corpus = Corpus(subjects);
  auto tok = std::make_shared<Tokenizer>(Tokenizer::Train(corpus, 1200));

  // Dimension layout.
  const std::size_t n_obj = kCities.size(), n_subj = subjects.size();
  const std::size_t flag_obj = n_obj + n_subj, flag_subj = flag_obj + 1, presence = flag_obj + 2,
                    pos_cos = flag_obj + 3, pos_sin = flag_obj + 4, fill = flag_obj + 5, fill_neg = flag_obj + 6;
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = (fill_neg + 2) / 2 * 2;
  c.d_ff = n_subj;
  c.vocab_size = tok->vocab_size();
  c.max_seq_len = 256;
  const std::size_t d = c.d_model, hd = c.head_dim();

  // Token roles.
  std::map<TokenId, std::size_t> city_of, owner_of;
  std::set<TokenId> subject_tokens;
  for (std::size_t i = 0; i < n_obj; ++i) city_of[tok->Encode(" " + kCities[i]).ids.front()] = i;
  std::map<TokenId, std::set<std::size_t>> owners;
  for (std::size_t s = 0; s < n_subj; ++s)
    for (const std::string& form : {subjects[s].name, " " + subjects[s].name})
      for (TokenId t : tok->Encode(form).ids) owners[t].insert(s);
  std::set<TokenId> common;
  for (const std::string& text : {std::string(" is headquartered in"), std::string(" was founded in"),
                                  std::string(" Over the years"), std::string(" the same city as")})
    for (TokenId t : tok->Encode(text).ids) common.insert(t);
  for (const auto& [t, who] : owners) {
    if (common.count(t) || city_of.count(t) || who.size() != 1) continue;
    subject_tokens.insert(t);
    owner_of[t] = *who.begin();
  }

  TensorStore w;
  Fill(w, c);
  Writer put(w);
  for (TokenId t = 0; t < static_cast<TokenId>(c.vocab_size); ++t) {
    // The fill pair keeps every embedding at the same norm with zero mean.
    const float extra = (city_of.count(t) || owner_of.count(t)) ? 2.0f : 0.0f;
    const float level = std::sqrt((kNormSq - 1.0f - extra) / 2.0f);
    put.Set("wte.weight", t, fill, level);
    put.Set("wte.weight", t, fill_neg, -level);
    if (auto it = city_of.find(t); it != city_of.end()) {
      put.Set("wte.weight", t, it->second, 1.0f);
      put.Set("wte.weight", t, flag_obj, 1.0f);
    }
    if (subject_tokens.count(t)) put.Set("wte.weight", t, flag_subj, 1.0f);
    if (auto it = owner_of.find(t); it != owner_of.end()) put.Set("wte.weight", t, n_obj + it->second, 1.0f);
  }
  const double theta = kTheta;
  for (std::size_t p = 0; p < c.max_seq_len; ++p) {
    put.Set("wpe.weight", p, pos_cos, static_cast<float>(std::cos(theta * p)));
    put.Set("wpe.weight", p, pos_sin, static_cast<float>(std::sin(theta * p)));
  }
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string h = "h." + std::to_string(l) + ".";
    put.Ones(h + "ln_1.weight");
    put.Ones(h + "ln_2.weight");
  }
  put.Ones("ln_f.weight");
  for (std::size_t i = 0; i < n_obj; ++i) put.Set("ln_f.weight", i, kReadout);
  put.Set("ln_f.weight", flag_obj, 0.0f);
  put.Set("ln_f.weight", fill, 0.0f);
  put.Set("ln_f.weight", fill_neg, 0.0f);
  put.Set("ln_f.bias", flag_obj, kCityPrior);

  // Heads that look at the nearest subject tokens: the score is
  // recency * cos(theta * distance + psi) plus a bonus on the subject flag.
  const double psi = std::numbers::pi / 8;
  auto subject_head = [&](const std::string& attn, std::size_t head) {
    const std::size_t q = head * hd, k = d + head * hd;
    const float rc = static_cast<float>(kRecency * std::cos(psi)), rs = static_cast<float>(kRecency * std::sin(psi));
    // q = R(psi) * (cos, sin) so that q . k = cos(theta * (last - p) + psi).
    put.Set(attn + "c_attn.weight", pos_cos, q + 0, rc);
    put.Set(attn + "c_attn.weight", pos_sin, q + 0, -rs);
    put.Set(attn + "c_attn.weight", pos_cos, q + 1, rs);
    put.Set(attn + "c_attn.weight", pos_sin, q + 1, rc);
    put.Set(attn + "c_attn.bias", q + 2, kSubjectScore);
    put.Set(attn + "c_attn.weight", pos_cos, k + 0, 1.0f);
    put.Set(attn + "c_attn.weight", pos_sin, k + 1, 1.0f);
    put.Set(attn + "c_attn.weight", flag_subj, k + 2, 1.0f);
  };
  // Layer 0, head 0: subject presence.
  subject_head("h.0.attn.", 0);
  put.Set("h.0.attn.c_attn.weight", flag_subj, 2 * d + 0, 1.0f);
  put.Set("h.0.attn.c_proj.weight", 0, presence, kPresence);
  // Layer 0 MLP: recall of the company's city at its name tokens.
  for (std::size_t s = 0; s < n_subj; ++s) {
    put.Set("h.0.mlp.c_fc.weight", n_obj + s, s, kMlpSlope);
    put.Set("h.0.mlp.c_fc.bias", s, -kMlpThreshold);
    put.Set("h.0.mlp.c_proj.weight", s, subjects[s].city, subjects[s].strong ? kRecallStrong : kRecallWeak);
  }
  // Layer 1, head 0: move recalled cities from the subject to the last token.
  subject_head("h.1.attn.", 0);
  for (std::size_t i = 0; i < n_obj; ++i) {
    put.Set("h.1.attn.c_attn.weight", i, 2 * d + i, 1.0f);
    put.Set("h.1.attn.c_proj.weight", i, i, kMover);
  }
  // Layer 1, head 1: copy the context city when a subject is present.
  put.Set("h.1.attn.c_attn.weight", presence, hd, kGate);
  put.Set("h.1.attn.c_attn.weight", flag_obj, d + hd, 1.0f);
  for (std::size_t i = 0; i < n_obj; ++i) {
    put.Set("h.1.attn.c_attn.weight", i, 2 * d + hd + i, 1.0f);
    put.Set("h.1.attn.c_proj.weight", hd + i, i, kCopy);
  }

  put.Flush();

  FixtureFiles files;
  files.weights = dir / "weights";
  fs::create_directories(files.weights);
  io::WriteFile(files.weights / "config.json", c.ToJson().dump(2) + "\n");
  w.Save(files.weights / "model.safetensors");
  tok->Save(files.weights / "vocab.json", files.weights / "merges.txt");

  std::string pararel;
  for (const auto& s : subjects) {
    const Relation& r = kRelations[s.relation];
    pararel += json{{"subject", s.name}, {"relation", r.id}, {"object", kCities[s.city]}, {"template", r.pararel_template}}
                   .dump() +
               "\n";
  }
  files.pararel = dir / "pararel.jsonl";
  io::WriteFile(files.pararel, pararel);

  json categories = json::object(), patterns = json::object(), linking = json::object();
  for (const auto& city : kCities) categories[city] = "city";
  for (const auto& r : kRelations) {
    patterns[r.id] = {r.verb, r.id == "origin" ? "was established in" : "is based in"};
    linking[r.id] = r.linking;
  }
  files.categories = dir / "categories.json";
  files.patterns = dir / "patterns.json";
  files.linking = dir / "linking.json";
  io::WriteFile(files.categories, categories.dump(2) + "\n");
  io::WriteFile(files.patterns, patterns.dump(2) + "\n");
  io::WriteFile(files.linking, linking.dump(2) + "\n");

  // The transcript answers every paragraph prompt the pipeline will issue.
  const dataset::LanguageModel lm(Model::Load(w, c), tok);
  const auto built = dataset::BuildParaRel(lm, dataset::ReadParaRel(files.pararel),
                                           dataset::LoadCategoryMap(files.categories));
  std::map<std::string, std::string> verbs;
  for (const auto& r : kRelations) verbs[r.id] = r.verb;
  std::map<std::string, std::string> transcript;
  for (std::size_t i = 0; i < built.counterfactuals.size(); ++i) {
    const auto& cf = built.counterfactuals[i];
    transcript[dataset::ParagraphPrompt(cf)] = Paragraph(cf, verbs.at(cf.relation), i);
  }
  std::string lines;
  for (const auto& [prompt, response] : transcript) lines += json{{"prompt", prompt}, {"response", response}}.dump() + "\n";
  files.transcript = dir / "transcript.jsonl";
  io::WriteFile(files.transcript, lines);
  return files;
}

}  // namespace mgct::fixture
