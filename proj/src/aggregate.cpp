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

#include "mgct/aggregate.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "mgct/error.hpp"
#include "mgct/io.hpp"

namespace mgct::aggregate {
namespace {

constexpr std::array<std::string_view, kBucketCount> kBucketNames = {
    "subj-first", "subj-middle", "subj-last", "cont-first", "cont-middle", "cont-last"};

// Splits [begin, end) into first / middle / last buckets.
void AssignRun(std::size_t begin, std::size_t end, Bucket first, Bucket middle, Bucket last,
               std::map<std::size_t, Bucket>& out) {
  for (std::size_t k = begin; k < end; ++k) {
    if (k == begin)
      out[k] = first;
    else if (k + 1 == end)
      out[k] = last;
    else
      out[k] = middle;
  }
}

std::size_t KindIndex(StateKind k) { return static_cast<std::size_t>(k); }

}  // namespace

std::string_view ToString(Bucket b) { return kBucketNames[static_cast<std::size_t>(b)]; }

const std::vector<std::string>& FeatureNames() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (StateKind k : kStateKinds)
      for (auto b : kBucketNames) n.push_back(std::string(mgct::ToString(k)) + "/" + std::string(b));
    return n;
  }();
  return names;
}

std::size_t FeatureIndex(StateKind kind, Bucket bucket) {
  return KindIndex(kind) * kBucketCount + static_cast<std::size_t>(bucket);
}

std::string_view ToString(Label l) { return l == Label::kGrounded ? "grounded" : "ungrounded"; }

Label LabelFromString(std::string_view s) {
  if (s == "grounded" || s == "1") return Label::kGrounded;
  if (s == "ungrounded" || s == "0") return Label::kUngrounded;
  Fail(ErrorKind::kData, "unknown label '" + std::string(s) + "'");
}

std::map<std::size_t, Bucket> BucketAssign(const TokenSequence& seq) {
  const std::size_t n = seq.ids.size();
  Check(seq.subject.begin < seq.subject.end && seq.subject.end <= n, ErrorKind::kInvalidArgument,
        "subject span out of range");
  Check(seq.subject.end < n, ErrorKind::kInvalidArgument,
        "subject span ends the sequence; no continuation tokens to bucket");
  std::map<std::size_t, Bucket> out;
  AssignRun(seq.subject.begin, seq.subject.end, Bucket::kSubjFirst, Bucket::kSubjMiddle,
            Bucket::kSubjLast, out);
  AssignRun(seq.subject.end, n, Bucket::kContFirst, Bucket::kContMiddle, Bucket::kContLast, out);
  return out;
}

InstanceEffects BucketMeans(const tracing::InstanceTrace& trace) {
  const auto buckets = BucketAssign(trace.tokens);
  const std::size_t start = trace.result.restore_start;
  InstanceEffects out;
  out.p_clean = trace.result.p_clean;
  out.p_corrupt = trace.result.p_corrupt;
  out.degenerate = trace.result.degenerate;

  std::array<bool, kBucketCount> present{};
  for (const auto& [pos, b] : buckets) present[static_cast<std::size_t>(b)] = true;
  for (std::size_t b = 0; b < kBucketCount; ++b) out.missing[b] = !present[b];

  for (StateKind kind : kStateKinds) {
    const auto col = trace.column_effect(kind);
    Check(col.size() == trace.result.n_restorable, ErrorKind::kInvalidArgument,
          "instance lacks the " + std::string(mgct::ToString(kind)) + " column family");
    std::array<std::vector<double>, kBucketCount> per_bucket;
    for (const auto& [pos, b] : buckets) {
      Check(pos >= start, ErrorKind::kInvalidArgument, "bucketed position precedes restorable span");
      per_bucket[static_cast<std::size_t>(b)].push_back(col[pos - start]);
    }
    for (std::size_t b = 0; b < kBucketCount; ++b)
      out.effects[KindIndex(kind) * kBucketCount + b] =
          per_bucket[b].empty() || out.degenerate ? 0.0 : stats::Mean(per_bucket[b]);
  }
  return out;
}

FeatureVector BuildFeatures(const tracing::InstanceTrace& trace, std::string id, Label label) {
  return {std::move(id), BucketMeans(trace), label};
}

BucketedEffects AggregateGroup(std::span<const InstanceEffects> instances, Label label) {
  Check(!instances.empty(), ErrorKind::kInvalidArgument, "cannot aggregate an empty group");
  BucketedEffects out;
  out.label = label;
  for (const auto& inst : instances) {
    if (inst.degenerate) {
      ++out.excluded;
      continue;
    }
    ++out.instances;
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      if (!inst.missing[f % kBucketCount]) out.cells[f].values.push_back(inst.effects[f]);
  }
  for (auto& cell : out.cells) {
    cell.count = cell.values.size();
    cell.mean = cell.values.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : stats::Mean(cell.values);
  }
  return out;
}

AggregateReport Compare(std::span<const FeatureVector> features, double alpha) {
  std::vector<InstanceEffects> g, u;
  for (const auto& f : features) (f.label == Label::kGrounded ? g : u).push_back(f.values);
  Check(!g.empty() && !u.empty(), ErrorKind::kData,
        "comparison needs both grounded and ungrounded instances");
  AggregateReport r;
  r.alpha = alpha;
  r.grounded = AggregateGroup(g, Label::kGrounded);
  r.ungrounded = AggregateGroup(u, Label::kUngrounded);
  for (StateKind kind : kStateKinds) {
    for (std::size_t b = 0; b < kBucketCount; ++b) {
      const std::size_t f = FeatureIndex(kind, static_cast<Bucket>(b));
      CellComparison c;
      c.feature = FeatureNames()[f];
      c.kind = kind;
      c.bucket = static_cast<Bucket>(b);
      c.mean_grounded = r.grounded.cells[f].mean;
      c.mean_ungrounded = r.ungrounded.cells[f].mean;
      c.n_grounded = r.grounded.cells[f].count;
      c.n_ungrounded = r.ungrounded.cells[f].count;
      if (c.n_grounded >= 2 && c.n_ungrounded >= 2)
        c.test = stats::WelchTTest(r.grounded.cells[f].values, r.ungrounded.cells[f].values, alpha);
      r.cells.push_back(std::move(c));
    }
  }
  return r;
}

namespace {

nlohmann::json Num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
double NumOr(const nlohmann::json& j, double fallback) {
  return j.is_null() ? fallback : j.get<double>();
}

nlohmann::json GroupJson(const BucketedEffects& g) {
  nlohmann::json cells = nlohmann::json::object();
  for (std::size_t f = 0; f < kFeatureCount; ++f)
    cells[FeatureNames()[f]] = {{"mean", Num(g.cells[f].mean)},
                                {"count", g.cells[f].count},
                                {"values", g.cells[f].values}};
  return {{"label", ToString(g.label)},
          {"instances", g.instances},
          {"excluded_degenerate", g.excluded},
          {"cells", cells}};
}

BucketedEffects GroupFromJson(const nlohmann::json& j) {
  BucketedEffects g;
  g.label = LabelFromString(j.at("label").get<std::string>());
  g.instances = j.at("instances");
  g.excluded = j.at("excluded_degenerate");
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    const auto& c = j.at("cells").at(FeatureNames()[f]);
    g.cells[f].mean = NumOr(c.at("mean"), std::numeric_limits<double>::quiet_NaN());
    g.cells[f].count = c.at("count");
    g.cells[f].values = c.at("values").get<std::vector<double>>();
  }
  return g;
}

}  // namespace

nlohmann::json ToJson(const AggregateReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json cj = {{"feature", c.feature},
                         {"state", mgct::ToString(c.kind)},
                         {"bucket", ToString(c.bucket)},
                         {"mean_grounded", Num(c.mean_grounded)},
                         {"mean_ungrounded", Num(c.mean_ungrounded)},
                         {"n_grounded", c.n_grounded},
                         {"n_ungrounded", c.n_ungrounded}};
    if (c.test) {
      cj["t"] = Num(c.test->t);
      cj["df"] = Num(c.test->df);
      cj["p_value"] = c.test->p_value;
      cj["significant"] = c.test->significant;
    }
    cells.push_back(std::move(cj));
  }
  return {{"test", "welch"},
          {"alpha", r.alpha},
          {"grounded", GroupJson(r.grounded)},
          {"ungrounded", GroupJson(r.ungrounded)},
          {"cells", cells}};
}

AggregateReport ReportFromJson(const nlohmann::json& j) {
  AggregateReport r;
  try {
    r.alpha = j.at("alpha");
    r.grounded = GroupFromJson(j.at("grounded"));
    r.ungrounded = GroupFromJson(j.at("ungrounded"));
    for (const auto& cj : j.at("cells")) {
      CellComparison c;
      c.feature = cj.at("feature");
      c.kind = StateKindFromString(cj.at("state").get<std::string>());
      const auto bname = cj.at("bucket").get<std::string>();
      for (std::size_t b = 0; b < kBucketCount; ++b)
        if (kBucketNames[b] == bname) c.bucket = static_cast<Bucket>(b);
      c.mean_grounded = NumOr(cj.at("mean_grounded"), std::numeric_limits<double>::quiet_NaN());
      c.mean_ungrounded = NumOr(cj.at("mean_ungrounded"), std::numeric_limits<double>::quiet_NaN());
      c.n_grounded = cj.at("n_grounded");
      c.n_ungrounded = cj.at("n_ungrounded");
      if (cj.contains("p_value")) {
        stats::WelchResult w;
        w.t = NumOr(cj.at("t"), 0.0);
        w.df = NumOr(cj.at("df"), 0.0);
        w.p_value = cj.at("p_value");
        w.significant = cj.at("significant");
        c.test = w;
      }
      r.cells.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed aggregate report: ") + e.what());
  }
  return r;
}

void WriteHeatmapCsv(std::ostream& out, const AggregateReport& r) {
  out << "state,bucket,mean_grounded,mean_ungrounded,n_grounded,n_ungrounded,t,p_value,significant\n";
  for (const auto& c : r.cells) {
    out << mgct::ToString(c.kind) << ',' << ToString(c.bucket) << ','
        << io::FormatDouble(c.mean_grounded) << ',' << io::FormatDouble(c.mean_ungrounded) << ','
        << c.n_grounded << ',' << c.n_ungrounded << ',';
    if (c.test)
      out << io::FormatDouble(c.test->t) << ',' << io::FormatDouble(c.test->p_value) << ','
          << (c.test->significant ? 1 : 0);
    else
      out << ",,0";
    out << '\n';
  }
}

std::vector<std::string> CsvHeader() {
  std::vector<std::string> h{"id"};
  for (const auto& n : FeatureNames()) h.push_back(n);
  h.push_back("p_clean");
  h.push_back("p_corrupt");
  for (auto b : kBucketNames) h.push_back("missing/" + std::string(b));
  h.push_back("label");
  return h;
}

void WriteFeatureCsv(std::ostream& out, std::span<const FeatureVector> rows) {
  const auto header = CsvHeader();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    Check(r.id.find_first_of(",\"\n") == std::string::npos, ErrorKind::kData,
          "feature row id must not contain commas, quotes or newlines");
    out << r.id;
    for (double v : r.values.effects) out << ',' << io::FormatDouble(v);
    out << ',' << io::FormatDouble(r.values.p_clean) << ',' << io::FormatDouble(r.values.p_corrupt);
    for (bool m : r.values.missing) out << ',' << (m ? 1 : 0);
    out << ',' << ToString(r.label) << '\n';
  }
}

std::vector<FeatureVector> ReadFeatureCsv(std::istream& in) {
  std::string line;
  Check(static_cast<bool>(std::getline(in, line)), ErrorKind::kData, "feature CSV is empty");
  const auto header = io::SplitCsvLine(line);
  Check(header == CsvHeader(), ErrorKind::kData, "feature CSV header does not match the canonical layout");
  std::vector<FeatureVector> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = io::SplitCsvLine(line);
    Check(cells.size() == header.size(), ErrorKind::kData, "feature CSV row has wrong arity");
    FeatureVector fv;
    fv.id = cells[0];
    for (std::size_t f = 0; f < kFeatureCount; ++f) fv.values.effects[f] = io::ParseDouble(cells[1 + f]);
    fv.values.p_clean = io::ParseDouble(cells[1 + kFeatureCount]);
    fv.values.p_corrupt = io::ParseDouble(cells[2 + kFeatureCount]);
    for (std::size_t b = 0; b < kBucketCount; ++b)
      fv.values.missing[b] = cells[3 + kFeatureCount + b] == "1";
    fv.label = LabelFromString(cells.back());
    rows.push_back(std::move(fv));
  }
  return rows;
}

}  // namespace mgct::aggregate
