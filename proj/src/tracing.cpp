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

#include "mgct/tracing.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "mgct/error.hpp"

namespace mgct::tracing {

FilterMask::FilterMask(StateKind kind, std::size_t n_layers, std::size_t n_cols, std::string label)
    : kind_(kind),
      n_layers_(n_layers),
      n_cols_(n_cols),
      bits_(n_layers * n_cols, 0),
      label_(std::move(label)) {
  Check(n_layers >= 1 && n_cols >= 1, ErrorKind::kInvalidArgument,
        "filter mask needs non-zero dimensions");
}

FilterMask FilterMask::Null(StateKind kind, std::size_t n_layers, std::size_t n_cols) {
  return FilterMask(kind, n_layers, n_cols, std::string(ToString(kind)) + ":null");
}

FilterMask FilterMask::Full(StateKind kind, std::size_t n_layers, std::size_t n_cols) {
  FilterMask m(kind, n_layers, n_cols, std::string(ToString(kind)) + ":all");
  std::fill(m.bits_.begin(), m.bits_.end(), 1);
  return m;
}

std::size_t FilterMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::vector<FilterMask> ColumnFilters(std::size_t n_layers, std::size_t n_cols, StateKind kind) {
  Check(n_layers >= 1 && n_cols >= 1, ErrorKind::kInvalidArgument,
        "column filters need L >= 1 and K_r >= 1");
  std::vector<FilterMask> out;
  out.reserve(n_cols);
  for (std::size_t j = 0; j < n_cols; ++j) {
    FilterMask m(kind, n_layers, n_cols, std::string(ToString(kind)) + ":col=" + std::to_string(j));
    for (std::size_t r = 0; r < n_layers; ++r) m.set(r, j);
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

std::vector<std::size_t> PatchStarts(std::size_t extent, std::size_t size, std::size_t stride) {
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s < extent; s += stride) {
    starts.push_back(s);
    if (s + size >= extent) break;
  }
  return starts;
}

}  // namespace

std::vector<FilterMask> PatchFilters(std::size_t n_layers, std::size_t n_cols, PatchShape p,
                                     StateKind kind) {
  Check(n_layers >= 1 && n_cols >= 1, ErrorKind::kInvalidArgument,
        "patch filters need L >= 1 and K_r >= 1");
  Check(p.rows >= 1 && p.cols >= 1 && p.stride_rows >= 1 && p.stride_cols >= 1,
        ErrorKind::kInvalidArgument, "patch size and strides must be >= 1");
  Check(p.rows <= n_layers && p.cols <= n_cols, ErrorKind::kInvalidArgument,
        "patch " + std::to_string(p.rows) + "x" + std::to_string(p.cols) +
            " is larger than the " + std::to_string(n_layers) + "x" + std::to_string(n_cols) +
            " grid");
  std::vector<FilterMask> out;
  for (std::size_t r0 : PatchStarts(n_layers, p.rows, p.stride_rows)) {
    for (std::size_t c0 : PatchStarts(n_cols, p.cols, p.stride_cols)) {
      FilterMask m(kind, n_layers, n_cols,
                   std::string(ToString(kind)) + ":patch=" + std::to_string(r0) + "," +
                       std::to_string(c0));
      for (std::size_t r = r0; r < std::min(n_layers, r0 + p.rows); ++r)
        for (std::size_t c = c0; c < std::min(n_cols, c0 + p.cols); ++c) m.set(r, c);
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<FilterMask> SingleStateFilters(std::size_t n_layers, std::size_t n_cols,
                                           StateKind kind) {
  return PatchFilters(n_layers, n_cols, PatchShape{}, kind);
}

CorruptionSpec CorruptionSpec::FromSpan(TokenSpan span, TokenId replacement) {
  CorruptionSpec spec;
  spec.replacement = replacement;
  for (std::size_t k = span.begin; k < span.end; ++k) spec.positions.push_back(k);
  return spec;
}

void CorruptionSpec::Validate(std::size_t n_tokens) const {
  Check(!positions.empty(), ErrorKind::kInvalidArgument, "corruption span is empty");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    Check(positions[i] < n_tokens, ErrorKind::kInvalidArgument,
          "corruption position outside sequence");
    Check(i == 0 || positions[i] == positions[i - 1] + 1, ErrorKind::kInvalidArgument,
          "corruption positions must be contiguous and ascending");
  }
}

double NormalizedEffect(double p_clean, double p_corrupt, double p_restored, double floor) {
  const double denom = p_clean - p_corrupt;
  if (std::abs(denom) < floor)
    Fail(ErrorKind::kDegenerate, "degenerate denominator |P(o) - P*(o)| = " +
                                     std::to_string(std::abs(denom)));
  return (p_restored - p_corrupt) / denom;
}

InterventionPlan PlanFor(const FilterMask& mask, const CorruptionSpec& spec,
                         const TraceRecord& clean) {
  InterventionPlan plan;
  for (std::size_t k : spec.positions) plan.corruption[k] = spec.replacement;
  const std::size_t start = spec.first();
  for (std::size_t r = 0; r < mask.n_layers(); ++r) {
    for (std::size_t j = 0; j < mask.n_cols(); ++j) {
      if (!mask.at(r, j)) continue;
      const std::size_t layer = r + 1, token = start + j;
      const auto v = clean.state(mask.kind(), layer, token);
      plan.restorations.push_back({mask.kind(), layer, token, {v.begin(), v.end()}});
    }
  }
  return plan;
}

MediationResult RunMediation(const Model& model, const TokenSequence& tokens,
                             const CorruptionSpec& spec, std::span<const FilterMask> filters,
                             std::optional<TokenId> answer, const MediationOptions& options) {
  const ModelConfig& c = model.config();
  tokens.Validate(c);
  spec.Validate(tokens.ids.size());
  Check(spec.replacement >= 0 && static_cast<std::size_t>(spec.replacement) < c.vocab_size,
        ErrorKind::kInvalidArgument, "corruption token out of vocabulary");

  MediationResult res;
  res.restore_start = spec.first();
  res.n_restorable = tokens.ids.size() - res.restore_start;
  for (const auto& f : filters)
    Check(f.n_layers() == c.n_layers && f.n_cols() == res.n_restorable,
          ErrorKind::kInvalidArgument,
          "filter '" + f.label() + "' is " + std::to_string(f.n_layers()) + "x" +
              std::to_string(f.n_cols()) + ", expected " + std::to_string(c.n_layers) + "x" +
              std::to_string(res.n_restorable));

  std::atomic<std::uint64_t> passes{0};
  const TraceRecord clean = model.ForwardRecorded(tokens.ids);
  ++passes;
  res.answer_token = answer.value_or(clean.argmax());
  Check(res.answer_token >= 0 && static_cast<std::size_t>(res.answer_token) < c.vocab_size,
        ErrorKind::kInvalidArgument, "answer token out of vocabulary");
  const auto o = static_cast<std::size_t>(res.answer_token);
  res.p_clean = clean.output_distribution()[o];

  InterventionPlan corrupt_plan;
  for (std::size_t k : spec.positions) corrupt_plan.corruption[k] = spec.replacement;
  res.p_corrupt = model.NextTokenDistribution(tokens.ids, &corrupt_plan)[o];
  ++passes;
  res.degenerate = std::abs(res.p_clean - res.p_corrupt) < options.denominator_floor;

  res.outcomes.resize(filters.size());
  const auto n = static_cast<std::ptrdiff_t>(filters.size());
#pragma omp parallel for schedule(dynamic) if (options.parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const FilterMask& f = filters[static_cast<std::size_t>(i)];
    MediationOutcome& out = res.outcomes[static_cast<std::size_t>(i)];
    const InterventionPlan plan = PlanFor(f, spec, clean);
    out.p_restored = model.NextTokenDistribution(tokens.ids, &plan)[o];
    ++passes;
    out.p_clean = res.p_clean;
    out.p_corrupt = res.p_corrupt;
    out.filter_label = f.label();
    out.kind = f.kind();
    out.answer_token = res.answer_token;
    out.degenerate = res.degenerate;
    out.effect = res.degenerate
                     ? std::numeric_limits<double>::quiet_NaN()
                     : (out.p_restored - out.p_corrupt) / (out.p_clean - out.p_corrupt);
  }
  res.forward_passes = passes.load();
  return res;
}

double RestoreSingleState(const Model& model, std::span<const TokenId> ids,
                          const CorruptionSpec& spec, const TraceRecord& clean, StateKind kind,
                          std::size_t layer, std::size_t token, TokenId answer) {
  InterventionPlan plan;
  for (std::size_t k : spec.positions) plan.corruption[k] = spec.replacement;
  const auto v = clean.state(kind, layer, token);
  plan.restorations.push_back({kind, layer, token, {v.begin(), v.end()}});
  return model.NextTokenDistribution(ids, &plan)[static_cast<std::size_t>(answer)];
}

std::vector<double> InstanceTrace::column_effect(StateKind kind) const {
  std::vector<double> out;
  for (const auto& o : result.outcomes)
    if (o.kind == kind) out.push_back(o.effect);
  return out;
}

InstanceTrace TraceColumns(const Model& model, const TokenSequence& tokens, TokenId corruption_token,
                           std::span<const StateKind> kinds, std::optional<TokenId> answer,
                           const MediationOptions& options) {
  const CorruptionSpec spec = CorruptionSpec::FromSpan(tokens.subject, corruption_token);
  const std::size_t kr = tokens.ids.size() - tokens.subject.begin;
  std::vector<FilterMask> filters;
  for (StateKind k : kinds) {
    auto fam = ColumnFilters(model.config().n_layers, kr, k);
    std::move(fam.begin(), fam.end(), std::back_inserter(filters));
  }
  InstanceTrace t;
  t.tokens = tokens;
  t.result = RunMediation(model, tokens, spec, filters, answer, options);
  return t;
}

}  // namespace mgct::tracing
