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

#include "doctest.h"
#include "fixtures.hpp"
#include "mgct/error.hpp"
#include "mgct/tracing.hpp"
#include "oracle_forward.hpp"

using namespace mgct;
using namespace mgct::tracing;

TEST_CASE("column filters") {
  const auto f = ColumnFilters(48, 10, StateKind::kHidden);
  REQUIRE(f.size() == 10);
  for (std::size_t j = 0; j < 10; ++j) {
    CHECK(f[j].count() == 48);
    for (std::size_t r = 0; r < 48; ++r) CHECK(f[j].at(r, j));
    CHECK(f[j].label() == "hidden:col=" + std::to_string(j));
  }
  // Covering the grid takes K_r runs instead of L*K_r.
  CHECK(SingleStateFilters(48, 10, StateKind::kHidden).size() / f.size() == 48);
  CHECK(SingleStateFilters(32, 10, StateKind::kMlp).size() /
            ColumnFilters(32, 10, StateKind::kMlp).size() ==
        32);
  CHECK_THROWS_AS(ColumnFilters(0, 3, StateKind::kAttn), Error);
  CHECK_THROWS_AS(ColumnFilters(3, 0, StateKind::kAttn), Error);
}

TEST_CASE("patch filters tile the grid") {
  const auto f = PatchFilters(4, 4, {2, 2, 2, 2}, StateKind::kHidden);
  REQUIRE(f.size() == 4);
  std::vector<int> cover(16, 0);
  for (const auto& m : f) {
    CHECK(m.count() == 4);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) cover[r * 4 + c] += m.at(r, c);
  }
  for (int c : cover) CHECK(c == 1);

  for (std::size_t L : {3ul, 5ul, 8ul})
    for (std::size_t K : {1ul, 4ul, 7ul})
      for (std::size_t m : {1ul, 2ul, 3ul})
        for (std::size_t n : {1ul, 2ul}) {
          if (m > L || n > K) continue;
          const auto p = PatchFilters(L, K, {m, n, m, n}, StateKind::kAttn);
          CHECK(p.size() == ((L + m - 1) / m) * ((K + n - 1) / n));
          std::size_t total = 0;
          for (const auto& mask : p) total += mask.count();
          CHECK(total == L * K);
        }
  // Non-overlapping MxM patches reduce the run count by M^2 on divisible grids.
  CHECK(SingleStateFilters(6, 6, StateKind::kMlp).size() /
            PatchFilters(6, 6, {3, 3, 3, 3}, StateKind::kMlp).size() ==
        9);
  // Overlapping placement with stride 1.
  CHECK(PatchFilters(4, 4, {2, 2, 1, 1}, StateKind::kHidden).size() == 9);
  CHECK_THROWS_AS(PatchFilters(2, 4, {3, 1, 1, 1}, StateKind::kHidden), Error);
  CHECK_THROWS_AS(PatchFilters(4, 4, {1, 1, 0, 1}, StateKind::kHidden), Error);
}

TEST_CASE("single-state filters") {
  const auto f = SingleStateFilters(2, 3, StateKind::kHidden);
  REQUIRE(f.size() == 6);
  std::vector<int> cover(6, 0);
  for (const auto& m : f) {
    CHECK(m.count() == 1);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 3; ++c) cover[r * 3 + c] += m.at(r, c);
  }
  for (int c : cover) CHECK(c == 1);
}

TEST_CASE("normalized effect") {
  CHECK(NormalizedEffect(0.8, 0.1, 0.8) == doctest::Approx(1.0));
  CHECK(NormalizedEffect(0.8, 0.1, 0.1) == doctest::Approx(0.0));
  CHECK(NormalizedEffect(0.5, 0.1, 0.9) == doctest::Approx(2.0));
  try {
    NormalizedEffect(0.3, 0.3 + 5e-7, 0.1);
    FAIL("expected degenerate error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerate);
  }
}

TEST_CASE("corruption spec validation") {
  CorruptionSpec s;
  s.replacement = 1;
  CHECK_THROWS_AS(s.Validate(5), Error);
  s.positions = {1, 3};
  CHECK_THROWS_AS(s.Validate(5), Error);
  s.positions = {4, 5};
  CHECK_THROWS_AS(s.Validate(5), Error);
  s.positions = {2, 3};
  CHECK_NOTHROW(s.Validate(5));
}

TEST_CASE("run_mediation identities") {
  auto toy = testing::MakeToy(41);
  TokenSequence seq{{4, 11, 6, 9, 2, 15}, {1, 3}};
  const auto spec = CorruptionSpec::FromSpan(seq.subject, toy.eos());
  const std::size_t L = 2, kr = 5;
  std::vector<FilterMask> filters{FilterMask::Null(StateKind::kHidden, L, kr),
                                  FilterMask::Full(StateKind::kHidden, L, kr)};
  const auto calls_before = toy.model->forward_calls();
  const auto res = RunMediation(*toy.model, seq, spec, filters);
  CHECK(toy.model->forward_calls() - calls_before == 4);
  CHECK(res.forward_passes == 4);
  REQUIRE_FALSE(res.degenerate);
  CHECK(res.outcomes[0].p_restored == res.p_corrupt);
  CHECK(res.outcomes[0].effect == 0.0);
  CHECK(std::abs(res.outcomes[1].p_restored - res.p_clean) <= 1e-5);
  CHECK(std::abs(res.outcomes[1].effect - 1.0) <= 1e-4);
  CHECK(res.answer_token == toy.model->ForwardRecorded(seq.ids).argmax());

  SUBCASE("dimension mismatch") {
    std::vector<FilterMask> bad{FilterMask::Null(StateKind::kHidden, L, kr + 1)};
    CHECK_THROWS_AS(RunMediation(*toy.model, seq, spec, bad), Error);
  }
  SUBCASE("empty corruption") {
    CorruptionSpec empty;
    CHECK_THROWS_AS(RunMediation(*toy.model, seq, empty, filters), Error);
  }
  SUBCASE("answer override") {
    const auto r2 = RunMediation(*toy.model, seq, spec, filters, TokenId{3});
    CHECK(r2.answer_token == 3);
    CHECK(r2.p_clean == toy.model->ForwardRecorded(seq.ids).output_distribution()[3]);
  }
}

TEST_CASE("degenerate instances are flagged, not clamped") {
  auto toy = testing::MakeToy(41);
  // Corrupting with the token already present leaves P(o) unchanged.
  TokenSequence seq{{4, 11, 6, 9, 2, 15}, {1, 2}};
  const auto spec = CorruptionSpec::FromSpan(seq.subject, 11);
  const auto filters = ColumnFilters(2, 5, StateKind::kMlp);
  const auto res = RunMediation(*toy.model, seq, spec, filters);
  CHECK(res.degenerate);
  for (const auto& o : res.outcomes) {
    CHECK(o.degenerate);
    CHECK(std::isnan(o.effect));
  }
}

TEST_CASE("column and patch effects match brute-force injection") {
  auto toy = testing::MakeToy(43);
  TokenSequence seq{{7, 3, 18, 12, 5, 1, 9, 22}, {2, 4}};
  const auto spec = CorruptionSpec::FromSpan(seq.subject, toy.eos());
  const auto clean_ref = oracle::Forward(toy.weights, toy.config, seq.ids);
  std::map<std::size_t, TokenId> corruption{{2, toy.eos()}, {3, toy.eos()}};
  const auto corrupt_ref = oracle::Forward(toy.weights, toy.config, seq.ids, corruption);

  for (StateKind kind : {StateKind::kHidden, StateKind::kAttn, StateKind::kMlp}) {
    std::vector<FilterMask> filters = ColumnFilters(2, 6, kind);
    auto patches = PatchFilters(2, 6, {2, 2, 2, 2}, kind);
    filters.insert(filters.end(), patches.begin(), patches.end());
    const auto res = RunMediation(*toy.model, seq, spec, filters);
    const auto o = static_cast<std::size_t>(res.answer_token);
    const double pc = clean_ref.probs[o], pk = corrupt_ref.probs[o];
    CHECK(std::abs(res.p_clean - pc) <= 1e-6);
    CHECK(std::abs(res.p_corrupt - pk) <= 1e-6);
    for (std::size_t i = 0; i < filters.size(); ++i) {
      std::vector<oracle::Injection> inj;
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t j = 0; j < 6; ++j) {
          if (!filters[i].at(r, j)) continue;
          const std::size_t l = r + 1, k = 2 + j;
          const auto& src = kind == StateKind::kHidden ? clean_ref.hidden[l][k]
                            : kind == StateKind::kAttn ? clean_ref.attn[l - 1][k]
                                                       : clean_ref.mlp[l - 1][k];
          inj.push_back({kind, l, k, src});
        }
      const double pr = oracle::Forward(toy.weights, toy.config, seq.ids, corruption, inj).probs[o];
      CHECK(std::abs(res.outcomes[i].effect - (pr - pk) / (pc - pk)) <= 1e-6);
    }
  }
}

TEST_CASE("single-state masks equal classic causal tracing exactly") {
  auto toy = testing::MakeToy(47);
  TokenSequence seq{{7, 3, 18, 12, 5, 1}, {1, 3}};
  const auto spec = CorruptionSpec::FromSpan(seq.subject, toy.eos());
  const auto clean = toy.model->ForwardRecorded(seq.ids);
  for (StateKind kind : {StateKind::kHidden, StateKind::kAttn, StateKind::kMlp}) {
    const auto filters = SingleStateFilters(2, 5, kind);
    const auto res = RunMediation(*toy.model, seq, spec, filters);
    CHECK(res.forward_passes == 2 + 10);
    for (std::size_t i = 0; i < filters.size(); ++i) {
      std::size_t row = 0, col = 0;
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 5; ++c)
          if (filters[i].at(r, c)) row = r, col = c;
      CHECK(res.outcomes[i].p_restored == RestoreSingleState(*toy.model, seq.ids, spec, clean, kind,
                                                             row + 1, 1 + col, res.answer_token));
    }
  }
}

TEST_CASE("last hidden column reproduces forward_intervened bit for bit") {
  auto toy = testing::MakeToy(53);
  TokenSequence seq{{7, 3, 18, 12, 5, 1}, {1, 3}};
  const auto spec = CorruptionSpec::FromSpan(seq.subject, toy.eos());
  const auto cols = ColumnFilters(2, 5, StateKind::kHidden);
  const auto res = RunMediation(*toy.model, seq, spec, cols);
  const auto clean = toy.model->ForwardRecorded(seq.ids);
  const auto plan = PlanFor(cols.back(), spec, clean);
  const auto rec = toy.model->ForwardIntervened(seq.ids, plan);
  CHECK(res.outcomes.back().p_restored ==
        rec.output_distribution()[static_cast<std::size_t>(res.answer_token)]);
}

TEST_CASE("parallel and serial mediation agree; no filter addresses pre-subject tokens") {
  auto toy = testing::MakeToy(59);
  TokenSequence seq{{7, 3, 18, 12, 5, 1, 2}, {2, 4}};
  const StateKind kinds[] = {StateKind::kHidden, StateKind::kAttn, StateKind::kMlp};
  const auto par = TraceColumns(*toy.model, seq, toy.eos(), kinds);
  const auto ser = TraceColumns(*toy.model, seq, toy.eos(), kinds, std::nullopt, {false});
  REQUIRE(par.result.outcomes.size() == 15);
  CHECK(par.result.forward_passes == 17);
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(par.result.outcomes[i].p_restored == ser.result.outcomes[i].p_restored);
    CHECK(par.result.outcomes[i].filter_label == ser.result.outcomes[i].filter_label);
  }
  CHECK(par.column_effect(StateKind::kMlp).size() == 5);

  const auto clean = toy.model->ForwardRecorded(seq.ids);
  const auto spec = CorruptionSpec::FromSpan(seq.subject, toy.eos());
  for (const auto& f : ColumnFilters(2, 5, StateKind::kAttn))
    for (const auto& r : PlanFor(f, spec, clean).restorations) CHECK(r.token >= 2);
}
