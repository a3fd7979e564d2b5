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

#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "fixtures.hpp"
#include "mgct/aggregate.hpp"
#include "mgct/error.hpp"
#include "mgct/stats.hpp"
#include "t_oracle.hpp"

using namespace mgct;
using namespace mgct::aggregate;

TEST_CASE("bucket_assign examples") {
  TokenSequence s{std::vector<TokenId>(10, 1), {3, 6}};
  const auto b = BucketAssign(s);
  CHECK(b.size() == 7);
  CHECK(b.at(3) == Bucket::kSubjFirst);
  CHECK(b.at(4) == Bucket::kSubjMiddle);
  CHECK(b.at(5) == Bucket::kSubjLast);
  CHECK(b.at(6) == Bucket::kContFirst);
  CHECK(b.at(7) == Bucket::kContMiddle);
  CHECK(b.at(8) == Bucket::kContMiddle);
  CHECK(b.at(9) == Bucket::kContLast);

  const auto single = BucketAssign({std::vector<TokenId>(5, 1), {2, 3}});
  CHECK(single.at(2) == Bucket::kSubjFirst);
  for (const auto& [p, bucket] : single) {
    CHECK(bucket != Bucket::kSubjMiddle);
    CHECK(bucket != Bucket::kSubjLast);
  }
  const auto two_cont = BucketAssign({std::vector<TokenId>(5, 1), {0, 3}});
  CHECK(two_cont.at(3) == Bucket::kContFirst);
  CHECK(two_cont.at(4) == Bucket::kContLast);

  CHECK_THROWS_AS(BucketAssign({std::vector<TokenId>(5, 1), {2, 5}}), Error);
}

TEST_CASE("bucket_assign is a partition of the restorable span") {
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = 2 + rng.Below(40);
    const std::size_t begin = rng.Below(n - 1);
    const std::size_t end = begin + 1 + rng.Below(n - 1 - begin);
    const auto b = BucketAssign({std::vector<TokenId>(n, 0), {begin, end}});
    REQUIRE(b.size() == n - begin);
    REQUIRE(b.begin()->first == begin);
    REQUIRE(b.rbegin()->first == n - 1);
  }
}

TEST_CASE("pairwise sum and moments") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  CHECK(stats::PairwiseSum(v) == 499500.0);
  CHECK(stats::Mean(v) == doctest::Approx(499.5));
  CHECK(stats::Variance(std::vector<double>{1, 2, 3, 4}) == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("welch t-test") {
  const std::vector<double> a{0.3, 0.1, 0.4, 0.15, 0.9};
  auto same = stats::WelchTTest(a, a);
  CHECK(same.p_value == 1.0);
  CHECK_FALSE(same.significant);
  const std::vector<double> c{2, 2, 2};
  CHECK(stats::WelchTTest(c, c).p_value == 1.0);

  const std::vector<double> zeros{0.0, 1e-4, -1e-4, 2e-4}, ones{1.0, 1.0001, 0.9999, 1.0002};
  const auto sep = stats::WelchTTest(zeros, ones);
  CHECK(sep.p_value < 0.01);
  CHECK(sep.significant);
  CHECK(stats::WelchTTest(ones, zeros).p_value == sep.p_value);

  CHECK_THROWS_AS(stats::WelchTTest(std::vector<double>{1.0}, a), Error);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(2 + rng.Below(30)), y(2 + rng.Below(30));
    const double sx = 0.1 + 2 * rng.Uniform(), sy = 0.1 + 2 * rng.Uniform(), shift = rng.Normal();
    for (double& v : x) v = sx * rng.Normal();
    for (double& v : y) v = shift + sy * rng.Normal();
    const auto w = stats::WelchTTest(x, y);
    const auto ref = testing::NaiveWelchStat(x, y);
    CHECK(w.t == doctest::Approx(ref.t).epsilon(1e-12));
    CHECK(w.df == doctest::Approx(ref.df).epsilon(1e-12));
    CHECK(std::abs(w.p_value - testing::TwoSidedPByQuadrature(ref.t, ref.df)) <= 1e-6);
  }
}

namespace {

tracing::InstanceTrace FakeTrace(std::size_t n, TokenSpan subject, double value, bool degenerate = false) {
  tracing::InstanceTrace t;
  t.tokens.ids.assign(n, 1);
  t.tokens.subject = subject;
  t.result.restore_start = subject.begin;
  t.result.n_restorable = n - subject.begin;
  t.result.p_clean = 0.7;
  t.result.p_corrupt = 0.2;
  t.result.degenerate = degenerate;
  for (StateKind k : kStateKinds)
    for (std::size_t j = 0; j < t.result.n_restorable; ++j) {
      tracing::MediationOutcome o;
      o.kind = k;
      o.effect = value * static_cast<double>(j + 1) * (k == StateKind::kMlp ? 2.0 : 1.0);
      t.result.outcomes.push_back(o);
    }
  return t;
}

}  // namespace

TEST_CASE("build_features") {
  const auto zero = BuildFeatures(FakeTrace(6, {1, 3}, 0.0), "z", Label::kGrounded);
  for (double v : zero.values.effects) CHECK(v == 0.0);

  // subject [1,3): subj-first=1, subj-last=2, no subj-middle; cont 3..5.
  const auto fv = BuildFeatures(FakeTrace(6, {1, 3}, 0.1), "x", Label::kUngrounded);
  CHECK(fv.values.missing[static_cast<std::size_t>(Bucket::kSubjMiddle)]);
  CHECK(fv.values.effects[FeatureIndex(StateKind::kHidden, Bucket::kSubjMiddle)] == 0.0);
  CHECK(fv.values.effects[FeatureIndex(StateKind::kHidden, Bucket::kSubjFirst)] == doctest::Approx(0.1));
  CHECK(fv.values.effects[FeatureIndex(StateKind::kMlp, Bucket::kSubjLast)] == doctest::Approx(0.4));
  CHECK(fv.values.effects[FeatureIndex(StateKind::kAttn, Bucket::kContMiddle)] == doctest::Approx(0.4));
  CHECK(FeatureNames().size() == 18);
  CHECK(FeatureNames()[0] == "hidden/subj-first");
  CHECK(FeatureNames()[14] == "mlp/subj-last");

  auto missing_family = FakeTrace(6, {1, 3}, 0.1);
  std::erase_if(missing_family.result.outcomes,
                [](const auto& o) { return o.kind == StateKind::kAttn; });
  CHECK_THROWS_AS(BuildFeatures(missing_family, "m", Label::kGrounded), Error);
}

TEST_CASE("aggregate_group") {
  const auto a = BucketMeans(FakeTrace(8, {2, 5}, 0.2));
  std::vector<InstanceEffects> same{a, a};
  const auto g = AggregateGroup(same, Label::kGrounded);
  for (std::size_t f = 0; f < kFeatureCount; ++f) CHECK(g.cells[f].mean == a.effects[f]);

  std::vector<InstanceEffects> mixed{a, BucketMeans(FakeTrace(8, {2, 5}, 0.9, true)), a};
  const auto m = AggregateGroup(mixed, Label::kUngrounded);
  CHECK(m.instances == 2);
  CHECK(m.excluded == 1);
  CHECK(m.cells[0].count == 2);
  CHECK(m.cells[0].mean == a.effects[0]);

  CHECK_THROWS_AS(AggregateGroup(std::vector<InstanceEffects>{}, Label::kGrounded), Error);

  std::vector<InstanceEffects> big;
  for (int i = 0; i < 2000; ++i) big.push_back(a);
  CHECK(AggregateGroup(big, Label::kGrounded).instances == 2000);
}

TEST_CASE("feature CSV is deterministic and round-trips") {
  std::vector<FeatureVector> rows;
  for (int i = 0; i < 6; ++i)
    rows.push_back(BuildFeatures(FakeTrace(7 + i % 3, {1, 2 + i % 3}, 0.013 * i), "id" + std::to_string(i),
                                 i % 2 ? Label::kGrounded : Label::kUngrounded));
  std::ostringstream a, b;
  WriteFeatureCsv(a, rows);
  WriteFeatureCsv(b, rows);
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  const auto back = ReadFeatureCsv(in);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].id == rows[i].id);
    CHECK(back[i].label == rows[i].label);
    CHECK(back[i].values.effects == rows[i].values.effects);
    CHECK(back[i].values.missing == rows[i].values.missing);
  }
  std::istringstream bad("id,foo\n");
  CHECK_THROWS_AS(ReadFeatureCsv(bad), Error);
}

TEST_CASE("compare builds a significance heatmap") {
  Rng rng(17);
  std::vector<FeatureVector> rows;
  for (int i = 0; i < 40; ++i) {
    auto fv = BuildFeatures(FakeTrace(9, {2, 5}, 0.05), "r" + std::to_string(i),
                            i < 20 ? Label::kGrounded : Label::kUngrounded);
    for (double& v : fv.values.effects) v += 0.01 * rng.Normal();
    if (i >= 20) fv.values.effects[FeatureIndex(StateKind::kMlp, Bucket::kSubjLast)] += 1.0;
    rows.push_back(fv);
  }
  const auto report = Compare(rows);
  REQUIRE(report.cells.size() == 18);
  const auto& target = report.cells[FeatureIndex(StateKind::kMlp, Bucket::kSubjLast)];
  REQUIRE(target.test.has_value());
  CHECK(target.test->significant);
  CHECK(report.cells[0].test.has_value());

  const auto round = ReportFromJson(nlohmann::json::parse(ToJson(report).dump()));
  std::ostringstream a, b;
  WriteHeatmapCsv(a, report);
  WriteHeatmapCsv(b, round);
  CHECK(a.str() == b.str());
  CHECK(a.str().starts_with("state,bucket,mean_grounded"));
}
