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

// Token bucketing, per-instance feature construction and group aggregation
// of column effects.
//
// Feature order is canonical: hidden x 6 buckets, then attn x 6, then
// mlp x 6, buckets in the order subj-first, subj-middle, subj-last,
// cont-first, cont-middle, cont-last. Feature names are "<kind>/<bucket>".

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mgct/engine.hpp"
#include "mgct/stats.hpp"
#include "mgct/tracing.hpp"

namespace mgct::aggregate {

enum class Bucket { kSubjFirst, kSubjMiddle, kSubjLast, kContFirst, kContMiddle, kContLast };
inline constexpr std::size_t kBucketCount = 6;
inline constexpr std::size_t kFeatureCount = 18;
inline constexpr std::array<StateKind, 3> kStateKinds = {StateKind::kHidden, StateKind::kAttn,
                                                         StateKind::kMlp};

std::string_view ToString(Bucket b);
const std::vector<std::string>& FeatureNames();
std::size_t FeatureIndex(StateKind kind, Bucket bucket);

enum class Label { kGrounded, kUngrounded };
std::string_view ToString(Label l);
Label LabelFromString(std::string_view s);

// Buckets every position from the first subject token through the last
// token. Singleton spans fill only the -first bucket; two-token spans fill
// -first and -last. Throws kInvalidArgument when no token follows the subject.
std::map<std::size_t, Bucket> BucketAssign(const TokenSequence& sequence);

struct InstanceEffects {
  std::array<double, kFeatureCount> effects{};  // per-instance bucket means
  std::array<bool, kBucketCount> missing{};     // bucket had no positions
  double p_clean = 0.0;
  double p_corrupt = 0.0;
  bool degenerate = false;

  friend bool operator==(const InstanceEffects&, const InstanceEffects&) = default;
};

struct FeatureVector {
  std::string id;
  InstanceEffects values;
  Label label = Label::kGrounded;
};

// Averages column effects over the tokens of each bucket. Empty buckets are
// encoded as 0 with the missing flag set. Requires all three column
// families; throws kInvalidArgument otherwise.
InstanceEffects BucketMeans(const tracing::InstanceTrace& trace);
FeatureVector BuildFeatures(const tracing::InstanceTrace& trace, std::string id, Label label);

struct CellStats {
  double mean = 0.0;
  std::size_t count = 0;
  std::vector<double> values;
};

struct BucketedEffects {
  Label label = Label::kGrounded;
  std::array<CellStats, kFeatureCount> cells;
  std::size_t instances = 0;  // non-degenerate instances
  std::size_t excluded = 0;   // degenerate instances dropped
};

// Throws kInvalidArgument on an empty group.
BucketedEffects AggregateGroup(std::span<const InstanceEffects> instances, Label label);

struct CellComparison {
  std::string feature;
  StateKind kind;
  Bucket bucket;
  double mean_grounded = 0.0, mean_ungrounded = 0.0;
  std::size_t n_grounded = 0, n_ungrounded = 0;
  std::optional<stats::WelchResult> test;  // absent when a side has < 2 values
};

struct AggregateReport {
  BucketedEffects grounded, ungrounded;
  std::vector<CellComparison> cells;  // canonical feature order
  double alpha = 0.01;
};

AggregateReport Compare(std::span<const FeatureVector> features, double alpha = 0.01);

nlohmann::json ToJson(const AggregateReport& report);
AggregateReport ReportFromJson(const nlohmann::json& j);
// state,bucket,mean_grounded,mean_ungrounded,n_grounded,n_ungrounded,t,p_value,significant
void WriteHeatmapCsv(std::ostream& out, const AggregateReport& report);

// Feature matrix CSV: id, 18 features, p_clean, p_corrupt, 6 missing flags,
// label. Values are printed with 17 significant digits.
std::vector<std::string> CsvHeader();
void WriteFeatureCsv(std::ostream& out, std::span<const FeatureVector> rows);
std::vector<FeatureVector> ReadFeatureCsv(std::istream& in);

}  // namespace mgct::aggregate
