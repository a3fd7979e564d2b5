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

// Masked grouped causal tracing.
//
// One instance runs a clean pass, a corrupted pass where the subject tokens
// are replaced by a special token, and one restored pass per filter. A
// filter is a binary L x K_r grid over one state kind; row i addresses the
// block of layer i+1 and column j the token at restore_start + j, where
// restore_start is the first corrupted position.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgct/engine.hpp"

namespace mgct::tracing {

inline constexpr double kDenominatorFloor = 1e-6;

class FilterMask {
 public:
  FilterMask(StateKind kind, std::size_t n_layers, std::size_t n_cols, std::string label);
  static FilterMask Null(StateKind kind, std::size_t n_layers, std::size_t n_cols);
  static FilterMask Full(StateKind kind, std::size_t n_layers, std::size_t n_cols);

  StateKind kind() const { return kind_; }
  std::size_t n_layers() const { return n_layers_; }
  std::size_t n_cols() const { return n_cols_; }
  const std::string& label() const { return label_; }

  bool at(std::size_t row, std::size_t col) const { return bits_[row * n_cols_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool on = true) {
    bits_[row * n_cols_ + col] = on ? 1 : 0;
  }
  std::size_t count() const;
  bool is_null() const { return count() == 0; }

  friend bool operator==(const FilterMask&, const FilterMask&) = default;

 private:
  StateKind kind_;
  std::size_t n_layers_, n_cols_;
  std::vector<std::uint8_t> bits_;
  std::string label_;
};

// One mask per column, all L rows set. Labels are "<kind>:col=<j>".
std::vector<FilterMask> ColumnFilters(std::size_t n_layers, std::size_t n_cols, StateKind kind);

struct PatchShape {
  std::size_t rows = 1, cols = 1;
  std::size_t stride_rows = 1, stride_cols = 1;
};

// Patches of rows x cols placed at every stride step, clipped at the grid
// edge. Placement along an axis stops once a patch reaches the last cell, so
// stride == patch size yields ceil(L/rows) * ceil(K_r/cols) disjoint masks.
std::vector<FilterMask> PatchFilters(std::size_t n_layers, std::size_t n_cols, PatchShape patch,
                                     StateKind kind);

std::vector<FilterMask> SingleStateFilters(std::size_t n_layers, std::size_t n_cols,
                                           StateKind kind);

struct CorruptionSpec {
  std::vector<std::size_t> positions;
  TokenId replacement = 0;

  static CorruptionSpec FromSpan(TokenSpan span, TokenId replacement);
  void Validate(std::size_t n_tokens) const;
  std::size_t first() const { return positions.front(); }
};

// (p_restored - p_corrupt) / (p_clean - p_corrupt). Throws kDegenerate when
// |p_clean - p_corrupt| < floor. The result is not clipped.
double NormalizedEffect(double p_clean, double p_corrupt, double p_restored,
                        double floor = kDenominatorFloor);

struct MediationOutcome {
  double p_clean = 0.0;
  double p_corrupt = 0.0;
  double p_restored = 0.0;
  double effect = 0.0;  // NaN when degenerate
  bool degenerate = false;
  std::string filter_label;
  StateKind kind = StateKind::kHidden;
  TokenId answer_token = 0;
};

struct MediationOptions {
  bool parallel = true;  // OpenMP over filters
  double denominator_floor = kDenominatorFloor;
};

struct MediationResult {
  std::vector<MediationOutcome> outcomes;  // same order as the input filters
  TokenId answer_token = 0;
  double p_clean = 0.0;
  double p_corrupt = 0.0;
  bool degenerate = false;
  std::size_t restore_start = 0;
  std::size_t n_restorable = 0;  // K_r
  std::uint64_t forward_passes = 0;
};

// Executes clean and corrupted runs once, then one restored run per filter.
// `answer` defaults to the clean argmax; for multi-token answers callers pass
// the first token.
MediationResult RunMediation(const Model& model, const TokenSequence& tokens,
                             const CorruptionSpec& spec, std::span<const FilterMask> filters,
                             std::optional<TokenId> answer = std::nullopt,
                             const MediationOptions& options = {});

// Builds the restoration plan for `mask` against a clean trace.
InterventionPlan PlanFor(const FilterMask& mask, const CorruptionSpec& spec,
                         const TraceRecord& clean);

// Classic single-state causal tracing: corrupt, restore exactly one state
// (kind, layer 1..L, token) from the clean trace, return P(answer).
double RestoreSingleState(const Model& model, std::span<const TokenId> ids,
                          const CorruptionSpec& spec, const TraceRecord& clean, StateKind kind,
                          std::size_t layer, std::size_t token, TokenId answer);

// Column families for hidden, attn and mlp sharing one clean/corrupted pair.
struct InstanceTrace {
  TokenSequence tokens;
  MediationResult result;
  // effects[kind][j] for column j; NaN when degenerate.
  std::vector<double> column_effect(StateKind kind) const;
};

InstanceTrace TraceColumns(const Model& model, const TokenSequence& tokens, TokenId corruption_token,
                           std::span<const StateKind> kinds,
                           std::optional<TokenId> answer = std::nullopt,
                           const MediationOptions& options = {});

}  // namespace mgct::tracing
