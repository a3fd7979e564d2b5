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

// Gradient-boosted decision trees for detecting ungrounded responses from
// MGCT feature vectors.
//
// Trees are grown level-wise with exact greedy splits on second-order
// logistic-loss statistics: a split of a node with gradient/hessian sums
// (G, H) into (G_L, H_L), (G_R, H_R) has gain
//   0.5 * (G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda))
// and leaves take the value -lr * G/(H+lambda). Feature importance is the
// total gain over every split that uses the feature.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mgct/aggregate.hpp"

namespace mgct::detector {

// Positive class (1) is "ungrounded".
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;

  std::size_t size() const { return rows.size(); }
  std::size_t n_features() const { return feature_names.size(); }
};

enum class FeatureSet {
  kMgct,           // the 18 effect features
  kMgctWithAux,    // 18 effects + p_clean, p_corrupt + 6 missing indicators
  kProbabilities,  // p_clean, p_corrupt only
};

Dataset MakeDataset(std::span<const aggregate::FeatureVector> features, FeatureSet set);

struct Split {
  std::vector<std::size_t> train, test;  // ascending
  std::uint64_t seed = 0;
};

// Stratified split: round(test_fraction * n_class) instances of each class
// go to test. Needs >= 10 instances and both labels.
Split SplitDataset(std::span<const int> labels, std::uint64_t seed, double test_fraction = 0.2);

struct HyperParams {
  std::size_t max_depth = 3;
  std::size_t n_trees = 100;
  double learning_rate = 0.1;
  double lambda = 1.0;
  double min_child_weight = 1.0;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

// depth {2,3,4} x trees {50,100,200} x learning rate {0.1, 0.3}.
std::vector<HyperParams> DefaultGrid();

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // rows with value < threshold go left
  int left = -1, right = -1;
  double value = 0.0;  // leaf output (already scaled by learning rate)
  double gain = 0.0;   // split gain; 0 for leaves
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double Predict(std::span<const double> row) const;
};

class GbtModel {
 public:
  double Margin(std::span<const double> row) const;
  double Probability(std::span<const double> row) const;
  int Predict(std::span<const double> row) const { return Probability(row) >= 0.5 ? 1 : 0; }

  // First `n` trees only; feature gains are recomputed from those trees.
  GbtModel Truncated(std::size_t n) const;

  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<double>& feature_gain() const { return feature_gain_; }
  double total_gain() const { return total_gain_; }
  const HyperParams& params() const { return params_; }
  double base_score() const { return base_score_; }

  nlohmann::json ToJson() const;
  static GbtModel FromJson(const nlohmann::json& j);

  friend GbtModel Fit(const Dataset&, std::span<const std::size_t>, const HyperParams&);

 private:
  void RecomputeGains();

  std::vector<Tree> trees_;
  std::vector<std::string> feature_names_;
  std::vector<double> feature_gain_;
  double total_gain_ = 0.0;
  double base_score_ = 0.0;  // prior log-odds
  HyperParams params_;
};

GbtModel Fit(const Dataset& data, std::span<const std::size_t> rows, const HyperParams& params);

struct GridResult {
  HyperParams params;
  double mean_accuracy = 0.0;
  std::size_t folds_used = 0;
};

struct TrainResult {
  GbtModel model;
  HyperParams best;
  std::vector<GridResult> grid;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
};

// Grid search by stratified k-fold CV on `train_rows`, then refit of the best
// point on all of them. Ties prefer fewer trees, then shallower trees, then
// the lower learning rate.
TrainResult Train(const Dataset& data, std::span<const std::size_t> train_rows,
                  std::span<const HyperParams> grid, std::size_t folds, std::uint64_t seed);

struct Evaluation {
  double accuracy = 0.0;
  std::size_t n = 0;
  std::size_t true_pos = 0, true_neg = 0, false_pos = 0, false_neg = 0;
};

// Throws kInvalidArgument for an empty test set or when any test index is in
// `split.train`.
Evaluation Evaluate(const GbtModel& model, const Dataset& data, std::span<const std::size_t> test_rows,
                    const Split& split);

// Train + evaluate restricted to the two run probabilities.
Evaluation AblateProbabilityOnly(std::span<const aggregate::FeatureVector> features, const Split& split,
                                 std::span<const HyperParams> grid, std::size_t folds,
                                 std::uint64_t seed);

// Features with non-zero gain, percent of total gain, descending.
std::vector<std::pair<std::string, double>> FeatureImportance(const GbtModel& model);

}  // namespace mgct::detector
