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

#include "mgct/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include <nlohmann/json.hpp>

#include "mgct/error.hpp"
#include "mgct/rng.hpp"

namespace mgct::detector {

namespace {

double Sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

double Score(double g, double h, double lambda) { return g * g / (h + lambda); }

}  // namespace

Dataset MakeDataset(std::span<const aggregate::FeatureVector> features, FeatureSet set) {
  Dataset d;
  const auto& names = aggregate::FeatureNames();
  if (set != FeatureSet::kProbabilities) d.feature_names = names;
  if (set != FeatureSet::kMgct) {
    d.feature_names.push_back("p_clean");
    d.feature_names.push_back("p_corrupt");
  }
  if (set == FeatureSet::kMgctWithAux) {
    for (std::size_t b = 0; b < aggregate::kBucketCount; ++b)
      d.feature_names.push_back("missing/" +
                                std::string(aggregate::ToString(static_cast<aggregate::Bucket>(b))));
  }
  d.rows.reserve(features.size());
  for (const auto& f : features) {
    std::vector<double> row;
    row.reserve(d.feature_names.size());
    if (set != FeatureSet::kProbabilities)
      row.insert(row.end(), f.values.effects.begin(), f.values.effects.end());
    if (set != FeatureSet::kMgct) {
      row.push_back(f.values.p_clean);
      row.push_back(f.values.p_corrupt);
    }
    if (set == FeatureSet::kMgctWithAux)
      for (bool m : f.values.missing) row.push_back(m ? 1.0 : 0.0);
    for (double v : row)
      Check(std::isfinite(v), ErrorKind::kData, "non-finite feature value in instance " + f.id);
    d.rows.push_back(std::move(row));
    d.labels.push_back(f.label == aggregate::Label::kUngrounded ? 1 : 0);
  }
  return d;
}

Split SplitDataset(std::span<const int> labels, std::uint64_t seed, double test_fraction) {
  Check(labels.size() >= 10, ErrorKind::kInvalidArgument, "split needs at least 10 instances");
  Check(test_fraction > 0.0 && test_fraction < 1.0, ErrorKind::kInvalidArgument,
        "test fraction must be in (0, 1)");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Check(labels[i] == 0 || labels[i] == 1, ErrorKind::kData, "labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  Check(!by_class[0].empty() && !by_class[1].empty(), ErrorKind::kInvalidArgument,
        "split needs both labels present");
  Split s;
  s.seed = seed;
  Rng rng(seed);
  for (auto& idx : by_class) {
    rng.Shuffle(idx);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * idx.size()));
    s.test.insert(s.test.end(), idx.begin(), idx.begin() + n_test);
    s.train.insert(s.train.end(), idx.begin() + n_test, idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<HyperParams> DefaultGrid() {
  std::vector<HyperParams> grid;
  for (std::size_t depth : {2, 3, 4})
    for (std::size_t trees : {50, 100, 200})
      for (double lr : {0.1, 0.3}) grid.push_back({depth, trees, lr});
  return grid;
}

double Tree::Predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0)
    i = static_cast<std::size_t>(row[nodes[i].feature] < nodes[i].threshold ? nodes[i].left
                                                                            : nodes[i].right);
  return nodes[i].value;
}

double GbtModel::Margin(std::span<const double> row) const {
  Check(row.size() == feature_names_.size(), ErrorKind::kInvalidArgument,
        "row has " + std::to_string(row.size()) + " features, model expects " +
            std::to_string(feature_names_.size()));
  double m = base_score_;
  for (const auto& t : trees_) m += t.Predict(row);
  return m;
}

double GbtModel::Probability(std::span<const double> row) const { return Sigmoid(Margin(row)); }

void GbtModel::RecomputeGains() {
  feature_gain_.assign(feature_names_.size(), 0.0);
  for (const auto& t : trees_)
    for (const auto& n : t.nodes)
      if (n.feature >= 0) feature_gain_[n.feature] += n.gain;
  total_gain_ = 0.0;
  for (const auto& t : trees_)
    for (const auto& n : t.nodes) total_gain_ += n.gain;
}

GbtModel GbtModel::Truncated(std::size_t n) const {
  Check(n <= trees_.size(), ErrorKind::kInvalidArgument, "cannot truncate to more trees than fitted");
  GbtModel m = *this;
  m.trees_.resize(n);
  m.params_.n_trees = n;
  m.RecomputeGains();
  return m;
}

namespace {

struct NodeStats {
  double g = 0.0, h = 0.0;
};

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Grows one tree level by level. `order[f]` lists the training rows sorted by
// feature f; `node_of[r]` is the open node holding row r, or -1 once its leaf
// is final.
Tree GrowTree(const Dataset& data, const std::vector<std::vector<std::size_t>>& order,
              std::span<const std::size_t> rows, const std::vector<double>& grad,
              const std::vector<double>& hess, const HyperParams& p) {
  Tree tree;
  tree.nodes.emplace_back();
  std::vector<int> node_of(data.size(), -1);
  for (std::size_t r : rows) node_of[r] = 0;
  std::vector<int> open = {0};

  auto leaf_value = [&](const NodeStats& s) { return -p.learning_rate * s.g / (s.h + p.lambda); };

  for (std::size_t depth = 0; !open.empty(); ++depth) {
    std::vector<int> slot(tree.nodes.size(), -1);  // node id -> index into `open`
    for (std::size_t i = 0; i < open.size(); ++i) slot[open[i]] = static_cast<int>(i);
    std::vector<NodeStats> total(open.size());
    for (std::size_t r : rows) {
      if (node_of[r] < 0) continue;
      auto& s = total[slot[node_of[r]]];
      s.g += grad[r];
      s.h += hess[r];
    }
    std::vector<Candidate> best(open.size());
    if (depth < p.max_depth) {
      for (std::size_t f = 0; f < data.n_features(); ++f) {
        std::vector<NodeStats> left(open.size());
        std::vector<double> last(open.size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t r : order[f]) {
          if (node_of[r] < 0) continue;
          const std::size_t k = slot[node_of[r]];
          const double x = data.rows[r][f];
          auto& l = left[k];
          if (!std::isnan(last[k]) && x != last[k] && l.h >= p.min_child_weight &&
              total[k].h - l.h >= p.min_child_weight) {
            const double gain = 0.5 * (Score(l.g, l.h, p.lambda) +
                                       Score(total[k].g - l.g, total[k].h - l.h, p.lambda) -
                                       Score(total[k].g, total[k].h, p.lambda));
            if (gain > best[k].gain) {
              double thr = 0.5 * (last[k] + x);
              if (!(last[k] < thr)) thr = x;
              best[k] = {gain, static_cast<int>(f), thr};
            }
          }
          l.g += grad[r];
          l.h += hess[r];
          last[k] = x;
        }
      }
    }
    std::vector<int> next;
    std::vector<int> child_left(open.size(), -1);
    for (std::size_t k = 0; k < open.size(); ++k) {
      const int id = open[k];
      if (best[k].feature < 0) {
        tree.nodes[id].value = leaf_value(total[k]);
        continue;
      }
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& node = tree.nodes[id];
      node.feature = best[k].feature;
      node.threshold = best[k].threshold;
      node.gain = best[k].gain;
      node.left = l;
      node.right = l + 1;
      child_left[k] = l;
      next.push_back(l);
      next.push_back(l + 1);
    }
    // Rows in finished leaves drop out of later levels.
    for (std::size_t r : rows) {
      if (node_of[r] < 0) continue;
      const std::size_t k = slot[node_of[r]];
      if (child_left[k] < 0) {
        node_of[r] = -1;
        continue;
      }
      const TreeNode& n = tree.nodes[open[k]];
      node_of[r] = data.rows[r][n.feature] < n.threshold ? n.left : n.right;
    }
    open = std::move(next);
  }
  return tree;
}

}  // namespace

GbtModel Fit(const Dataset& data, std::span<const std::size_t> rows, const HyperParams& p) {
  Check(!rows.empty(), ErrorKind::kInvalidArgument, "cannot fit on an empty training set");
  Check(p.max_depth >= 1 && p.n_trees >= 1, ErrorKind::kInvalidArgument,
        "max_depth and n_trees must be >= 1");
  Check(p.learning_rate > 0.0 && p.lambda >= 0.0, ErrorKind::kInvalidArgument,
        "learning_rate must be > 0 and lambda >= 0");
  GbtModel model;
  model.feature_names_ = data.feature_names;
  model.params_ = p;

  double positives = 0.0;
  for (std::size_t r : rows) positives += data.labels[r];
  const double prior = std::clamp(positives / static_cast<double>(rows.size()), 1e-6, 1.0 - 1e-6);
  model.base_score_ = std::log(prior / (1.0 - prior));

  std::vector<std::vector<std::size_t>> order(data.n_features());
  for (std::size_t f = 0; f < data.n_features(); ++f) {
    order[f].assign(rows.begin(), rows.end());
    std::stable_sort(order[f].begin(), order[f].end(),
                     [&](std::size_t a, std::size_t b) { return data.rows[a][f] < data.rows[b][f]; });
  }

  std::vector<double> margin(data.size(), model.base_score_);
  std::vector<double> grad(data.size()), hess(data.size());
  for (std::size_t t = 0; t < p.n_trees; ++t) {
    for (std::size_t r : rows) {
      const double prob = Sigmoid(margin[r]);
      grad[r] = prob - data.labels[r];
      hess[r] = std::max(prob * (1.0 - prob), 1e-16);
    }
    model.trees_.push_back(GrowTree(data, order, rows, grad, hess, p));
    for (std::size_t r : rows) margin[r] += model.trees_.back().Predict(data.rows[r]);
  }
  model.RecomputeGains();
  return model;
}

namespace {

// Assigns every row of `rows` to one of `k` folds, class by class.
std::vector<std::vector<std::size_t>> StratifiedFolds(const Dataset& data,
                                                      std::span<const std::size_t> rows,
                                                      std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t r : rows) by_class[data.labels[r]].push_back(r);
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& idx : by_class) {
    rng.Shuffle(idx);
    for (std::size_t r : idx) folds[next++ % k].push_back(r);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

bool HasBothLabels(const Dataset& data, std::span<const std::size_t> rows) {
  bool seen[2] = {false, false};
  for (std::size_t r : rows) seen[data.labels[r]] = true;
  return seen[0] && seen[1];
}

double Accuracy(const GbtModel& m, const Dataset& data, std::span<const std::size_t> rows) {
  std::size_t correct = 0;
  for (std::size_t r : rows) correct += m.Predict(data.rows[r]) == data.labels[r];
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

bool Preferred(const GridResult& a, const GridResult& b) {
  const bool a_ok = a.folds_used > 0, b_ok = b.folds_used > 0;
  if (a_ok != b_ok) return a_ok;
  if (a_ok && a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
  return std::tie(a.params.n_trees, a.params.max_depth, a.params.learning_rate) <
         std::tie(b.params.n_trees, b.params.max_depth, b.params.learning_rate);
}

}  // namespace

TrainResult Train(const Dataset& data, std::span<const std::size_t> train_rows,
                  std::span<const HyperParams> grid, std::size_t folds, std::uint64_t seed) {
  Check(!grid.empty(), ErrorKind::kInvalidArgument, "hyperparameter grid is empty");
  Check(folds >= 2, ErrorKind::kInvalidArgument, "cross-validation needs at least 2 folds");
  Check(!train_rows.empty(), ErrorKind::kInvalidArgument, "training set is empty");
  for (std::size_t r : train_rows)
    Check(r < data.size(), ErrorKind::kInvalidArgument, "training index out of range");

  TrainResult out;
  out.seed = seed;
  const auto fold_rows = StratifiedFolds(data, train_rows, folds, seed);
  std::vector<std::vector<std::size_t>> fit_rows(folds);
  std::vector<bool> usable(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    for (std::size_t g = 0; g < folds; ++g)
      if (g != f) fit_rows[f].insert(fit_rows[f].end(), fold_rows[g].begin(), fold_rows[g].end());
    std::sort(fit_rows[f].begin(), fit_rows[f].end());
    usable[f] = HasBothLabels(data, fit_rows[f]) && HasBothLabels(data, fold_rows[f]);
    if (!usable[f])
      out.warnings.push_back("fold " + std::to_string(f) + " has a single class and was skipped");
  }

  // Boosting is sequential, so a model with fewer trees is a prefix of one with
  // more: fit each (depth, learning rate) once at the largest tree count.
  std::vector<HyperParams> groups;
  std::vector<std::size_t> group_of(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    HyperParams key = grid[i];
    key.n_trees = 0;
    auto it = std::find_if(groups.begin(), groups.end(), [&](HyperParams g) {
      g.n_trees = 0;
      return g == key;
    });
    if (it == groups.end()) {
      groups.push_back(grid[i]);
      it = groups.end() - 1;
    }
    it->n_trees = std::max(it->n_trees, grid[i].n_trees);
    group_of[i] = static_cast<std::size_t>(it - groups.begin());
  }

  const std::size_t n_tasks = groups.size() * folds;
  std::vector<GbtModel> fitted(n_tasks);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const std::size_t f = t % folds;
    if (usable[f]) fitted[t] = Fit(data, fit_rows[f], groups[t / folds]);
  }

  for (std::size_t i = 0; i < grid.size(); ++i) {
    GridResult res{grid[i], 0.0, 0};
    double sum = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      if (!usable[f]) continue;
      const GbtModel m = fitted[group_of[i] * folds + f].Truncated(grid[i].n_trees);
      sum += Accuracy(m, data, fold_rows[f]);
      ++res.folds_used;
    }
    res.mean_accuracy =
        res.folds_used ? sum / static_cast<double>(res.folds_used) : std::numeric_limits<double>::quiet_NaN();
    out.grid.push_back(res);
  }
  if (std::none_of(out.grid.begin(), out.grid.end(), [](const auto& g) { return g.folds_used > 0; }))
    out.warnings.push_back("no usable cross-validation fold; choosing the smallest grid point");

  out.best = std::min_element(out.grid.begin(), out.grid.end(), Preferred)->params;
  out.model = Fit(data, train_rows, out.best);
  return out;
}

Evaluation Evaluate(const GbtModel& model, const Dataset& data, std::span<const std::size_t> test_rows,
                    const Split& split) {
  Check(!test_rows.empty(), ErrorKind::kInvalidArgument, "test set is empty");
  std::vector<bool> in_train(data.size(), false);
  for (std::size_t r : split.train)
    if (r < data.size()) in_train[r] = true;
  Evaluation e;
  for (std::size_t r : test_rows) {
    Check(r < data.size(), ErrorKind::kInvalidArgument, "test index out of range");
    Check(!in_train[r], ErrorKind::kInvalidArgument,
          "test index " + std::to_string(r) + " is part of the training split");
    const int pred = model.Predict(data.rows[r]);
    const int truth = data.labels[r];
    if (pred == 1 && truth == 1) ++e.true_pos;
    if (pred == 0 && truth == 0) ++e.true_neg;
    if (pred == 1 && truth == 0) ++e.false_pos;
    if (pred == 0 && truth == 1) ++e.false_neg;
  }
  e.n = test_rows.size();
  e.accuracy = static_cast<double>(e.true_pos + e.true_neg) / static_cast<double>(e.n);
  return e;
}

Evaluation AblateProbabilityOnly(std::span<const aggregate::FeatureVector> features, const Split& split,
                                 std::span<const HyperParams> grid, std::size_t folds,
                                 std::uint64_t seed) {
  const Dataset probs = MakeDataset(features, FeatureSet::kProbabilities);
  const TrainResult trained = Train(probs, split.train, grid, folds, seed);
  return Evaluate(trained.model, probs, split.test, split);
}

std::vector<std::pair<std::string, double>> FeatureImportance(const GbtModel& model) {
  std::vector<std::pair<std::string, double>> out;
  if (!(model.total_gain() > 0.0)) return out;
  for (std::size_t f = 0; f < model.feature_gain().size(); ++f)
    if (model.feature_gain()[f] > 0.0)
      out.emplace_back(model.feature_names()[f], 100.0 * model.feature_gain()[f] / model.total_gain());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

nlohmann::json GbtModel::ToJson() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.feature < 0) {
        nodes.push_back({{"leaf", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"gain", n.gain}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  return {{"format", "mgct-gbt"},
          {"version", 1},
          {"feature_names", feature_names_},
          {"base_score", base_score_},
          {"params",
           {{"max_depth", params_.max_depth},
            {"n_trees", params_.n_trees},
            {"learning_rate", params_.learning_rate},
            {"lambda", params_.lambda},
            {"min_child_weight", params_.min_child_weight}}},
          {"feature_gain", feature_gain_},
          {"total_gain", total_gain_},
          {"trees", std::move(trees)}};
}

GbtModel GbtModel::FromJson(const nlohmann::json& j) {
  try {
    Check(j.at("format") == "mgct-gbt" && j.at("version") == 1, ErrorKind::kData,
          "not an mgct-gbt v1 model");
    GbtModel m;
    m.feature_names_ = j.at("feature_names").get<std::vector<std::string>>();
    m.base_score_ = j.at("base_score").get<double>();
    const auto& p = j.at("params");
    m.params_ = {p.at("max_depth").get<std::size_t>(), p.at("n_trees").get<std::size_t>(),
                 p.at("learning_rate").get<double>(), p.at("lambda").get<double>(),
                 p.at("min_child_weight").get<double>()};
    Check(std::isfinite(m.base_score_), ErrorKind::kData, "base score is not finite");
    const int n_features = static_cast<int>(m.feature_names_.size());
    for (const auto& jt : j.at("trees")) {
      Tree t;
      for (const auto& jn : jt) {
        TreeNode n;
        if (jn.contains("leaf")) {
          n.value = jn.at("leaf").get<double>();
          Check(std::isfinite(n.value), ErrorKind::kData, "leaf value is not finite");
        } else {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
          n.gain = jn.at("gain").get<double>();
          Check(n.feature >= 0 && n.feature < n_features, ErrorKind::kData, "split feature out of range");
          Check(std::isfinite(n.threshold), ErrorKind::kData, "split threshold is not finite");
          Check(std::isfinite(n.gain) && n.gain >= 0.0, ErrorKind::kData, "split gain must be >= 0");
        }
        t.nodes.push_back(n);
      }
      Check(!t.nodes.empty(), ErrorKind::kData, "empty tree");
      const int size = static_cast<int>(t.nodes.size());
      for (int i = 0; i < size; ++i) {
        const auto& n = t.nodes[i];
        if (n.feature >= 0)
          Check(n.left > i && n.right > i && n.left < size && n.right < size, ErrorKind::kData,
                "tree child index out of range");
      }
      m.trees_.push_back(std::move(t));
    }
    m.RecomputeGains();
    return m;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed detector model: ") + e.what());
  }
}

}  // namespace mgct::detector
