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
#include <functional>
#include <numeric>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "mgct/detector.hpp"
#include "mgct/error.hpp"
#include "mgct/rng.hpp"
#include "planted.hpp"

using namespace mgct;
using namespace mgct::detector;

namespace {

// Recursive, unsorted reference booster: every candidate split is summed
// from scratch.
struct NaiveBooster {
  const Dataset& data;
  HyperParams p;
  std::vector<double> grad, hess;

  double Build(const std::vector<std::size_t>& rows, std::size_t depth, std::span<const double> query) {
    double G = 0, H = 0;
    for (auto r : rows) G += grad[r], H += hess[r];
    double best = 0;
    int bf = -1;
    double bt = 0;
    if (depth < p.max_depth) {
      for (std::size_t f = 0; f < data.n_features(); ++f) {
        std::vector<double> vals;
        for (auto r : rows) vals.push_back(data.rows[r][f]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t i = 1; i < vals.size(); ++i) {
          const double thr = 0.5 * (vals[i - 1] + vals[i]);
          double GL = 0, HL = 0;
          for (auto r : rows)
            if (data.rows[r][f] < thr) GL += grad[r], HL += hess[r];
          if (HL < p.min_child_weight || H - HL < p.min_child_weight) continue;
          const double gain = 0.5 * (GL * GL / (HL + p.lambda) + (G - GL) * (G - GL) / (H - HL + p.lambda) -
                                     G * G / (H + p.lambda));
          if (gain > best + 1e-12) best = gain, bf = static_cast<int>(f), bt = thr;
        }
      }
    }
    if (bf < 0) return -p.learning_rate * G / (H + p.lambda);
    std::vector<std::size_t> l, r;
    for (auto x : rows) (data.rows[x][bf] < bt ? l : r).push_back(x);
    return Build(query[bf] < bt ? l : r, depth + 1, query);
  }

  // Margins of every row in `rows` after boosting.
  std::vector<double> Margins(const std::vector<std::size_t>& rows) {
    double pos = 0;
    for (auto r : rows) pos += data.labels[r];
    const double prior = pos / rows.size();
    std::vector<double> m(data.size(), std::log(prior / (1 - prior)));
    grad.assign(data.size(), 0);
    hess.assign(data.size(), 0);
    for (std::size_t t = 0; t < p.n_trees; ++t) {
      for (auto r : rows) {
        const double q = 1 / (1 + std::exp(-m[r]));
        grad[r] = q - data.labels[r];
        hess[r] = std::max(q * (1 - q), 1e-16);
      }
      std::vector<double> step(data.size());
      for (auto r : rows) step[r] = Build(rows, 0, data.rows[r]);
      for (auto r : rows) m[r] += step[r];
    }
    return m;
  }
};

Dataset RandomDataset(std::size_t n, std::size_t f, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t j = 0; j < f; ++j) d.feature_names.push_back("f" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(f);
    for (auto& v : row) v = rng.Normal();
    d.labels.push_back(row[0] + 0.5 * row[1] + 0.7 * rng.Normal() > 0 ? 1 : 0);
    d.rows.push_back(std::move(row));
  }
  return d;
}

std::vector<std::size_t> All(const Dataset& d) {
  std::vector<std::size_t> v(d.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST_CASE("split_dataset") {
  std::vector<int> labels(4000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
  const Split s = SplitDataset(labels, 7);
  CHECK(s.train.size() == 3200);
  CHECK(s.test.size() == 800);
  std::size_t pos = 0;
  for (auto i : s.test) pos += labels[i];
  CHECK(pos == 400);
  std::vector<bool> seen(labels.size(), false);
  for (auto i : s.train) seen[i] = true;
  for (auto i : s.test) {
    CHECK_FALSE(seen[i]);
    seen[i] = true;
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));

  const Split again = SplitDataset(labels, 7);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK(SplitDataset(labels, 8).test != s.test);

  std::vector<int> ten = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const Split small = SplitDataset(ten, 1);
  CHECK(small.train.size() == 8);
  REQUIRE(small.test.size() == 2);
  CHECK(ten[small.test[0]] + ten[small.test[1]] == 1);

  // Class balance within one instance on an uneven mix.
  std::vector<int> mixed(103);
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = i < 37;
  const Split m = SplitDataset(mixed, 3);
  std::size_t test_pos = 0;
  for (auto i : m.test) test_pos += mixed[i];
  CHECK(std::abs(static_cast<double>(test_pos) - 0.2 * 37) <= 1.0);
  CHECK(std::abs(static_cast<double>(m.test.size() - test_pos) - 0.2 * 66) <= 1.0);

  CHECK_THROWS_AS(SplitDataset(std::vector<int>(20, 1), 1), Error);
  CHECK_THROWS_AS(SplitDataset(std::vector<int>{0, 1, 0}, 1), Error);
}

TEST_CASE("fit matches a naive reference booster") {
  for (std::size_t depth : {1, 2, 3}) {
    const Dataset d = RandomDataset(120, 4, 11 + depth);
    const auto rows = All(d);
    const HyperParams p{depth, 8, 0.3};
    const GbtModel m = Fit(d, rows, p);
    NaiveBooster naive{d, p, {}, {}};
    const auto margins = naive.Margins(rows);
    for (auto r : rows) CHECK(m.Margin(d.rows[r]) == doctest::Approx(margins[r]).epsilon(1e-9));
  }
}

TEST_CASE("model invariants and gain accounting") {
  const Dataset d = RandomDataset(300, 6, 5);
  const GbtModel m = Fit(d, All(d), {4, 60, 0.3});
  double sum = 0;
  for (double g : m.feature_gain()) {
    CHECK(g >= 0.0);
    sum += g;
  }
  CHECK(std::abs(sum - m.total_gain()) <= 1e-9 * m.total_gain());
  for (const auto& t : m.trees())
    for (const auto& n : t.nodes) {
      CHECK(std::isfinite(n.threshold));
      CHECK(std::isfinite(n.value));
      CHECK(n.gain >= 0.0);
    }
  double pct = 0;
  for (auto& [name, v] : FeatureImportance(m)) pct += v;
  CHECK(pct == doctest::Approx(100.0).epsilon(1e-12));

  // A prefix of the trees is the model fitted with fewer trees.
  const GbtModel shorter = Fit(d, All(d), {4, 25, 0.3});
  const GbtModel prefix = m.Truncated(25);
  for (const auto& row : d.rows) CHECK(prefix.Margin(row) == shorter.Margin(row));
  CHECK(prefix.feature_gain() == shorter.feature_gain());
}

TEST_CASE("separable data and single-feature models") {
  Dataset d;
  d.feature_names = {"x"};
  for (int i = 0; i < 40; ++i) {
    d.rows.push_back({i < 20 ? i : i + 100.0});
    d.labels.push_back(i >= 20);
  }
  const Split s = SplitDataset(d.labels, 2);
  const std::vector<HyperParams> grid = DefaultGrid();
  CHECK(grid.size() == 18);
  const TrainResult r = Train(d, s.train, grid, 5, 3);
  CHECK(std::any_of(r.grid.begin(), r.grid.end(), [](auto& g) { return g.mean_accuracy == 1.0; }));
  CHECK(r.best.n_trees == 50);
  CHECK(r.best.max_depth == 2);
  CHECK(Evaluate(r.model, d, s.test, s).accuracy == 1.0);
  const auto imp = FeatureImportance(r.model);
  REQUIRE(imp.size() == 1);
  CHECK(imp[0].first == "x");
  CHECK(imp[0].second == 100.0);

  const std::vector<HyperParams> one = {{3, 17, 0.2}};
  const TrainResult single = Train(d, s.train, one, 4, 3);
  CHECK(single.best == one[0]);
  CHECK(single.model.params() == one[0]);
  CHECK(single.model.trees().size() == 17);
}

TEST_CASE("majority predictor and stump-free models") {
  Dataset d;
  d.feature_names = {"const"};
  for (int i = 0; i < 20; ++i) {
    d.rows.push_back({1.0});
    d.labels.push_back(i % 2);
  }
  const Split s = SplitDataset(d.labels, 4);
  const GbtModel m = Fit(d, s.train, {3, 10, 0.3});
  CHECK(FeatureImportance(m).empty());
  CHECK(m.total_gain() == 0.0);
  CHECK(Evaluate(m, d, s.test, s).accuracy == 0.5);
}

TEST_CASE("evaluate guards") {
  const Dataset d = RandomDataset(50, 3, 9);
  const Split s = SplitDataset(d.labels, 1);
  const GbtModel m = Fit(d, s.train, {2, 5, 0.3});
  CHECK_THROWS_AS(Evaluate(m, d, std::vector<std::size_t>{}, s), Error);
  CHECK_THROWS_AS(Evaluate(m, d, s.train, s), Error);
  std::vector<std::size_t> mixed = s.test;
  mixed.push_back(s.train.front());
  CHECK_THROWS_AS(Evaluate(m, d, mixed, s), Error);
  const Evaluation e = Evaluate(m, d, s.test, s);
  CHECK(e.true_pos + e.true_neg + e.false_pos + e.false_neg == e.n);
  CHECK(e.accuracy == static_cast<double>(e.true_pos + e.true_neg) / e.n);

  CHECK_THROWS_AS(Train(d, s.train, std::vector<HyperParams>{}, 5, 1), Error);
  CHECK_THROWS_AS(Train(d, s.train, DefaultGrid(), 1, 1), Error);
}

TEST_CASE("degenerate folds are skipped with a warning") {
  Dataset d;
  d.feature_names = {"x"};
  for (int i = 0; i < 30; ++i) {
    d.rows.push_back({static_cast<double>(i)});
    d.labels.push_back(i < 2);
  }
  const TrainResult r = Train(d, All(d), std::vector<HyperParams>{{2, 5, 0.3}}, 5, 1);
  CHECK(r.warnings.size() == 3);
  CHECK(r.grid[0].folds_used == 2);
}

TEST_CASE("planted mlp/subj-last signal") {
  const auto features = planted::MlpSubjLast(1000, 21);
  const Dataset d = MakeDataset(features, FeatureSet::kMgct);
  CHECK(d.n_features() == 18);
  const Split s = SplitDataset(d.labels, 5);
  const auto grid = DefaultGrid();
  const TrainResult r = Train(d, s.train, grid, 5, 5);
  const auto imp = FeatureImportance(r.model);
  REQUIRE_FALSE(imp.empty());
  CHECK(imp[0].first == "mlp/subj-last");
  const double full = Evaluate(r.model, d, s.test, s).accuracy;
  CHECK(full > 0.9);
  const double ablated = AblateProbabilityOnly(features, s, grid, 5, 5).accuracy;
  CHECK(ablated < full);
  CHECK(std::abs(ablated - 0.5) < 0.1);

  // Retraining is deterministic.
  const TrainResult again = Train(d, s.train, grid, 5, 5);
  CHECK(again.model.ToJson() == r.model.ToJson());
}

TEST_CASE("perfect feature never lowers best CV accuracy") {
  Dataset d = RandomDataset(200, 3, 13);
  const auto rows = All(d);
  const std::vector<HyperParams> grid = {{2, 20, 0.3}, {3, 20, 0.1}};
  auto best = [&](const Dataset& data) {
    const TrainResult r = Train(data, rows, grid, 5, 2);
    double b = 0;
    for (auto& g : r.grid) b = std::max(b, g.mean_accuracy);
    return b;
  };
  const double before = best(d);
  d.feature_names.push_back("oracle");
  for (std::size_t i = 0; i < d.size(); ++i) d.rows[i].push_back(d.labels[i]);
  CHECK(best(d) >= before);
  CHECK(best(d) == 1.0);
}

TEST_CASE("model json round trip and validation") {
  const Dataset d = RandomDataset(100, 4, 3);
  const GbtModel m = Fit(d, All(d), {3, 12, 0.3});
  const auto j = m.ToJson();
  const GbtModel back = GbtModel::FromJson(nlohmann::json::parse(j.dump()));
  for (const auto& row : d.rows) CHECK(back.Margin(row) == m.Margin(row));
  CHECK(back.feature_gain() == m.feature_gain());
  CHECK(back.ToJson() == j);

  auto broken = j;
  broken["trees"][0][0]["threshold"] = nullptr;
  CHECK_THROWS_AS(GbtModel::FromJson(broken), Error);
  broken = j;
  broken["trees"][0][0]["gain"] = -1.0;
  CHECK_THROWS_AS(GbtModel::FromJson(broken), Error);
  broken = j;
  broken["trees"][0][0]["left"] = 0;
  CHECK_THROWS_AS(GbtModel::FromJson(broken), Error);
  broken = j;
  broken["format"] = "xgboost";
  CHECK_THROWS_AS(GbtModel::FromJson(broken), Error);
  CHECK_THROWS_AS(m.Margin(std::vector<double>(3)), Error);
}
