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

#include "mgct/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "mgct/error.hpp"

namespace mgct::stats {

double PairwiseSum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return PairwiseSum(v.first(half)) + PairwiseSum(v.subspan(half));
}

double Mean(std::span<const double> v) {
  Check(!v.empty(), ErrorKind::kInvalidArgument, "mean of an empty sample");
  return PairwiseSum(v) / static_cast<double>(v.size());
}

double Variance(std::span<const double> v) {
  Check(v.size() >= 2, ErrorKind::kInvalidArgument, "variance needs at least two values");
  const double m = Mean(v);
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
  return PairwiseSum(sq) / static_cast<double>(v.size() - 1);
}

WelchResult WelchTTest(std::span<const double> a, std::span<const double> b, double alpha) {
  Check(a.size() >= 2 && b.size() >= 2, ErrorKind::kInvalidArgument,
        "t-test needs at least two values per group");
  const double ma = Mean(a), mb = Mean(b);
  const double va = Variance(a) / static_cast<double>(a.size());
  const double vb = Variance(b) / static_cast<double>(b.size());
  WelchResult r;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    r.t = ma == mb ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ma - mb);
    r.df = static_cast<double>(a.size() + b.size() - 2);
    r.p_value = ma == mb ? 1.0 : 0.0;
    r.significant = r.p_value < alpha;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(r.df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  r.p_value = std::min(1.0, r.p_value);
  r.significant = r.p_value < alpha;
  return r;
}

}  // namespace mgct::stats
