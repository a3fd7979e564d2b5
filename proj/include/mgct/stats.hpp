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

#include <span>

namespace mgct::stats {

// Pairwise (cascade) summation; the result does not depend on how callers
// partition work, only on element order.
double PairwiseSum(std::span<const double> values);
double Mean(std::span<const double> values);
// Unbiased sample variance.
double Variance(std::span<const double> values);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-sided
  bool significant = false;
};

// Welch's unequal-variance two-sample t-test. Needs >= 2 values per group.
// When both groups have zero variance, p = 1 for equal means and 0 otherwise.
WelchResult WelchTTest(std::span<const double> a, std::span<const double> b, double alpha = 0.01);

}  // namespace mgct::stats
