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

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "fixture.hpp"
#include "mgct/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write the offline pipeline fixtures", "mgct-make-fixture"};
  std::string out;
  mgct::fixture::FixtureOptions options;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--triples", options.n_triples, "Number of ParaRel-style triples")->capture_default_str();
  app.add_option("--seed", options.seed, "Seed for names and assignments")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    const auto files = mgct::fixture::WriteFixture(out, options);
    std::cout << "fixtures written to " << out << "\n";
  } catch (const mgct::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  }
  return 0;
}
