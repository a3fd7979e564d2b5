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
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "fixture.hpp"
#include "mgct/cli.hpp"
#include "mgct/error.hpp"
#include "mgct/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result Mgct(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = mgct::cli::Dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path Scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mgct_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const mgct::fixture::FixtureFiles& Fixture() {
  static const auto files = mgct::fixture::WriteFixture(Scratch("fixture"));
  return files;
}

std::string S(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("exit codes for usage errors") {
  CHECK(Mgct({}).code == 2);
  CHECK(Mgct({"--help"}).code == 0);
  CHECK(Mgct({"--version"}).out == "0.1.0\n");
  CHECK(Mgct({"detect", "train", "--no-such-flag"}).code == 2);
  CHECK(Mgct({"trace"}).code == 2);
  CHECK(mgct::cli::ExitCode(mgct::ErrorKind::kData) == 4);
}

TEST_CASE("missing inputs are config errors and leave nothing behind") {
  const auto dir = Scratch("missing");
  const auto out = dir / "trace";
  auto r = Mgct({"trace", "mgct", "--weights", S(dir / "nope"), "--dataset", S(dir / "x.jsonl"), "--out", S(out)});
  CHECK(r.code == 3);
  CHECK(r.err.find("--weights") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
  CHECK(fs::is_empty(dir));

  r = Mgct({"detect", "train", "--features", S(Fixture().pararel)});
  CHECK(r.code == 3);
  CHECK(r.err.find("--out") != std::string::npos);
}

TEST_CASE("data errors mid-run leave no partial outputs") {
  const auto dir = Scratch("baddata");
  mgct::io::WriteFile(dir / "features.csv", "id,label\nx,grounded\n");
  const auto r = Mgct({"detect", "train", "--features", S(dir / "features.csv"), "--out", S(dir / "out")});
  CHECK(r.code == 4);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK_FALSE(fs::exists(dir / "out.staging"));
}

TEST_CASE("config file supplies options and flags override it") {
  const auto& fx = Fixture();
  const auto dir = Scratch("config");
  REQUIRE(Mgct({"dataset", "build-pararel", "--weights", S(fx.weights), "--pararel", S(fx.pararel), "--categories",
                S(fx.categories), "--out", S(dir / "pararel")})
              .code == 0);
  REQUIRE(Mgct({"dataset", "build-base", "--counterfactuals", S(dir / "pararel" / "counterfactual.jsonl"),
                "--patterns", S(fx.patterns), "--transcript", S(fx.transcript), "--out", S(dir / "base")})
              .code == 0);
  const json cfg = {{"base", S(dir / "base" / "fakepedia_base.jsonl")},
                    {"counterfactuals", S(dir / "pararel" / "counterfactual.jsonl")},
                    {"linking", S(fx.linking)},
                    {"n", 7},
                    {"seed", 11}};
  mgct::io::WriteFile(dir / "mh.json", cfg.dump());

  auto r = Mgct({"dataset", "build-mh", "--config", S(dir / "mh.json"), "--out", S(dir / "a")});
  REQUIRE(r.code == 0);
  auto summary = mgct::io::ReadJson(dir / "a" / "summary.json");
  CHECK(summary["written"] == 7);
  CHECK(summary["seed"] == 11);

  r = Mgct({"dataset", "build-mh", "--config", S(dir / "mh.json"), "--n", "3", "--out", S(dir / "b")});
  REQUIRE(r.code == 0);
  summary = mgct::io::ReadJson(dir / "b" / "summary.json");
  CHECK(summary["written"] == 3);
  const auto manifest = mgct::io::ReadJson(dir / "b" / "manifest.json");
  CHECK(manifest["config"]["n"] == "3");
  CHECK(manifest["config"]["seed"] == "11");

  mgct::io::WriteFile(dir / "bad.json", R"({"bogus": 1})");
  r = Mgct({"dataset", "build-mh", "--config", S(dir / "bad.json"), "--out", S(dir / "c")});
  CHECK(r.code == 3);
  CHECK(r.err.find("bogus") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "c"));
}

TEST_CASE("manifests record digests of inputs and outputs") {
  const auto& fx = Fixture();
  const auto dir = Scratch("manifest");
  REQUIRE(Mgct({"dataset", "build-pararel", "--weights", S(fx.weights), "--pararel", S(fx.pararel), "--categories",
                S(fx.categories), "--out", S(dir / "p")})
              .code == 0);
  const auto m = mgct::io::ReadJson(dir / "p" / "manifest.json");
  CHECK(m["command"] == "dataset build-pararel");
  CHECK(m["version"] == mgct::cli::kVersion);
  std::set<std::string> files;
  for (const auto& o : m["outputs"]) {
    files.insert(o["file"].get<std::string>());
    CHECK(o["sha256"] == mgct::io::Sha256File(dir / "p" / o["file"].get<std::string>()));
  }
  CHECK(files == std::set<std::string>{"counterfactual.jsonl", "known.jsonl", "summary.json"});
  bool saw_weights = false;
  for (const auto& i : m["inputs"]) {
    CHECK(i["sha256"] == mgct::io::Sha256File(i["path"].get<std::string>()));
    saw_weights |= i["path"].get<std::string>().ends_with("model.safetensors");
  }
  CHECK(saw_weights);
}

TEST_CASE("outputs may not overwrite inputs") {
  const auto dir = Scratch("clobber");
  mgct::io::WriteFile(dir / "summary.json", "{}");
  mgct::io::WriteFile(dir / "c.jsonl", "");
  mgct::io::WriteFile(dir / "b.jsonl", "");
  mgct::io::WriteFile(dir / "l.json", "{}");
  const auto r = Mgct({"dataset", "build-mh", "--base", S(dir / "b.jsonl"), "--counterfactuals", S(dir / "c.jsonl"),
                       "--linking", S(dir / "l.json"), "--out", S(dir)});
  CHECK(r.code == 0);  // no clash: summary.json is not an input
  REQUIRE(fs::exists(dir / "fakepedia_mh.jsonl"));
  const auto r2 = Mgct({"dataset", "build-mh", "--base", S(dir / "fakepedia_mh.jsonl"), "--counterfactuals",
                        S(dir / "c.jsonl"), "--linking", S(dir / "l.json"), "--out", S(dir)});
  CHECK(r2.code == 3);
  CHECK(r2.err.find("overwrite") != std::string::npos);
}

TEST_CASE("weight manifest presets") {
  const auto r = Mgct({"manifest", "--variant", "llama-7b"});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["llama-7b"]["tensors"]["model.embed_tokens.weight"] == json::array({32000, 4096}));
  CHECK(Mgct({"manifest", "--variant", "gpt5"}).code == 3);
  const auto all = json::parse(Mgct({"manifest"}).out);
  CHECK(all.size() == 3);
  CHECK(all["gpt2-xl"]["config"]["n_layers"] == 48);
}

TEST_CASE("mock evaluation through the command line") {
  const auto& fx = Fixture();
  const auto dir = Scratch("eval");
  REQUIRE(Mgct({"dataset", "build-pararel", "--weights", S(fx.weights), "--pararel", S(fx.pararel), "--categories",
                S(fx.categories), "--out", S(dir / "p")})
              .code == 0);
  REQUIRE(Mgct({"dataset", "build-base", "--counterfactuals", S(dir / "p" / "counterfactual.jsonl"), "--patterns",
                S(fx.patterns), "--transcript", S(fx.transcript), "--out", S(dir / "b")})
              .code == 0);
  const auto r = Mgct({"eval", "mcq", "--dataset", S(dir / "b" / "fakepedia_base.jsonl"), "--client", "grounded",
                       "--no-timing", "--out", S(dir / "e")});
  REQUIRE(r.code == 0);
  const auto summary = mgct::io::ReadJson(dir / "e" / "summary.json");
  for (const auto& [key, v] : summary.items()) CHECK(v["accuracy"] == 1.0);
  CHECK(Mgct({"eval", "mcq", "--dataset", S(dir / "b" / "fakepedia_base.jsonl"), "--client", "psychic", "--out",
              S(dir / "x")})
            .code == 3);
}
