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

// Small file and text helpers shared by the modules and the CLI.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mgct::io {

// Shortest round-trip-safe formatting ("%.17g"), locale independent.
std::string FormatDouble(double v);
double ParseDouble(std::string_view s);

std::vector<std::string> SplitCsvLine(std::string_view line);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view contents);

// One JSON value per non-empty line.
std::vector<nlohmann::json> ReadJsonLines(const std::filesystem::path& path);
nlohmann::json ReadJson(const std::filesystem::path& path);

std::string Sha256Hex(std::string_view data);
std::string Sha256File(const std::filesystem::path& path);

}  // namespace mgct::io
