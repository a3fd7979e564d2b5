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

// Command-line front end. Every command that writes files stages them in a
// sibling directory and moves them into --out only after success, together
// with a manifest.json describing the run.

#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "mgct/error.hpp"

namespace mgct::cli {

inline constexpr std::string_view kVersion = "0.1.0";

// Exit statuses: 0 success, 1 unexpected failure, otherwise the error kind
// (2 usage, 3 config, 4 data, 5 model, 6 transport, 7 degenerate).
int ExitCode(ErrorKind kind);

// `args` excludes the program name.
int Dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace mgct::cli
