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

// Minimal safetensors container: an 8-byte little-endian header length, a
// JSON header mapping tensor names to dtype/shape/byte ranges, then the raw
// tensor bytes. F32, F16 and BF16 tensors are read and widened to float;
// files are always written as F32.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mgct {

struct NamedTensor {
  std::vector<std::size_t> shape;
  std::vector<float> values;

  std::size_t numel() const;
};

class TensorStore {
 public:
  void Put(const std::string& name, std::vector<std::size_t> shape, std::vector<float> values);
  bool Contains(const std::string& name) const { return tensors_.contains(name); }
  const NamedTensor& Get(const std::string& name) const;
  const std::map<std::string, NamedTensor>& tensors() const { return tensors_; }
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  static TensorStore Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, NamedTensor> tensors_;
  std::map<std::string, std::string> metadata_;
};

}  // namespace mgct
