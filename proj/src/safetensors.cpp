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

#include "mgct/safetensors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mgct/error.hpp"

namespace mgct {
namespace {

static_assert(std::endian::native == std::endian::little,
              "safetensors I/O assumes a little-endian host");

float HalfToFloat(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {  // subnormal
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3ffu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1f) {
    bits = sign | 0x7f800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

float Bf16ToFloat(std::uint16_t h) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
}

}  // namespace

std::size_t NamedTensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void TensorStore::Put(const std::string& name, std::vector<std::size_t> shape,
                      std::vector<float> values) {
  NamedTensor t{std::move(shape), std::move(values)};
  Check(t.numel() == t.values.size(), ErrorKind::kInvalidArgument,
        "tensor '" + name + "': value count does not match shape");
  tensors_[name] = std::move(t);
}

const NamedTensor& TensorStore::Get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) Fail(ErrorKind::kModel, "missing tensor '" + name + "'");
  return it->second;
}

TensorStore TensorStore::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kConfig, "cannot open weights file " + path.string());
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), 8);
  Check(in.good() && header_len > 0 && header_len < (1ull << 32), ErrorKind::kModel,
        "malformed safetensors header in " + path.string());
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  Check(in.good(), ErrorKind::kModel, "truncated safetensors header");
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kModel, std::string("safetensors header is not JSON: ") + e.what());
  }

  TensorStore store;
  for (auto& [name, info] : j.items()) {
    if (name == "__metadata__") {
      for (auto& [k, v] : info.items()) store.metadata_[k] = v.get<std::string>();
      continue;
    }
    const auto dtype = info.at("dtype").get<std::string>();
    auto shape = info.at("shape").get<std::vector<std::size_t>>();
    const auto offsets = info.at("data_offsets").get<std::vector<std::size_t>>();
    Check(offsets.size() == 2 && offsets[0] <= offsets[1] && offsets[1] <= blob.size(),
          ErrorKind::kModel, "tensor '" + name + "': bad data offsets");
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                          std::multiplies<>());
    const char* src = blob.data() + offsets[0];
    const std::size_t nbytes = offsets[1] - offsets[0];
    std::vector<float> values(n);
    if (dtype == "F32") {
      Check(nbytes == n * 4, ErrorKind::kModel, "tensor '" + name + "': byte size mismatch");
      std::memcpy(values.data(), src, nbytes);
    } else if (dtype == "F16" || dtype == "BF16") {
      Check(nbytes == n * 2, ErrorKind::kModel, "tensor '" + name + "': byte size mismatch");
      for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t h;
        std::memcpy(&h, src + 2 * i, 2);
        values[i] = dtype == "F16" ? HalfToFloat(h) : Bf16ToFloat(h);
      }
    } else {
      Fail(ErrorKind::kModel, "tensor '" + name + "': unsupported dtype " + dtype);
    }
    store.tensors_[name] = NamedTensor{std::move(shape), std::move(values)};
  }
  return store;
}

void TensorStore::Save(const std::filesystem::path& path) const {
  nlohmann::json header = nlohmann::json::object();
  std::size_t offset = 0;
  // std::map iteration gives a stable, sorted tensor layout.
  for (const auto& [name, t] : tensors_) {
    header[name] = {{"dtype", "F32"},
                    {"shape", t.shape},
                    {"data_offsets", {offset, offset + t.values.size() * 4}}};
    offset += t.values.size() * 4;
  }
  if (!metadata_.empty()) header["__metadata__"] = metadata_;
  std::string text = header.dump();
  while (text.size() % 8 != 0) text.push_back(' ');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kConfig, "cannot write " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : tensors_)
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * 4));
}

}  // namespace mgct
