/*
 * Copyright 2026 The tfsep Authors
 *
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

// Weights bundle: one file holding named float32 tensors.
//
//   bytes 0..7    magic "TFSEPWB1"
//   bytes 8..15   header length H, uint64 little-endian
//   next H bytes  UTF-8 JSON header:
//                   {"format": "tfsep.weights", "version": 1, "meta": {...},
//                    "entries": [{"name", "shape": [n,c,f,t], "offset", "count"}]}
//   remainder     float32 little-endian payload; offset/count are in elements

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tfsep/layers.hpp"
#include "tfsep/tensor.hpp"

namespace tfsep {

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BundleEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Bundle {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<BundleEntry> entries;

  const BundleEntry* find(std::string_view name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  void add(std::string name, Shape shape, std::vector<float> values) {
    if (values.size() != shape.numel()) {
      throw BundleError("bundle entry '" + name + "' has " + std::to_string(values.size()) +
                        " values for shape " + shape.str());
    }
    if (find(name)) throw BundleError("duplicate bundle entry '" + name + "'");
    entries.push_back({std::move(name), shape, std::move(values)});
  }

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    const auto d = t.data();
    add(name, t.shape(), std::vector<float>(d.begin(), d.end()));
  }
};

inline constexpr char kBundleMagic[8] = {'T', 'F', 'S', 'E', 'P', 'W', 'B', '1'};

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace detail

inline std::string encode_bundle(const Bundle& b) {
  nlohmann::json header{{"format", "tfsep.weights"}, {"version", 1}, {"meta", b.meta}};
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : b.entries) {
    entries.push_back({{"name", e.name},
                       {"shape", {e.shape.n, e.shape.c, e.shape.f, e.shape.t}},
                       {"offset", offset},
                       {"count", e.values.size()}});
    offset += e.values.size();
  }
  header["entries"] = std::move(entries);
  const std::string text = header.dump();

  std::string out(kBundleMagic, 8);
  std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += text;
  out.reserve(out.size() + offset * 4);
  for (const auto& e : b.entries) {
    for (float v : e.values) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      u = detail::to_le(u);
      out.append(reinterpret_cast<const char*>(&u), 4);
    }
  }
  return out;
}

inline Bundle decode_bundle(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kBundleMagic, 8) != 0) {
    throw BundleError("not a weights bundle (bad magic)");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  if (16 + len > bytes.size()) throw BundleError("weights bundle header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw BundleError(std::string("weights bundle header is not valid JSON: ") + e.what());
  }
  if (header.value("format", "") != "tfsep.weights") throw BundleError("unknown bundle format");
  if (header.value("version", 0) != 1) throw BundleError("unsupported bundle version");

  const unsigned char* payload = bytes.data() + 16 + len;
  const std::size_t payload_floats = (bytes.size() - 16 - len) / 4;
  Bundle b;
  b.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("entries")) {
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 4) throw BundleError("bundle entry shape must have rank 4");
    const Shape s{shape[0], shape[1], shape[2], shape[3]};
    const auto off = e.at("offset").get<std::size_t>();
    const auto count = e.at("count").get<std::size_t>();
    if (count != s.numel() || off + count > payload_floats) {
      throw BundleError("bundle entry '" + e.at("name").get<std::string>() + "' out of bounds");
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u;
      std::memcpy(&u, payload + (off + i) * 4, 4);
      u = detail::to_le(u);
      std::memcpy(&values[i], &u, 4);
    }
    b.entries.push_back({e.at("name").get<std::string>(), s, std::move(values)});
  }
  return b;
}

inline void save_bundle(const std::filesystem::path& path, const Bundle& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BundleError("cannot write " + path.string());
  const std::string bytes = encode_bundle(b);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw BundleError("write failed for " + path.string());
}

inline Bundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_bundle(bytes);
}

template <typename T>
void add_tensors(Bundle& b, const std::vector<NamedTensor<T>>& tensors, const std::string& prefix = "") {
  for (const auto& nt : tensors) b.add(prefix + nt.name, nt.tensor);
}

/// Copies bundle values into every target by name. Missing names or shape
/// mismatches are errors.
template <typename T>
void restore_tensors(const Bundle& b, std::vector<NamedTensor<T>>& targets, const std::string& prefix = "") {
  for (auto& nt : targets) {
    const BundleEntry* e = b.find(prefix + nt.name);
    if (!e) throw BundleError("bundle is missing tensor '" + prefix + nt.name + "'");
    if (!(e->shape == nt.tensor.shape())) {
      throw BundleError("bundle tensor '" + e->name + "' has shape " + e->shape.str() +
                        ", expected " + nt.tensor.shape().str());
    }
    auto dst = nt.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e->values[i]);
  }
}

}  // namespace tfsep
