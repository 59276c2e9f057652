/* Copyright 2026 The sifuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SIFUSE_TENSOR_IO_HPP_
#define SIFUSE_TENSOR_IO_HPP_

// Binary tensor dump format, little-endian throughout:
//   char[4] "SIFT" | u32 rank | u32 dims[rank] | f64 payload (row-major)

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/numerics.hpp"

namespace sifuse {

namespace tensor_io_detail {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(std::span<const unsigned char> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("tensor: truncated input");
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace tensor_io_detail

inline std::vector<unsigned char> encode_tensor(const FeatureGrid& grid) {
  using tensor_io_detail::put_le;
  std::vector<unsigned char> out;
  out.reserve(4 + 4 * (grid.rank() + 1) + 8 * grid.size());
  for (char c : {'S', 'I', 'F', 'T'}) out.push_back(static_cast<unsigned char>(c));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.rank()));
  for (std::size_t d : grid.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (double v : grid.data()) put_le<double>(out, v);
  return out;
}

/// Axis names are not stored; decoded axes are named d0, d1, ...
inline FeatureGrid decode_tensor(std::span<const unsigned char> bytes) {
  using tensor_io_detail::get_le;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "SIFT", 4) != 0) {
    throw IoError("tensor: bad magic");
  }
  std::size_t pos = 4;
  const auto rank = get_le<std::uint32_t>(bytes, pos);
  std::vector<Axis> axes;
  std::size_t n = rank == 0 ? 0 : 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = get_le<std::uint32_t>(bytes, pos);
    axes.push_back({"d" + std::to_string(i), d, std::nullopt});
    n *= d;
  }
  if (bytes.size() - pos != n * 8) throw IoError("tensor: payload length does not match header");
  std::vector<double> data(n);
  for (auto& v : data) v = get_le<double>(bytes, pos);
  return FeatureGrid(std::move(axes), std::move(data));
}

inline void write_tensor(const std::filesystem::path& path, const FeatureGrid& grid) {
  const auto bytes = encode_tensor(grid);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline FeatureGrid read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

// A plain vector is dumped as a rank-1 tensor.
inline FeatureGrid vector_grid(std::span<const double> v, const char* name = "C") {
  return FeatureGrid({Axis{name, v.size(), std::nullopt}}, std::vector<double>(v.begin(), v.end()));
}

}  // namespace sifuse

#endif  // SIFUSE_TENSOR_IO_HPP_
