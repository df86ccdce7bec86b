#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tokencast::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written natively");

inline void append_f64(std::string& out, std::span<const double> values) {
  const auto* p = reinterpret_cast<const char*>(values.data());
  out.append(p, values.size() * sizeof(double));
}

inline void append_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  std::memcpy(&v, in.data() + at, sizeof v);
  return v;
}

inline std::vector<double> read_f64(const std::string& in, std::size_t at, std::size_t count) {
  std::vector<double> v(count);
  std::memcpy(v.data(), in.data() + at, count * sizeof(double));
  return v;
}

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace tokencast::io
