// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ief::io {

/// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);
std::uint64_t parse_u64(std::string_view s);

/// Fixed four-decimal formatting used in reports.
std::string fixed4(double v);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, char sep);

/// Ordered "key=value" lines.
class KeyValues {
 public:
  void set(std::string key, std::string value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws IoError when missing
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_string() const;
  static KeyValues parse(std::string_view text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);
std::vector<char> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const char> bytes);

/// Little-endian float32 encoding regardless of host byte order.
void append_f32le(std::vector<char>& out, std::span<const float> values);
void read_f32le(std::span<const char> in, std::span<float> values);

std::uint32_t crc32(std::span<const char> bytes);
std::string hex32(std::uint32_t v);

}  // namespace ief::io
