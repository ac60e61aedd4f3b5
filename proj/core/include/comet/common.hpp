#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace comet {

// Thrown on unrecoverable input problems (missing files, schema violations,
// too many malformed rows). Callers that can continue collect warnings in a
// report instead of throwing.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// 64-bit FNV-1a. Used for model content checksums and input manifests; not
// cryptographic, just a stable fingerprint.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path);

inline std::string_view trim_view(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim_view(s);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s);

// Shortest decimal form that round-trips an IEEE double exactly.
std::string format_double(double v);
// Fixed six decimals, the precision used by report and prediction files.
std::string format_fixed6(double v);

// Minimal ISO-8601 check: YYYY-MM-DD with optional time suffix. Only the
// calendar date is interpreted; returns the year when the date part is
// well formed.
std::optional<int> parse_iso8601_year(std::string_view ts);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace comet
