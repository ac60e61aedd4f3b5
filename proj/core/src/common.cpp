#include "comet/common.hpp"

#include <array>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace comet {

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for checksum: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf;
  while (in.read(buf.data(), buf.size()) || in.gcount() > 0) {
    h = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim_view(s);
  if (s.empty()) return std::nullopt;
  // from_chars for double is incomplete on some libstdc++ versions; strtod
  // on a bounded copy keeps this portable.
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // %.17g always round-trips; trimming via shorter forms is not worth the
  // re-parse cost here.
  return buf;
}

std::string format_fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::optional<int> parse_iso8601_year(std::string_view ts) {
  ts = trim_view(ts);
  // YYYY-MM-DD with anything (T..., space...) allowed after the date part.
  if (ts.size() < 10) return std::nullopt;
  for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (ts[static_cast<std::size_t>(i)] < '0' || ts[static_cast<std::size_t>(i)] > '9')
      return std::nullopt;
  if (ts[4] != '-' || ts[7] != '-') return std::nullopt;
  const int year = (ts[0] - '0') * 1000 + (ts[1] - '0') * 100 + (ts[2] - '0') * 10 + (ts[3] - '0');
  const int month = (ts[5] - '0') * 10 + (ts[6] - '0');
  const int day = (ts[8] - '0') * 10 + (ts[9] - '0');
  if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
  return year;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write: " + path);
}

}  // namespace comet
