#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace comet::csv {

// RFC-4180 style: fields containing comma, quote, CR or LF are quoted and
// embedded quotes doubled. Comment text regularly contains all of these.
std::string escape(std::string_view field);
std::string join_row(std::span<const std::string> fields);

struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;  // first line of the record, 1-based
};

// Streaming record reader. Quoted fields may span lines; a record ends at a
// newline outside quotes. Malformed records (stray or unterminated quotes)
// are reported individually and the reader recovers at the next line, so a
// caller can apply its own bad-row budget.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  enum class Status { record, malformed, eof };

  Status next(Record& out, std::string& error);

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

}  // namespace comet::csv
