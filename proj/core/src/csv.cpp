#include "comet/csv.hpp"

#include <istream>

namespace comet::csv {

std::string escape(std::string_view field) {
  bool needs_quotes = false;
  for (char c : field) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      needs_quotes = true;
      break;
    }
  }
  if (!needs_quotes) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join_row(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  out.push_back('\n');
  return out;
}

Reader::Status Reader::next(Record& out, std::string& error) {
  out.fields.clear();
  out.line = line_;
  error.clear();

  enum class State { field_start, unquoted, quoted, quote_seen };
  State state = State::field_start;
  std::string field;
  bool saw_any = false;
  bool bad = false;

  auto finish_field = [&] {
    out.fields.push_back(std::move(field));
    field.clear();
  };

  int ci;
  while ((ci = in_.get()) != std::istream::traits_type::eof()) {
    const char c = static_cast<char>(ci);
    if (c == '\n') ++line_;
    saw_any = true;

    if (bad) {
      // skip to physical end of line, then report
      if (c == '\n') break;
      continue;
    }

    switch (state) {
      case State::field_start:
        if (c == '"') {
          state = State::quoted;
        } else if (c == ',') {
          finish_field();
        } else if (c == '\n') {
          finish_field();
          return Status::record;
        } else if (c == '\r') {
          // swallowed; CRLF handled at '\n'
        } else {
          field.push_back(c);
          state = State::unquoted;
        }
        break;
      case State::unquoted:
        if (c == ',') {
          finish_field();
          state = State::field_start;
        } else if (c == '\n') {
          finish_field();
          return Status::record;
        } else if (c == '\r') {
          // ignore
        } else if (c == '"') {
          error = "bare quote inside unquoted field";
          bad = true;
        } else {
          field.push_back(c);
        }
        break;
      case State::quoted:
        if (c == '"') {
          state = State::quote_seen;
        } else {
          field.push_back(c);
        }
        break;
      case State::quote_seen:
        if (c == '"') {
          field.push_back('"');
          state = State::quoted;
        } else if (c == ',') {
          finish_field();
          state = State::field_start;
        } else if (c == '\n') {
          finish_field();
          return Status::record;
        } else if (c == '\r') {
          // ignore
        } else {
          error = "content after closing quote";
          bad = true;
        }
        break;
    }
  }

  if (!saw_any) return Status::eof;
  if (bad) return Status::malformed;
  if (state == State::quoted) {
    error = "unterminated quoted field";
    return Status::malformed;
  }
  // file ended without trailing newline
  finish_field();
  return Status::record;
}

}  // namespace comet::csv
