#include "comet/text.hpp"

#include <cstdint>

#include "comet/common.hpp"
#include "comet/english_words.inc"

namespace comet {

namespace {

// Decodes the UTF-8 sequence starting at `i`; advances `i` past it. Invalid
// bytes decode as U+FFFD one byte at a time, so the function is total.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  const unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + static_cast<std::size_t>(len) > s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const unsigned char b = byte(i + static_cast<std::size_t>(k));
    if ((b & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += static_cast<std::size_t>(len);
  // overlong/surrogate/out-of-range forms are all treated as invalid
  if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0xFFFD;
  if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000))
    return 0xFFFD;
  return cp;
}

// Compact compatibility fold for the code points that matter once everything
// non-ASCII is dropped anyway: fullwidth forms, Unicode spaces, typographic
// apostrophes, fi/fl ligatures. Returns the ASCII replacement, empty when
// the code point has none.
std::string_view fold_compat(char32_t cp, char* scratch) {
  if (cp >= 0xFF01 && cp <= 0xFF5E) {  // fullwidth ASCII block
    scratch[0] = static_cast<char>(cp - 0xFEE0);
    return {scratch, 1};
  }
  switch (cp) {
    case 0x00A0:  // no-break space
    case 0x2007:
    case 0x202F:
    case 0x3000:  // ideographic space
      return " ";
    case 0x2018:
    case 0x2019:
    case 0x02BC:
      return "'";
    case 0xFB01:
      return "fi";
    case 0xFB02:
      return "fl";
    default:
      break;
  }
  if (cp >= 0x2000 && cp <= 0x200A) return " ";  // en/em/thin spaces
  return {};
}

bool is_ascii_alnum(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

// Maps text to a stream over {lowercase alnum, '\'', ' '}; everything the
// normal form forgets is already gone after this pass.
std::string map_code_points(std::string_view text) {
  std::string mapped;
  mapped.reserve(text.size());
  char scratch[1];

  auto push_ascii = [&](char c) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f') {
      mapped.push_back(' ');
    } else if (is_ascii_alnum(c)) {
      mapped.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    } else if (c == '\'') {
      mapped.push_back('\'');
    } else if (c >= 0x21 && c <= 0x7E) {
      mapped.push_back(' ');  // punctuation and symbols separate words
    }
    // remaining controls and DEL are dropped
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = decode_utf8(text, i);
    if (cp < 0x80) {
      push_ascii(static_cast<char>(cp));
      continue;
    }
    for (char c : fold_compat(cp, scratch)) push_ascii(c);
    // non-ASCII with no fold (emoji, accented letters, other scripts) is
    // removed without leaving a space
  }
  return mapped;
}

}  // namespace

std::string_view drop_reason_name(DropReason r) {
  switch (r) {
    case DropReason::non_english: return "non_english";
    case DropReason::empty_after_clean: return "empty_after_clean";
  }
  return "unknown";
}

std::string normalize(std::string_view text) {
  const std::string mapped = map_code_points(text);

  // keep apostrophes only between alphanumerics
  std::string kept;
  kept.reserve(mapped.size());
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    const char c = mapped[i];
    if (c == '\'') {
      const bool left = i > 0 && is_ascii_alnum(mapped[i - 1]);
      const bool right = i + 1 < mapped.size() && is_ascii_alnum(mapped[i + 1]);
      if (left && right) kept.push_back(c);
    } else {
      kept.push_back(c);
    }
  }

  std::string out;
  out.reserve(kept.size());
  for (char c : kept) {
    if (c == ' ') {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> tokenize(std::string_view normalized) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < normalized.size()) {
    auto end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > start) tokens.emplace_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

const EnglishLexicon& EnglishLexicon::builtin() {
  static const EnglishLexicon lexicon = from_text(detail::kBuiltinEnglishWords);
  return lexicon;
}

EnglishLexicon EnglishLexicon::from_file(const std::string& path) {
  return from_text(read_text_file(path));
}

EnglishLexicon EnglishLexicon::from_text(std::string_view text) {
  EnglishLexicon lexicon;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto word = trim_view(text.substr(start, end - start));
    if (!word.empty()) lexicon.words_.insert(to_lower_ascii(word));
    if (end == text.size()) break;
    start = end + 1;
  }
  return lexicon;
}

bool is_english(std::string_view text, const EnglishLexicon& lexicon) {
  const auto tokens = tokenize(normalize(text));
  if (tokens.size() >= 3) {
    std::size_t known = 0;
    for (const auto& token : tokens)
      if (lexicon.contains(token)) ++known;
    return static_cast<double>(known) >= 0.30 * static_cast<double>(tokens.size());
  }
  // short-text fallback: character-level ASCII ratio over the raw input
  std::size_t total = 0, ascii = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = decode_utf8(text, i);
    ++total;
    if (cp < 0x80) ++ascii;
  }
  if (total == 0) return true;  // empty text is dropped later as empty_after_clean
  return static_cast<double>(ascii) >= 0.80 * static_cast<double>(total);
}

bool is_english(std::string_view text) { return is_english(text, EnglishLexicon::builtin()); }

TokenizedDoc preprocess_comment(std::string comment_id, std::string_view text,
                                const EnglishLexicon& lexicon) {
  TokenizedDoc doc;
  doc.comment_id = std::move(comment_id);
  if (!is_english(text, lexicon)) {
    doc.dropped_reason = DropReason::non_english;
    return doc;
  }
  doc.tokens = tokenize(normalize(text));
  if (doc.tokens.empty()) doc.dropped_reason = DropReason::empty_after_clean;
  return doc;
}

}  // namespace comet
