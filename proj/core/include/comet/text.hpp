#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace comet {

enum class DropReason { non_english, empty_after_clean };

std::string_view drop_reason_name(DropReason r);

// Tokens are lowercase ASCII drawn from [a-z0-9']; dropped_reason is set
// exactly when the token list is empty.
struct TokenizedDoc {
  std::string comment_id;
  std::vector<std::string> tokens;
  std::optional<DropReason> dropped_reason;
};

// The bundled list of 1,000 common English function/content words backing
// the language heuristic; also reused as the stoplist for word-frequency
// reports. One lowercase word per line.
class EnglishLexicon {
 public:
  static const EnglishLexicon& builtin();
  static EnglishLexicon from_file(const std::string& path);
  static EnglishLexicon from_text(std::string_view text);

  bool contains(std::string_view word) const {
    return words_.find(std::string(word)) != words_.end();
  }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

// Deterministic language gate. Provisionally tokenizes; with 3+ tokens the
// text is English iff at least 30% of tokens appear in the lexicon, with
// fewer the fallback is an 80% ASCII-character ratio over the raw text.
bool is_english(std::string_view text, const EnglishLexicon& lexicon);
bool is_english(std::string_view text);  // builtin lexicon

// Lowercased printable-ASCII normal form: a compact Unicode compatibility
// fold (fullwidth forms, typographic apostrophes, ligatures), removal of
// every remaining non-ASCII code point (emoji included), punctuation to
// spaces except apostrophes kept strictly inside words, whitespace collapsed
// and trimmed. Idempotent; output matches ^[a-z0-9' ]*$.
std::string normalize(std::string_view text);

// Splits normalized text on single spaces. Empty input -> no tokens.
std::vector<std::string> tokenize(std::string_view normalized);

// Full per-comment path: language gate, then normalize+tokenize; sets
// dropped_reason when nothing survives.
TokenizedDoc preprocess_comment(std::string comment_id, std::string_view text,
                                const EnglishLexicon& lexicon);

}  // namespace comet
