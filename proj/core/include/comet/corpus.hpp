#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "comet/categories.hpp"
#include "comet/csv.hpp"

namespace comet {

// One user comment; the unit of classification.
struct Comment {
  std::string id;
  std::string video_id;
  std::string text;  // UTF-8, raw
  std::int64_t like_count = 0;
  std::int64_t reply_count = 0;
  std::optional<std::string> published_at;  // ISO-8601 when present
};

// Ordered, disjoint audience age bins. The standard set is
// {3-5, 6-8, 9-12, 13-17, 17+}; a config may supply different labels.
// Group identity is the index into this table.
class AgeGroups {
 public:
  explicit AgeGroups(std::vector<std::string> labels);

  static const AgeGroups& standard();

  std::optional<int> index_of(std::string_view label) const;
  const std::string& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
};

// Indices into the standard AgeGroups table.
inline constexpr int kAge3to5 = 0;
inline constexpr int kAge6to8 = 1;
inline constexpr int kAge9to12 = 2;
inline constexpr int kAge13to17 = 3;
inline constexpr int kAge17plus = 4;

// Per-video statistics; the join key for exposure analysis.
struct VideoMeta {
  std::string video_id;
  std::string channel_name;
  std::string title;
  std::string published_at;  // ISO-8601 date
  std::int64_t view_count = 0;
  std::int64_t like_count = 0;
  std::int64_t dislike_count = 0;
  std::int64_t comment_count = 0;
  int age_group = 0;  // index into the AgeGroups used at load
};

struct LabeledComment {
  Comment comment;
  LabelVector labels;
};

struct LabeledDataset {
  std::vector<LabeledComment> records;
  std::string source;  // e.g. "wikipedia", "youtube-annotated"
};

enum class FileFormat { csv, jsonl };

std::optional<FileFormat> file_format_from_name(std::string_view name);
// .jsonl/.json -> jsonl, anything else -> csv
FileFormat infer_file_format(const std::string& path);

// Accumulated per-load diagnostics. Malformed rows are tolerated up to 1% of
// the rows seen; beyond that the load aborts, listing the offending lines.
struct LoadReport {
  std::size_t rows_seen = 0;    // data rows consumed (well-formed or not)
  std::size_t rows_loaded = 0;  // rows turned into records
  std::vector<std::pair<std::size_t, std::string>> malformed;  // line, reason
  std::size_t hierarchy_violations = 0;  // subcategory set without toxic
  std::size_t duplicate_ids = 0;
  std::size_t rejected_rows = 0;  // e.g. unknown age-group token
  std::vector<std::string> warnings;

  double malformed_fraction() const {
    return rows_seen == 0 ? 0.0
                          : static_cast<double>(malformed.size()) / static_cast<double>(rows_seen);
  }
};

struct LabeledLoadResult {
  LabeledDataset dataset;
  LoadReport report;
};

// Loads and validates a labeled comment file. `safe` is recomputed from the
// category flags, never read from the file. Duplicate ids: last wins, with a
// warning. Throws on missing file, empty dataset, or >1% malformed rows.
LabeledLoadResult load_labeled_comments(const std::string& path, FileFormat format,
                                        std::string source_tag = {});

// Streaming comment source; holds one record at a time so peak memory is
// independent of file size. The malformed-row budget is evaluated when the
// stream is exhausted.
class CommentReader {
 public:
  CommentReader(const std::string& path, FileFormat format);
  ~CommentReader();

  CommentReader(const CommentReader&) = delete;
  CommentReader& operator=(const CommentReader&) = delete;

  // Yields comments in file order; nullopt at end of stream. Throws at end
  // if more than 1% of the rows were malformed.
  std::optional<Comment> next();

  const LoadReport& report() const { return report_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  LoadReport report_;
};

using VideoTable = std::unordered_map<std::string, VideoMeta>;

struct VideoLoadResult {
  VideoTable videos;
  LoadReport report;
};

// One VideoMeta per video_id; duplicates last-wins with a warning, rows with
// an unknown age-group token are rejected with a warning.
VideoLoadResult load_video_metadata(const std::string& path, FileFormat format,
                                    const AgeGroups& groups = AgeGroups::standard());

// Deterministic shuffle split. The first part receives round(fraction * N)
// records; parts are disjoint and exhaustive. Throws unless 0 < fraction < 1.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& dataset,
                                                        double fraction, std::uint64_t seed);

struct LabelCounts {
  std::array<std::size_t, kCategoryCount> positives{};
  std::size_t safe = 0;
  std::size_t total = 0;
};

LabelCounts count_labels(const LabeledDataset& dataset);

}  // namespace comet
