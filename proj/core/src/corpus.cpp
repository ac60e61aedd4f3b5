#include "comet/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "comet/common.hpp"
#include "comet/rng.hpp"

namespace comet {

namespace {

using nlohmann::json;

constexpr std::size_t kMaxStoredWarnings = 100;
constexpr double kMalformedBudget = 0.01;  // abort when strictly exceeded

void add_warning(LoadReport& report, std::string msg) {
  if (report.warnings.size() < kMaxStoredWarnings) {
    report.warnings.push_back(std::move(msg));
  } else if (report.warnings.size() == kMaxStoredWarnings) {
    report.warnings.push_back("(further warnings suppressed)");
  }
}

[[noreturn]] void throw_malformed_budget(const std::string& path, const LoadReport& report) {
  std::ostringstream os;
  os << path << ": " << report.malformed.size() << " of " << report.rows_seen
     << " rows malformed (>1%):";
  std::size_t shown = 0;
  for (const auto& [line, reason] : report.malformed) {
    if (shown++ == 10) {
      os << " ...";
      break;
    }
    os << " line " << line << ": " << reason << ";";
  }
  throw Error(os.str());
}

void check_malformed_budget(const std::string& path, const LoadReport& report) {
  if (!report.malformed.empty() && report.malformed_fraction() > kMalformedBudget)
    throw_malformed_budget(path, report);
}

// ---- CSV header handling ----------------------------------------------

struct CommentColumns {
  int id = -1, video_id = -1, text = -1, like_count = -1, reply_count = -1;
  int published_at = -1;  // optional
  std::array<int, kCategoryCount> flags{-1, -1, -1, -1, -1};
  std::size_t width = 0;
};

CommentColumns map_comment_header(const csv::Record& header, bool labeled,
                                  const std::string& path, LoadReport& report) {
  CommentColumns cols;
  cols.width = header.fields.size();
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    const std::string name = to_lower_ascii(trim_view(header.fields[i]));
    const int idx = static_cast<int>(i);
    if (name == "id") cols.id = idx;
    else if (name == "video_id") cols.video_id = idx;
    else if (name == "text") cols.text = idx;
    else if (name == "like_count") cols.like_count = idx;
    else if (name == "reply_count") cols.reply_count = idx;
    else if (name == "published_at") cols.published_at = idx;
    else if (auto c = category_from_name(name)) cols.flags[static_cast<int>(*c)] = idx;
    else add_warning(report, path + ": ignoring unknown column '" + name + "'");
  }
  auto require = [&](int idx, const char* name) {
    if (idx < 0) throw Error(path + ": header is missing required column '" + std::string(name) + "'");
  };
  require(cols.id, "id");
  require(cols.video_id, "video_id");
  require(cols.text, "text");
  require(cols.like_count, "like_count");
  require(cols.reply_count, "reply_count");
  if (labeled)
    for (Category c : kAllCategories)
      require(cols.flags[static_cast<int>(c)], category_name(c).data());
  return cols;
}

std::optional<std::string> parse_flag(std::string_view field, bool& out) {
  const auto t = trim_view(field);
  if (t == "0") { out = false; return std::nullopt; }
  if (t == "1") { out = true; return std::nullopt; }
  return "flag must be 0 or 1, got '" + std::string(t) + "'";
}

std::optional<std::string> parse_count(std::string_view field, const char* name,
                                       std::int64_t& out) {
  const auto v = parse_int(field);
  if (!v) return std::string(name) + " is not an integer";
  if (*v < 0) return std::string(name) + " is negative";
  out = *v;
  return std::nullopt;
}

// Returns an error description, or nullopt on success.
std::optional<std::string> parse_comment_record(const csv::Record& rec, const CommentColumns& cols,
                                                bool labeled, Comment& comment,
                                                LabelVector& labels) {
  if (rec.fields.size() != cols.width)
    return "expected " + std::to_string(cols.width) + " fields, got " +
           std::to_string(rec.fields.size());
  comment.id = std::string(trim_view(rec.fields[static_cast<std::size_t>(cols.id)]));
  if (comment.id.empty()) return "empty id";
  comment.video_id = std::string(trim_view(rec.fields[static_cast<std::size_t>(cols.video_id)]));
  comment.text = rec.fields[static_cast<std::size_t>(cols.text)];
  if (auto err = parse_count(rec.fields[static_cast<std::size_t>(cols.like_count)], "like_count",
                             comment.like_count))
    return err;
  if (auto err = parse_count(rec.fields[static_cast<std::size_t>(cols.reply_count)], "reply_count",
                             comment.reply_count))
    return err;
  comment.published_at.reset();
  if (cols.published_at >= 0) {
    const auto ts = trim_view(rec.fields[static_cast<std::size_t>(cols.published_at)]);
    if (!ts.empty()) {
      if (!parse_iso8601_year(ts)) return "published_at is not an ISO-8601 timestamp";
      comment.published_at = std::string(ts);
    }
  }
  if (labeled) {
    for (Category c : kAllCategories) {
      bool flag = false;
      if (auto err = parse_flag(rec.fields[static_cast<std::size_t>(cols.flags[static_cast<int>(c)])], flag))
        return std::string(category_name(c)) + ": " + *err;
      labels[c] = flag;
    }
  }
  return std::nullopt;
}

std::optional<std::string> parse_comment_json(const std::string& line, bool labeled,
                                              Comment& comment, LabelVector& labels) {
  const json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return "invalid JSON object";

  auto str = [&](const char* key, std::string& out) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      return "missing or non-string key '" + std::string(key) + "'";
    out = it->get<std::string>();
    return std::nullopt;
  };
  auto count = [&](const char* key, std::int64_t& out) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer())
      return "missing or non-integer key '" + std::string(key) + "'";
    out = it->get<std::int64_t>();
    if (out < 0) return std::string(key) + " is negative";
    return std::nullopt;
  };

  if (auto err = str("id", comment.id)) return err;
  comment.id = std::string(trim_view(comment.id));
  if (comment.id.empty()) return "empty id";
  if (auto err = str("video_id", comment.video_id)) return err;
  if (auto err = str("text", comment.text)) return err;
  if (auto err = count("like_count", comment.like_count)) return err;
  if (auto err = count("reply_count", comment.reply_count)) return err;

  comment.published_at.reset();
  if (auto it = j.find("published_at"); it != j.end() && it->is_string()) {
    const std::string ts = it->get<std::string>();
    if (!ts.empty()) {
      if (!parse_iso8601_year(ts)) return "published_at is not an ISO-8601 timestamp";
      comment.published_at = ts;
    }
  }

  if (labeled) {
    for (Category c : kAllCategories) {
      auto it = j.find(std::string(category_name(c)));
      if (it == j.end()) return "missing key '" + std::string(category_name(c)) + "'";
      if (it->is_boolean()) {
        labels[c] = it->get<bool>();
      } else if (it->is_number_integer()) {
        const auto v = it->get<std::int64_t>();
        if (v != 0 && v != 1) return std::string(category_name(c)) + " must be 0 or 1";
        labels[c] = v == 1;
      } else {
        return std::string(category_name(c)) + " must be 0/1 or boolean";
      }
    }
  }
  return std::nullopt;
}

}  // namespace

// ---- AgeGroups ---------------------------------------------------------

AgeGroups::AgeGroups(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw ConfigError("age-group table must not be empty");
  std::set<std::string> seen;
  for (const auto& label : labels_) {
    if (label.empty()) throw ConfigError("age-group label must not be empty");
    if (!seen.insert(label).second)
      throw ConfigError("duplicate age-group label '" + label + "'");
  }
}

const AgeGroups& AgeGroups::standard() {
  static const AgeGroups groups({"3-5", "6-8", "9-12", "13-17", "17+"});
  return groups;
}

std::optional<int> AgeGroups::index_of(std::string_view label) const {
  const auto t = trim_view(label);
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == t) return static_cast<int>(i);
  return std::nullopt;
}

std::optional<FileFormat> file_format_from_name(std::string_view name) {
  if (name == "csv") return FileFormat::csv;
  if (name == "jsonl") return FileFormat::jsonl;
  return std::nullopt;
}

FileFormat infer_file_format(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos) {
    const auto ext = to_lower_ascii(std::string_view(path).substr(dot + 1));
    if (ext == "jsonl" || ext == "json" || ext == "ndjson") return FileFormat::jsonl;
  }
  return FileFormat::csv;
}

// ---- streaming reader --------------------------------------------------

struct CommentReader::Impl {
  std::string path;
  FileFormat format;
  bool labeled = false;
  std::ifstream in;
  std::optional<csv::Reader> csv_reader;
  CommentColumns cols;
  std::size_t jsonl_line = 0;
  bool exhausted = false;

  Impl(const std::string& p, FileFormat f, bool lab, LoadReport& report)
      : path(p), format(f), labeled(lab), in(p, std::ios::binary) {
    if (!in) throw IoError("cannot open comment file: " + p);
    if (format == FileFormat::csv) {
      csv_reader.emplace(in);
      csv::Record header;
      std::string error;
      const auto status = csv_reader->next(header, error);
      if (status == csv::Reader::Status::eof)
        throw Error(path + ": missing header row");
      if (status == csv::Reader::Status::malformed)
        throw Error(path + ": malformed header: " + error);
      cols = map_comment_header(header, labeled, path, report);
    }
  }

  // One well-formed row, or nullopt at end of input. Malformed rows are
  // recorded and skipped.
  std::optional<std::pair<Comment, LabelVector>> next_row(LoadReport& report) {
    for (;;) {
      Comment comment;
      LabelVector labels;
      if (format == FileFormat::csv) {
        csv::Record rec;
        std::string error;
        const auto status = csv_reader->next(rec, error);
        if (status == csv::Reader::Status::eof) return std::nullopt;
        ++report.rows_seen;
        if (status == csv::Reader::Status::malformed) {
          report.malformed.emplace_back(rec.line, error);
          continue;
        }
        if (auto err = parse_comment_record(rec, cols, labeled, comment, labels)) {
          report.malformed.emplace_back(rec.line, *err);
          continue;
        }
      } else {
        std::string line;
        for (;;) {
          if (!std::getline(in, line)) return std::nullopt;
          ++jsonl_line;
          if (!trim_view(line).empty()) break;  // blank lines are not rows
        }
        ++report.rows_seen;
        if (auto err = parse_comment_json(line, labeled, comment, labels)) {
          report.malformed.emplace_back(jsonl_line, *err);
          continue;
        }
      }
      ++report.rows_loaded;
      return std::make_pair(std::move(comment), labels);
    }
  }
};

CommentReader::CommentReader(const std::string& path, FileFormat format)
    : impl_(std::make_unique<Impl>(path, format, /*labeled=*/false, report_)) {}

CommentReader::~CommentReader() = default;

std::optional<Comment> CommentReader::next() {
  if (impl_->exhausted) return std::nullopt;
  auto row = impl_->next_row(report_);
  if (!row) {
    impl_->exhausted = true;
    if (report_.rows_seen == 0)
      add_warning(report_, impl_->path + ": empty comment stream");
    check_malformed_budget(impl_->path, report_);
    return std::nullopt;
  }
  return std::move(row->first);
}

// ---- labeled loader ----------------------------------------------------

LabeledLoadResult load_labeled_comments(const std::string& path, FileFormat format,
                                        std::string source_tag) {
  LabeledLoadResult result;
  result.dataset.source = source_tag.empty() ? path : std::move(source_tag);

  CommentReader::Impl impl(path, format, /*labeled=*/true, result.report);
  std::unordered_map<std::string, std::size_t> index_by_id;

  while (auto row = impl.next_row(result.report)) {
    auto& [comment, labels] = *row;
    if (labels.violates_hierarchy()) ++result.report.hierarchy_violations;
    auto [it, inserted] = index_by_id.try_emplace(comment.id, result.dataset.records.size());
    if (inserted) {
      result.dataset.records.push_back({std::move(comment), labels});
    } else {
      ++result.report.duplicate_ids;
      add_warning(result.report, path + ": duplicate id '" + comment.id + "', keeping last");
      result.dataset.records[it->second] = {std::move(comment), labels};
    }
  }

  check_malformed_budget(path, result.report);
  if (result.dataset.records.empty()) throw Error(path + ": empty dataset");
  if (result.report.hierarchy_violations > 0)
    add_warning(result.report,
                path + ": " + std::to_string(result.report.hierarchy_violations) +
                    " rows have a subcategory flag without toxic");
  return result;
}

// ---- video metadata ----------------------------------------------------

namespace {

struct VideoColumns {
  int video_id = -1, channel_name = -1, title = -1, published_at = -1;
  int view_count = -1, like_count = -1, dislike_count = -1, comment_count = -1;
  int age_group = -1;
  std::size_t width = 0;
};

VideoColumns map_video_header(const csv::Record& header, const std::string& path,
                              LoadReport& report) {
  VideoColumns cols;
  cols.width = header.fields.size();
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    const std::string name = to_lower_ascii(trim_view(header.fields[i]));
    const int idx = static_cast<int>(i);
    if (name == "video_id") cols.video_id = idx;
    else if (name == "channel_name") cols.channel_name = idx;
    else if (name == "title") cols.title = idx;
    else if (name == "published_at") cols.published_at = idx;
    else if (name == "view_count") cols.view_count = idx;
    else if (name == "like_count") cols.like_count = idx;
    else if (name == "dislike_count") cols.dislike_count = idx;
    else if (name == "comment_count") cols.comment_count = idx;
    else if (name == "age_group") cols.age_group = idx;
    else add_warning(report, path + ": ignoring unknown column '" + name + "'");
  }
  auto require = [&](int idx, const char* name) {
    if (idx < 0) throw Error(path + ": header is missing required column '" + std::string(name) + "'");
  };
  require(cols.video_id, "video_id");
  require(cols.channel_name, "channel_name");
  require(cols.title, "title");
  require(cols.published_at, "published_at");
  require(cols.view_count, "view_count");
  require(cols.like_count, "like_count");
  require(cols.dislike_count, "dislike_count");
  require(cols.comment_count, "comment_count");
  require(cols.age_group, "age_group");
  return cols;
}

// Parse one row into `video` and `age_token`; returns error text on failure.
std::optional<std::string> parse_video_record(const csv::Record& rec, const VideoColumns& cols,
                                              VideoMeta& video, std::string& age_token) {
  if (rec.fields.size() != cols.width)
    return "expected " + std::to_string(cols.width) + " fields, got " +
           std::to_string(rec.fields.size());
  auto field = [&](int idx) -> const std::string& {
    return rec.fields[static_cast<std::size_t>(idx)];
  };
  video.video_id = std::string(trim_view(field(cols.video_id)));
  if (video.video_id.empty()) return "empty video_id";
  video.channel_name = field(cols.channel_name);
  video.title = field(cols.title);
  const auto ts = trim_view(field(cols.published_at));
  if (!ts.empty() && !parse_iso8601_year(ts)) return "published_at is not an ISO-8601 date";
  video.published_at = std::string(ts);
  if (auto err = parse_count(field(cols.view_count), "view_count", video.view_count)) return err;
  if (auto err = parse_count(field(cols.like_count), "like_count", video.like_count)) return err;
  if (auto err = parse_count(field(cols.dislike_count), "dislike_count", video.dislike_count))
    return err;
  if (auto err = parse_count(field(cols.comment_count), "comment_count", video.comment_count))
    return err;
  age_token = std::string(trim_view(field(cols.age_group)));
  return std::nullopt;
}

std::optional<std::string> parse_video_json(const std::string& line, VideoMeta& video,
                                            std::string& age_token) {
  const json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return "invalid JSON object";
  auto str = [&](const char* key, std::string& out) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      return "missing or non-string key '" + std::string(key) + "'";
    out = it->get<std::string>();
    return std::nullopt;
  };
  auto count = [&](const char* key, std::int64_t& out) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer())
      return "missing or non-integer key '" + std::string(key) + "'";
    out = it->get<std::int64_t>();
    if (out < 0) return std::string(key) + " is negative";
    return std::nullopt;
  };
  if (auto err = str("video_id", video.video_id)) return err;
  video.video_id = std::string(trim_view(video.video_id));
  if (video.video_id.empty()) return "empty video_id";
  if (auto err = str("channel_name", video.channel_name)) return err;
  if (auto err = str("title", video.title)) return err;
  if (auto err = str("published_at", video.published_at)) return err;
  video.published_at = std::string(trim_view(video.published_at));
  if (!video.published_at.empty() && !parse_iso8601_year(video.published_at))
    return "published_at is not an ISO-8601 date";
  if (auto err = count("view_count", video.view_count)) return err;
  if (auto err = count("like_count", video.like_count)) return err;
  if (auto err = count("dislike_count", video.dislike_count)) return err;
  if (auto err = count("comment_count", video.comment_count)) return err;
  if (auto err = str("age_group", age_token)) return err;
  age_token = std::string(trim_view(age_token));
  return std::nullopt;
}

}  // namespace

VideoLoadResult load_video_metadata(const std::string& path, FileFormat format,
                                    const AgeGroups& groups) {
  VideoLoadResult result;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open video metadata file: " + path);

  auto handle = [&](VideoMeta video, const std::string& age_token, std::size_t line) {
    const auto group = groups.index_of(age_token);
    if (!group) {
      ++result.report.rejected_rows;
      add_warning(result.report, path + ": line " + std::to_string(line) +
                                     ": unknown age_group '" + age_token + "', row rejected");
      return;
    }
    video.age_group = *group;
    auto [it, inserted] = result.videos.try_emplace(video.video_id, video);
    if (!inserted) {
      ++result.report.duplicate_ids;
      add_warning(result.report,
                  path + ": duplicate video_id '" + video.video_id + "', keeping last");
      it->second = std::move(video);
    }
    ++result.report.rows_loaded;
  };

  if (format == FileFormat::csv) {
    csv::Reader reader(in);
    csv::Record header;
    std::string error;
    auto status = reader.next(header, error);
    if (status == csv::Reader::Status::eof) throw Error(path + ": missing header row");
    if (status == csv::Reader::Status::malformed)
      throw Error(path + ": malformed header: " + error);
    const VideoColumns cols = map_video_header(header, path, result.report);

    csv::Record rec;
    for (;;) {
      status = reader.next(rec, error);
      if (status == csv::Reader::Status::eof) break;
      ++result.report.rows_seen;
      if (status == csv::Reader::Status::malformed) {
        result.report.malformed.emplace_back(rec.line, error);
        continue;
      }
      VideoMeta video;
      std::string age_token;
      if (auto err = parse_video_record(rec, cols, video, age_token)) {
        result.report.malformed.emplace_back(rec.line, *err);
        continue;
      }
      handle(std::move(video), age_token, rec.line);
    }
  } else {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim_view(line).empty()) continue;
      ++result.report.rows_seen;
      VideoMeta video;
      std::string age_token;
      if (auto err = parse_video_json(line, video, age_token)) {
        result.report.malformed.emplace_back(line_no, *err);
        continue;
      }
      handle(std::move(video), age_token, line_no);
    }
  }

  check_malformed_budget(path, result.report);
  if (result.videos.empty()) add_warning(result.report, path + ": no video metadata loaded");
  return result;
}

// ---- split ---------------------------------------------------------------

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& dataset,
                                                        double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must lie in (0,1), got " + format_double(fraction));
  if (dataset.records.empty()) throw Error("cannot split an empty dataset");

  const std::size_t n = dataset.records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const auto first_size =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

  std::pair<LabeledDataset, LabeledDataset> out;
  out.first.source = dataset.source + "/split-a";
  out.second.source = dataset.source + "/split-b";
  out.first.records.reserve(first_size);
  out.second.records.reserve(n - first_size);
  for (std::size_t i = 0; i < n; ++i) {
    auto& side = i < first_size ? out.first : out.second;
    side.records.push_back(dataset.records[order[i]]);
  }
  return out;
}

LabelCounts count_labels(const LabeledDataset& dataset) {
  LabelCounts counts;
  counts.total = dataset.records.size();
  for (const auto& rec : dataset.records) {
    for (Category c : kAllCategories)
      if (rec.labels[c]) ++counts.positives[static_cast<int>(c)];
    if (rec.labels.safe()) ++counts.safe;
  }
  return counts;
}

}  // namespace comet
