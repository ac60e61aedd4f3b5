#include "comet/measure.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "comet/common.hpp"
#include "comet/csv.hpp"

namespace comet {

ExposureByAgeGroup exposure_by_age_group(std::span<const PredictionRecord> predictions,
                                         const VideoTable& videos) {
  ExposureByAgeGroup out;
  std::map<int, ExposureByAgeGroup::Row> by_group;

  std::int64_t joined = 0;
  for (const auto& pred : predictions) {
    const auto it = videos.find(pred.video_id);
    if (it == videos.end()) {
      ++out.unresolved_video_ids;
      continue;
    }
    ++joined;
    auto& row = by_group[it->second.age_group];
    row.age_group = it->second.age_group;
    ++row.total_comments;
    for (std::size_t c = 0; c < kCategoryCount; ++c)
      if (pred.flags.flags[c]) ++row.category_counts[c];
    if (pred.inappropriate) ++row.inappropriate_count;
  }
  if (joined == 0) throw Error("exposure_by_age_group: no prediction joined a video");

  for (auto& [_, row] : by_group) out.rows.push_back(row);
  return out;
}

ChannelExposure exposure_by_channel(std::span<const PredictionRecord> predictions,
                                    const VideoTable& videos, std::size_t top_k) {
  struct Accum {
    std::set<std::string> video_ids;
    ChannelExposureRow row;
  };
  std::map<std::string, Accum> by_channel;

  ChannelExposure out;
  std::int64_t joined = 0;
  for (const auto& pred : predictions) {
    const auto it = videos.find(pred.video_id);
    if (it == videos.end()) {
      ++out.unresolved_video_ids;
      continue;
    }
    ++joined;
    Accum& acc = by_channel[it->second.channel_name];
    acc.row.channel_name = it->second.channel_name;
    acc.video_ids.insert(pred.video_id);
    ++acc.row.comment_count;
    for (std::size_t c = 0; c < kCategoryCount; ++c)
      if (pred.flags.flags[c]) ++acc.row.category_counts[c];
    if (pred.inappropriate)
      ++acc.row.inappropriate_count;
    else
      ++acc.row.safe_count;
  }
  if (joined == 0) throw Error("exposure_by_channel: no prediction joined a video");

  for (auto& [_, acc] : by_channel) {
    acc.row.video_count = static_cast<std::int64_t>(acc.video_ids.size());
    acc.row.unsafe_per_video = acc.row.video_count == 0
                                   ? 0.0
                                   : static_cast<double>(acc.row.inappropriate_count) /
                                         static_cast<double>(acc.row.video_count);
    acc.row.unsafe_percent = acc.row.comment_count == 0
                                 ? 0.0
                                 : static_cast<double>(acc.row.inappropriate_count) /
                                       static_cast<double>(acc.row.comment_count);
    out.rows.push_back(std::move(acc.row));
  }

  std::sort(out.rows.begin(), out.rows.end(),
            [](const ChannelExposureRow& a, const ChannelExposureRow& b) {
              if (a.comment_count != b.comment_count) return a.comment_count > b.comment_count;
              return a.channel_name < b.channel_name;
            });
  if (out.rows.size() > top_k) out.rows.resize(top_k);
  return out;
}

CommentInteractionMap collect_comment_interactions(CommentReader& comments) {
  CommentInteractionMap map;
  while (auto comment = comments.next())
    map[comment->id] = {comment->like_count, comment->reply_count};
  return map;
}

InteractionStats interaction_stats(std::span<const PredictionRecord> predictions,
                                   const CommentInteractionMap& comments,
                                   const VideoTable& videos) {
  InteractionStats out;

  std::array<std::set<std::string>, kCategoryCount> videos_per_category;
  std::array<std::int64_t, kCategoryCount> like_sum{};
  std::array<std::int64_t, kCategoryCount> reply_sum{};
  std::array<std::int64_t, kCategoryCount> comment_n{};

  for (const auto& pred : predictions) {
    if (!pred.flags.any()) continue;
    const auto vit = videos.find(pred.video_id);
    if (vit == videos.end()) ++out.unresolved_video_ids;
    const auto cit = comments.find(pred.comment_id);
    if (cit == comments.end()) ++out.unresolved_comment_ids;

    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (!pred.flags.flags[c]) continue;
      if (vit != videos.end()) videos_per_category[c].insert(pred.video_id);
      if (cit != comments.end()) {
        ++comment_n[c];
        like_sum[c] += cit->second.like_count;
        reply_sum[c] += cit->second.reply_count;
      }
    }
  }

  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    auto& stats = out.per_category[c];
    stats.video_count = static_cast<std::int64_t>(videos_per_category[c].size());
    stats.comment_count = comment_n[c];
    if (stats.video_count > 0) {
      std::int64_t views = 0, likes = 0, dislikes = 0;
      for (const auto& vid : videos_per_category[c]) {
        const VideoMeta& v = videos.at(vid);
        views += v.view_count;
        likes += v.like_count;
        dislikes += v.dislike_count;
      }
      const double n = static_cast<double>(stats.video_count);
      stats.mean_video_views = static_cast<double>(views) / n;
      stats.mean_video_likes = static_cast<double>(likes) / n;
      stats.mean_video_dislikes = static_cast<double>(dislikes) / n;
      stats.videos_defined = true;
    }
    if (stats.comment_count > 0) {
      const double n = static_cast<double>(stats.comment_count);
      stats.mean_comment_likes = static_cast<double>(like_sum[c]) / n;
      stats.mean_comment_replies = static_cast<double>(reply_sum[c]) / n;
      stats.comments_defined = true;
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::int64_t>> top_words(
    std::span<const PredictionRecord> predictions, const TokenMap& tokens, Category category,
    std::size_t k, const EnglishLexicon& stoplist) {
  if (k == 0) throw Error("top_words: k must be at least 1");

  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& pred : predictions) {
    if (!pred.flags[category]) continue;
    const auto it = tokens.find(pred.comment_id);
    if (it == tokens.end()) continue;
    for (const auto& token : it->second) {
      if (stoplist.contains(token)) continue;
      ++freq[token];
    }
  }

  std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

TemporalDistribution temporal_distribution(std::span<const std::string> timestamps) {
  TemporalDistribution out;
  std::map<int, std::int64_t> counts;
  for (const auto& ts : timestamps) {
    const auto year = parse_iso8601_year(ts);
    if (!year) {
      ++out.missing_timestamps;
      continue;
    }
    ++counts[*year];
  }
  if (counts.empty()) return out;
  const int first = counts.begin()->first;
  const int last = counts.rbegin()->first;
  for (int y = first; y <= last; ++y) out.counts_by_year[y] = counts.count(y) ? counts[y] : 0;
  return out;
}

TemporalDistribution temporal_distribution_videos(const VideoTable& videos) {
  std::vector<std::string> timestamps;
  timestamps.reserve(videos.size());
  for (const auto& [_, video] : videos) timestamps.push_back(video.published_at);
  return temporal_distribution(timestamps);
}

// ---- report files -------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open report file for writing: " + path);
  return out;
}

}  // namespace

void write_exposure_by_age_csv(const std::string& path, const ExposureByAgeGroup& exposure,
                               const AgeGroups& groups) {
  auto out = open_out(path);
  out << "age_group,category,count,group_total,percent\n";
  for (const auto& row : exposure.rows) {
    const std::string& label = groups.label(row.age_group);
    const auto emit = [&](std::string_view category, std::int64_t count) {
      std::vector<std::string> fields;
      fields.push_back(label);
      fields.emplace_back(category);
      fields.push_back(std::to_string(count));
      fields.push_back(std::to_string(row.total_comments));
      const double pct = row.total_comments == 0
                             ? 0.0
                             : static_cast<double>(count) / static_cast<double>(row.total_comments);
      fields.push_back(format_fixed6(pct));
      out << csv::join_row(fields);
    };
    for (Category c : kAllCategories)
      emit(category_name(c), row.category_counts[static_cast<int>(c)]);
    emit("inappropriate", row.inappropriate_count);
  }
}

void write_exposure_by_channel_csv(const std::string& path, const ChannelExposure& exposure) {
  auto out = open_out(path);
  out << "channel_name,video_count,comment_count,safe,toxic,obscene,insult,threat,"
         "identity_hate,inappropriate,unsafe_per_video,unsafe_percent\n";
  for (const auto& row : exposure.rows) {
    std::vector<std::string> fields;
    fields.push_back(row.channel_name);
    fields.push_back(std::to_string(row.video_count));
    fields.push_back(std::to_string(row.comment_count));
    fields.push_back(std::to_string(row.safe_count));
    for (std::int64_t c : row.category_counts) fields.push_back(std::to_string(c));
    fields.push_back(std::to_string(row.inappropriate_count));
    fields.push_back(format_fixed6(row.unsafe_per_video));
    fields.push_back(format_fixed6(row.unsafe_percent));
    out << csv::join_row(fields);
  }
}

void write_interaction_stats_csv(const std::string& path, const InteractionStats& stats) {
  auto out = open_out(path);
  out << "category,video_count,mean_video_views,mean_video_likes,mean_video_dislikes,"
         "videos_defined,comment_count,mean_comment_likes,mean_comment_replies,"
         "comments_defined\n";
  for (Category c : kAllCategories) {
    const auto& s = stats.per_category[static_cast<int>(c)];
    std::vector<std::string> fields;
    fields.emplace_back(category_name(c));
    fields.push_back(std::to_string(s.video_count));
    fields.push_back(format_fixed6(s.mean_video_views));
    fields.push_back(format_fixed6(s.mean_video_likes));
    fields.push_back(format_fixed6(s.mean_video_dislikes));
    fields.push_back(s.videos_defined ? "1" : "0");
    fields.push_back(std::to_string(s.comment_count));
    fields.push_back(format_fixed6(s.mean_comment_likes));
    fields.push_back(format_fixed6(s.mean_comment_replies));
    fields.push_back(s.comments_defined ? "1" : "0");
    out << csv::join_row(fields);
  }
}

void write_top_words_csv(const std::string& path,
                         std::span<const std::pair<std::string, std::int64_t>> words) {
  auto out = open_out(path);
  out << "token,frequency\n";
  for (const auto& [token, count] : words) {
    std::vector<std::string> fields{token, std::to_string(count)};
    out << csv::join_row(fields);
  }
}

void write_temporal_csv(const std::string& path, const TemporalDistribution& videos,
                        const TemporalDistribution& comments) {
  auto out = open_out(path);
  out << "kind,year,count\n";
  for (const auto& [year, count] : videos.counts_by_year)
    out << "videos," << year << ',' << count << '\n';
  for (const auto& [year, count] : comments.counts_by_year)
    out << "comments," << year << ',' << count << '\n';
}

}  // namespace comet
