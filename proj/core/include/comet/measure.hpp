#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "comet/categories.hpp"
#include "comet/corpus.hpp"
#include "comet/ensemble.hpp"
#include "comet/text.hpp"

namespace comet {

// Per (age group, category) comment counts with the group's full comment
// volume as denominator. Predictions whose video_id cannot be resolved are
// excluded and counted.
struct ExposureByAgeGroup {
  struct Row {
    int age_group = 0;
    std::int64_t total_comments = 0;
    std::array<std::int64_t, kCategoryCount> category_counts{};
    std::int64_t inappropriate_count = 0;
  };
  std::vector<Row> rows;  // ordered by age-group index; groups with traffic only
  std::int64_t unresolved_video_ids = 0;
};

ExposureByAgeGroup exposure_by_age_group(std::span<const PredictionRecord> predictions,
                                         const VideoTable& videos);

struct ChannelExposureRow {
  std::string channel_name;
  std::int64_t video_count = 0;  // distinct videos contributing comments
  std::int64_t comment_count = 0;
  std::int64_t safe_count = 0;
  std::array<std::int64_t, kCategoryCount> category_counts{};
  std::int64_t inappropriate_count = 0;
  double unsafe_per_video = 0.0;  // inappropriate / videos
  double unsafe_percent = 0.0;    // inappropriate / comments, in [0,1]
};

struct ChannelExposure {
  std::vector<ChannelExposureRow> rows;  // comment_count descending
  std::int64_t unresolved_video_ids = 0;
};

ChannelExposure exposure_by_channel(std::span<const PredictionRecord> predictions,
                                    const VideoTable& videos, std::size_t top_k);

struct CommentInteraction {
  std::int64_t like_count = 0;
  std::int64_t reply_count = 0;
};

using CommentInteractionMap = std::unordered_map<std::string, CommentInteraction>;

// Drains the reader into an id -> interaction-count map (text is dropped).
CommentInteractionMap collect_comment_interactions(CommentReader& comments);

// Per category: video-level means over the distinct videos holding at least
// one flagged comment, and comment-level means over the flagged comments
// themselves. Empty populations report 0 with the defined flag cleared.
struct InteractionStats {
  struct PerCategory {
    std::int64_t video_count = 0;
    std::int64_t comment_count = 0;
    double mean_video_views = 0.0;
    double mean_video_likes = 0.0;
    double mean_video_dislikes = 0.0;
    double mean_comment_likes = 0.0;
    double mean_comment_replies = 0.0;
    bool videos_defined = false;
    bool comments_defined = false;
  };
  std::array<PerCategory, kCategoryCount> per_category;
  std::int64_t unresolved_video_ids = 0;
  std::int64_t unresolved_comment_ids = 0;
};

InteractionStats interaction_stats(std::span<const PredictionRecord> predictions,
                                   const CommentInteractionMap& comments,
                                   const VideoTable& videos);

using TokenMap = std::unordered_map<std::string, std::vector<std::string>>;

// Token frequencies over comments flagged for `category`, stoplist removed.
// Sorted by frequency descending, ties lexicographically ascending.
std::vector<std::pair<std::string, std::int64_t>> top_words(
    std::span<const PredictionRecord> predictions, const TokenMap& tokens, Category category,
    std::size_t k, const EnglishLexicon& stoplist);

// Counts per calendar year with interior years zero-filled; entries without
// a parseable timestamp are excluded and counted.
struct TemporalDistribution {
  std::map<int, std::int64_t> counts_by_year;
  std::int64_t missing_timestamps = 0;
};

TemporalDistribution temporal_distribution(std::span<const std::string> timestamps);
TemporalDistribution temporal_distribution_videos(const VideoTable& videos);

// ---- report files -------------------------------------------------------

void write_exposure_by_age_csv(const std::string& path, const ExposureByAgeGroup& exposure,
                               const AgeGroups& groups);
void write_exposure_by_channel_csv(const std::string& path, const ChannelExposure& exposure);
void write_interaction_stats_csv(const std::string& path, const InteractionStats& stats);
void write_top_words_csv(const std::string& path,
                         std::span<const std::pair<std::string, std::int64_t>> words);
// One file covers both series: kind is "videos" or "comments".
void write_temporal_csv(const std::string& path, const TemporalDistribution& videos,
                        const TemporalDistribution& comments);

}  // namespace comet
