#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comet/categories.hpp"
#include "comet/corpus.hpp"
#include "comet/embed.hpp"
#include "comet/nn.hpp"
#include "comet/text.hpp"

namespace comet {

// Everything one category needs at inference: its model, its word-vector
// table and projection, and the calibrated decision threshold.
struct CategoryBinding {
  MlpModel model;
  const EmbeddingTable* table = nullptr;  // non-owning
  DocProjector projector;
  double threshold = 0.5;
};

// Five bindings, one per category, present exactly once.
class EnsembleSpec {
 public:
  // Throws if the category is already bound.
  void bind(Category c, CategoryBinding binding);

  bool complete() const;
  // All five bound, thresholds in [0,1], table/projector dimensions agree.
  void validate() const;

  const CategoryBinding& binding(Category c) const;
  CategoryBinding& binding(Category c);

 private:
  std::array<std::optional<CategoryBinding>, kCategoryCount> bindings_;
};

struct CategoryScores {
  std::array<double, kCategoryCount> probability{};
  std::array<double, kCategoryCount> oov_fraction{};

  double operator[](Category c) const { return probability[static_cast<int>(c)]; }
};

// Five independent probabilities; each category embeds the tokens with its
// own table and projection.
CategoryScores score_comment(const EnsembleSpec& spec, std::span<const std::string> tokens);

struct Prediction {
  LabelVector flags;
  bool inappropriate = false;  // OR of the five flags; safe is its negation
};

// Closed decision boundary: flag = (score >= threshold).
Prediction apply_thresholds(const CategoryScores& scores, const EnsembleSpec& spec);

struct ThresholdCurve {
  struct Point {
    double threshold = 0.0;
    double tpr = 0.0;
    double tnr = 0.0;
    std::optional<double> detected_fraction;  // on an unlabeled sample, when given
  };
  Category category = Category::toxic;
  std::vector<Point> points;  // strictly increasing thresholds
};

// TPR/TNR over the grid {0, step, 2*step, ..., 1} plus one point past 1.0
// (nothing can be flagged there, closing the curve). Needs at least one
// positive and one negative label. Monotone by construction: TPR
// non-increasing, TNR non-decreasing.
ThresholdCurve sweep_thresholds(std::span<const double> scores, const std::vector<bool>& labels,
                                double grid_step = 0.01,
                                std::span<const double> unlabeled_scores = {},
                                Category category = Category::toxic);

std::vector<double> score_all(const MlpModel& model,
                              std::span<const std::vector<double>> inputs);

struct ThresholdPolicy {
  enum class Kind { max_min_rate, youden, fixed };
  Kind kind = Kind::max_min_rate;
  double fixed_value = 0.5;

  static ThresholdPolicy max_min_rate() { return {Kind::max_min_rate, 0.0}; }
  static ThresholdPolicy youden() { return {Kind::youden, 0.0}; }
  static ThresholdPolicy fixed(double t) { return {Kind::fixed, t}; }
};

std::optional<ThresholdPolicy> threshold_policy_from_name(std::string_view name,
                                                          double fixed_value);

// max_min_rate: maximize min(TPR, TNR); youden: maximize TPR+TNR-1. Ties go
// to the lower threshold (favoring TPR). fixed passes its value through.
double select_threshold(const ThresholdCurve& curve, const ThresholdPolicy& policy);

// The paper-calibrated defaults the ensemble ships with before any local
// calibration run: toxic 0.520, obscene 0.270, insult 0.210, threat 0.220,
// identity hate 0.140.
double default_threshold(Category c);

struct PredictionRecord {
  std::string comment_id;
  std::string video_id;
  std::array<double, kCategoryCount> scores{};
  LabelVector flags;
  bool inappropriate = false;
};

inline constexpr std::string_view kPredictionsHeader =
    "comment_id,video_id,score_toxic,score_obscene,score_insult,score_threat,"
    "score_identity_hate,flag_toxic,flag_obscene,flag_insult,flag_threat,"
    "flag_identity_hate,inappropriate";

struct ClassifySummary {
  std::size_t total = 0;
  std::array<std::size_t, kCategoryCount> flagged{};
  std::size_t inappropriate = 0;
  std::array<double, kCategoryCount> mean_oov{};

  double flagged_fraction(Category c) const {
    return total == 0 ? 0.0
                      : static_cast<double>(flagged[static_cast<int>(c)]) /
                            static_cast<double>(total);
  }
};

// Streams the comment source through preprocessing and the ensemble and
// writes one CSV row per comment (scores at six decimals). Output order
// always matches input order; `threads` > 1 fans scoring out over workers
// without changing a byte of the output.
ClassifySummary classify_corpus(const EnsembleSpec& spec, CommentReader& comments,
                                const EnglishLexicon& lexicon, std::ostream& out,
                                int threads = 1);

std::vector<PredictionRecord> read_predictions(const std::string& path);

}  // namespace comet
