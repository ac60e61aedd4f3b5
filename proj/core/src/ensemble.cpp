#include "comet/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <thread>

#include "comet/common.hpp"
#include "comet/csv.hpp"

namespace comet {

void EnsembleSpec::bind(Category c, CategoryBinding binding) {
  auto& slot = bindings_[static_cast<int>(c)];
  if (slot.has_value())
    throw Error("category '" + std::string(category_name(c)) + "' is already bound");
  slot = std::move(binding);
}

bool EnsembleSpec::complete() const {
  for (const auto& b : bindings_)
    if (!b) return false;
  return true;
}

void EnsembleSpec::validate() const {
  for (Category c : kAllCategories) {
    const auto& slot = bindings_[static_cast<int>(c)];
    if (!slot)
      throw Error("ensemble is missing the '" + std::string(category_name(c)) + "' model");
    const CategoryBinding& b = *slot;
    if (!(b.threshold >= 0.0 && b.threshold <= 1.0))
      throw Error("threshold for '" + std::string(category_name(c)) + "' outside [0,1]");
    if (b.table == nullptr)
      throw Error("no embedding table bound for '" + std::string(category_name(c)) + "'");
    if (b.projector.config().word_dim != b.table->dim)
      throw Error("embedding dim mismatch for '" + std::string(category_name(c)) + "'");
    if (b.projector.config().doc_dim != b.model.input_dim())
      throw Error("model input dim mismatch for '" + std::string(category_name(c)) + "'");
    b.model.validate();
  }
}

const CategoryBinding& EnsembleSpec::binding(Category c) const {
  const auto& slot = bindings_[static_cast<int>(c)];
  if (!slot) throw Error("category '" + std::string(category_name(c)) + "' is not bound");
  return *slot;
}

CategoryBinding& EnsembleSpec::binding(Category c) {
  auto& slot = bindings_[static_cast<int>(c)];
  if (!slot) throw Error("category '" + std::string(category_name(c)) + "' is not bound");
  return *slot;
}

CategoryScores score_comment(const EnsembleSpec& spec, std::span<const std::string> tokens) {
  CategoryScores scores;
  for (Category c : kAllCategories) {
    const CategoryBinding& b = spec.binding(c);
    const DocumentVector doc = embed_document(tokens, *b.table, b.projector);
    scores.probability[static_cast<int>(c)] = forward(b.model, doc.values);
    scores.oov_fraction[static_cast<int>(c)] = doc.oov_fraction;
  }
  return scores;
}

Prediction apply_thresholds(const CategoryScores& scores, const EnsembleSpec& spec) {
  Prediction pred;
  for (Category c : kAllCategories) {
    const bool flag = scores[c] >= spec.binding(c).threshold;
    pred.flags[c] = flag;
    pred.inappropriate = pred.inappropriate || flag;
  }
  return pred;
}

ThresholdCurve sweep_thresholds(std::span<const double> scores, std::span<const bool> labels,
                                double grid_step, std::span<const double> unlabeled_scores,
                                Category category) {
  if (scores.size() != labels.size())
    throw Error("sweep_thresholds: scores/labels size mismatch");
  if (scores.empty()) throw Error("sweep_thresholds: empty evaluation set");
  if (!(grid_step > 0.0 && grid_step <= 1.0))
    throw Error("sweep_thresholds: grid step must lie in (0,1]");

  std::size_t positives = 0;
  for (bool l : labels) positives += l ? 1 : 0;
  if (positives == 0 || positives == labels.size())
    throw Error("sweep_thresholds: evaluation set must contain both classes");
  const std::size_t negatives = labels.size() - positives;

  ThresholdCurve curve;
  curve.category = category;

  const auto add_point = [&](double t) {
    std::size_t tp = 0, tn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool flagged = scores[i] >= t;
      if (labels[i] && flagged) ++tp;
      if (!labels[i] && !flagged) ++tn;
    }
    ThresholdCurve::Point p;
    p.threshold = t;
    p.tpr = static_cast<double>(tp) / static_cast<double>(positives);
    p.tnr = static_cast<double>(tn) / static_cast<double>(negatives);
    if (!unlabeled_scores.empty()) {
      std::size_t detected = 0;
      for (double s : unlabeled_scores) detected += s >= t ? 1 : 0;
      p.detected_fraction =
          static_cast<double>(detected) / static_cast<double>(unlabeled_scores.size());
    }
    curve.points.push_back(p);
  };

  for (int k = 0;; ++k) {
    const double t = static_cast<double>(k) * grid_step;
    if (t > 1.0) break;
    add_point(t);
  }
  add_point(1.0 + grid_step);  // flags nothing: TPR 0, TNR 1 exactly
  return curve;
}

std::vector<double> score_all(const MlpModel& model,
                              std::span<const std::vector<double>> inputs) {
  std::vector<double> scores;
  scores.reserve(inputs.size());
  for (const auto& x : inputs) scores.push_back(forward(model, x));
  return scores;
}

std::optional<ThresholdPolicy> threshold_policy_from_name(std::string_view name,
                                                          double fixed_value) {
  if (name == "max_min_rate") return ThresholdPolicy::max_min_rate();
  if (name == "youden") return ThresholdPolicy::youden();
  if (name == "fixed") return ThresholdPolicy::fixed(fixed_value);
  return std::nullopt;
}

double select_threshold(const ThresholdCurve& curve, const ThresholdPolicy& policy) {
  if (policy.kind == ThresholdPolicy::Kind::fixed) return policy.fixed_value;
  if (curve.points.empty()) throw Error("select_threshold: empty curve");

  double best_threshold = curve.points.front().threshold;
  double best_value = -1.0;
  for (const auto& p : curve.points) {
    const double value = policy.kind == ThresholdPolicy::Kind::max_min_rate
                             ? std::min(p.tpr, p.tnr)
                             : p.tpr + p.tnr - 1.0;
    // strict improvement only: equal values keep the lower threshold,
    // which favors TPR
    if (value > best_value) {
      best_value = value;
      best_threshold = p.threshold;
    }
  }
  return best_threshold;
}

double default_threshold(Category c) {
  switch (c) {
    case Category::toxic: return 0.520;
    case Category::obscene: return 0.270;
    case Category::insult: return 0.210;
    case Category::threat: return 0.220;
    case Category::identity_hate: return 0.140;
  }
  return 0.5;
}

namespace {

void write_prediction_row(std::ostream& out, const PredictionRecord& rec) {
  std::vector<std::string> fields;
  fields.reserve(13);
  fields.push_back(rec.comment_id);
  fields.push_back(rec.video_id);
  for (double s : rec.scores) fields.push_back(format_fixed6(s));
  for (Category c : kAllCategories) fields.push_back(rec.flags[c] ? "1" : "0");
  fields.push_back(rec.inappropriate ? "1" : "0");
  out << csv::join_row(fields);
}

}  // namespace

ClassifySummary classify_corpus(const EnsembleSpec& spec, CommentReader& comments,
                                const EnglishLexicon& lexicon, std::ostream& out, int threads) {
  spec.validate();
  if (threads < 1) threads = 1;

  out << kPredictionsHeader << '\n';

  ClassifySummary summary;
  std::array<double, kCategoryCount> oov_sum{};

  struct RowResult {
    PredictionRecord rec;
    std::array<double, kCategoryCount> oov{};
  };

  const std::size_t chunk_size = std::max<std::size_t>(512, static_cast<std::size_t>(threads) * 256);
  std::vector<Comment> chunk;
  chunk.reserve(chunk_size);
  std::vector<RowResult> results;

  const auto process_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Comment& comment = chunk[i];
      const TokenizedDoc doc = preprocess_comment(comment.id, comment.text, lexicon);
      const CategoryScores scores = score_comment(spec, doc.tokens);
      const Prediction pred = apply_thresholds(scores, spec);
      RowResult& row = results[i];
      row.rec.comment_id = comment.id;
      row.rec.video_id = comment.video_id;
      row.rec.scores = scores.probability;
      row.rec.flags = pred.flags;
      row.rec.inappropriate = pred.inappropriate;
      row.oov = scores.oov_fraction;
    }
  };

  bool exhausted = false;
  while (!exhausted) {
    chunk.clear();
    while (chunk.size() < chunk_size) {
      auto comment = comments.next();
      if (!comment) {
        exhausted = true;
        break;
      }
      chunk.push_back(std::move(*comment));
    }
    if (chunk.empty()) break;

    results.assign(chunk.size(), {});
    if (threads == 1 || chunk.size() < 64) {
      process_range(0, chunk.size());
    } else {
      std::vector<std::thread> workers;
      const std::size_t stride =
          (chunk.size() + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
      for (int t = 0; t < threads; ++t) {
        const std::size_t begin = static_cast<std::size_t>(t) * stride;
        const std::size_t end = std::min(chunk.size(), begin + stride);
        if (begin >= end) break;
        workers.emplace_back(process_range, begin, end);
      }
      for (auto& w : workers) w.join();
    }

    // single writer keeps the output in input order
    for (const RowResult& row : results) {
      write_prediction_row(out, row.rec);
      ++summary.total;
      for (std::size_t c = 0; c < kCategoryCount; ++c) {
        if (row.rec.flags.flags[c]) ++summary.flagged[c];
        oov_sum[c] += row.oov[c];
      }
      if (row.rec.inappropriate) ++summary.inappropriate;
    }
  }

  if (summary.total > 0)
    for (std::size_t c = 0; c < kCategoryCount; ++c)
      summary.mean_oov[c] = oov_sum[c] / static_cast<double>(summary.total);
  return summary;
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions file: " + path);
  csv::Reader reader(in);
  csv::Record rec;
  std::string error;

  auto status = reader.next(rec, error);
  if (status != csv::Reader::Status::record)
    throw Error(path + ": missing predictions header");
  {
    const std::string joined = csv::join_row(rec.fields);
    if (trim_view(joined) != kPredictionsHeader)
      throw Error(path + ": unexpected predictions header");
  }

  std::vector<PredictionRecord> out;
  for (;;) {
    status = reader.next(rec, error);
    if (status == csv::Reader::Status::eof) break;
    if (status == csv::Reader::Status::malformed)
      throw Error(path + ": line " + std::to_string(rec.line) + ": " + error);
    if (rec.fields.size() != 13)
      throw Error(path + ": line " + std::to_string(rec.line) + ": expected 13 fields, got " +
                  std::to_string(rec.fields.size()));
    PredictionRecord p;
    p.comment_id = rec.fields[0];
    p.video_id = rec.fields[1];
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      const auto score = parse_double(rec.fields[2 + c]);
      if (!score) throw Error(path + ": line " + std::to_string(rec.line) + ": bad score");
      p.scores[c] = *score;
      const auto flag = trim_view(rec.fields[7 + c]);
      if (flag != "0" && flag != "1")
        throw Error(path + ": line " + std::to_string(rec.line) + ": bad flag");
      p.flags.flags[c] = flag == "1";
    }
    const auto inap = trim_view(rec.fields[12]);
    if (inap != "0" && inap != "1")
      throw Error(path + ": line " + std::to_string(rec.line) + ": bad inappropriate flag");
    p.inappropriate = inap == "1";
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace comet
