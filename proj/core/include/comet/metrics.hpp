#pragma once

#include <cstdint>
#include <vector>

namespace comet {

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

// Exact counts over (prediction, label) pairs; throws on empty or
// length-mismatched input.
Confusion confusion_counts(const std::vector<bool>& flags, const std::vector<bool>& labels);

// precision = TP/(TP+FP), recall/TPR = TP/(TP+FN), TNR = TN/(TN+FP),
// F1 = 2TP/(2TP+FP+FN). A zero denominator yields 0 with the corresponding
// defined flag cleared, so report tables stay numeric.
struct BinaryMetrics {
  double precision = 0.0;
  double recall_tpr = 0.0;
  double tnr = 0.0;
  double f1 = 0.0;
  bool precision_defined = false;
  bool recall_defined = false;
  bool tnr_defined = false;
  bool f1_defined = false;
};

BinaryMetrics binary_metrics(const Confusion& c);

}  // namespace comet
