#include "comet/metrics.hpp"

#include "comet/common.hpp"

namespace comet {

Confusion confusion_counts(const std::vector<bool>& flags, const std::vector<bool>& labels) {
  if (flags.size() != labels.size())
    throw Error("confusion_counts: " + std::to_string(flags.size()) + " flags vs " +
                std::to_string(labels.size()) + " labels");
  if (flags.empty()) throw Error("confusion_counts: empty input");

  Confusion c;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (labels[i]) {
      flags[i] ? ++c.tp : ++c.fn;
    } else {
      flags[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

BinaryMetrics binary_metrics(const Confusion& c) {
  BinaryMetrics m;
  const auto ratio = [](std::int64_t num, std::int64_t den, double& out, bool& defined) {
    if (den > 0) {
      out = static_cast<double>(num) / static_cast<double>(den);
      defined = true;
    }
  };
  ratio(c.tp, c.tp + c.fp, m.precision, m.precision_defined);
  ratio(c.tp, c.tp + c.fn, m.recall_tpr, m.recall_defined);
  ratio(c.tn, c.tn + c.fp, m.tnr, m.tnr_defined);
  ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, m.f1, m.f1_defined);
  return m;
}

}  // namespace comet
