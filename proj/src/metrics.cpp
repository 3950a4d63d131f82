#include "testra/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace testra {

double average_precision(std::span<const double> scores, const std::vector<char>& positives) {
  require(scores.size() == positives.size(), "scores/positives length mismatch");
  std::size_t total_pos = 0;
  for (char p : positives) total_pos += p ? 1 : 0;
  if (total_pos == 0) throw std::invalid_argument("average_precision needs >= 1 positive");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (positives[order[rank]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(total_pos);
}

MetricReport anticipation_map(std::span<const DenseMatrix> outputs,
                              std::span<const int> labels, std::size_t num_classes,
                              std::size_t horizon) {
  require(outputs.size() == labels.size(), "outputs/labels length mismatch");
  require(!outputs.empty(), "no outputs to score");
  const std::size_t la = outputs.front().rows - 1;
  if (horizon > la)
    throw std::invalid_argument("horizon " + std::to_string(horizon) +
                                " exceeds anticipation span " + std::to_string(la));
  const std::size_t row = horizon;  // row 0 = current frame, row h = horizon h
  const std::size_t usable = outputs.size() - horizon;

  MetricReport rep;
  rep.per_class_ap.assign(num_classes, -1.0);
  double sum = 0.0;
  for (std::size_t c = 1; c <= num_classes; ++c) {
    std::vector<double> scores(usable);
    std::vector<char> pos(usable);
    bool any = false;
    for (std::size_t t = 0; t < usable; ++t) {
      scores[t] = outputs[t](row, c);
      pos[t] = labels[t + horizon] == static_cast<int>(c) ? 1 : 0;
      any = any || pos[t];
    }
    if (!any) continue;  // class absent from this span, skipped
    const double ap = average_precision(scores, pos);
    rep.per_class_ap[c - 1] = ap;
    sum += ap;
    ++rep.classes_scored;
  }
  require(rep.classes_scored >= 1, "no class has positives in the scored span");
  rep.map = sum / static_cast<double>(rep.classes_scored);
  return rep;
}

}  // namespace testra
