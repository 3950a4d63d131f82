#pragma once

#include <span>
#include <vector>

#include "testra/matrix.hpp"

namespace testra {

// Ranked-retrieval average precision: precision summed at each positive rank
// over the positive count. Ties broken by stable frame order. Requires at
// least one positive.
double average_precision(std::span<const double> scores, const std::vector<char>& positives);

struct MetricReport {
  std::vector<double> per_class_ap;  // -1 marks a skipped class (no positives)
  double map = 0.0;
  std::size_t classes_scored = 0;
};

// Per-frame model outputs over a stream: outputs[t] is (1+La) x (K+1), row 0
// scoring the current frame and row h the horizon-h prediction. The
// horizon-tau score row is ranked against labels shifted by tau; tau = 0 is
// plain online detection.
MetricReport anticipation_map(std::span<const DenseMatrix> outputs,
                              std::span<const int> labels, std::size_t num_classes,
                              std::size_t horizon);

}  // namespace testra
