#pragma once

#include <map>
#include <random>
#include <span>
#include <vector>

#include "testra/matrix.hpp"

namespace testra {

// One annotated action span; end is exclusive. Background never forms an
// instance, so label >= 1.
struct ActionInstance {
  std::size_t start = 0;
  std::size_t end = 0;
  int label = 0;
};

// Same-label feature segments harvested from other sequences. Segments keep
// their source id so a sequence never donates to itself.
class InstanceBank {
 public:
  struct Segment {
    DenseMatrix features;  // len x d
    int source = -1;
  };

  void add(int label, DenseMatrix features, int source);
  // Donors for `label` excluding `self_source`; empty pool is allowed.
  std::vector<const Segment*> donors(int label, int self_source) const;
  std::size_t total_segments() const;

 private:
  std::map<int, std::vector<Segment>> by_label_;
};

// Cross-sequence instance substitution. Each instance is independently
// replaced with probability p_mc by a same-label donor segment from another
// source. Longer donors are randomly cropped to the span; shorter donors are
// placed at the span start and the original tail is kept, so the frame count
// never changes. Per-frame labels are untouched by construction.
DenseMatrix mixclip(const DenseMatrix& features, std::span<const ActionInstance> instances,
                    const InstanceBank& bank, double p_mc, int self_source,
                    std::mt19937_64& rng);

}  // namespace testra
