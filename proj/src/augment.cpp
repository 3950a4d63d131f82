#include "testra/augment.hpp"

#include <stdexcept>

namespace testra {

void InstanceBank::add(int label, DenseMatrix features, int source) {
  require(label >= 1, "instance label must be >= 1");
  require(features.rows >= 1, "instance segment must have length >= 1");
  by_label_[label].push_back({std::move(features), source});
}

std::vector<const InstanceBank::Segment*> InstanceBank::donors(int label,
                                                               int self_source) const {
  std::vector<const Segment*> out;
  auto it = by_label_.find(label);
  if (it == by_label_.end()) return out;
  for (const Segment& s : it->second)
    if (s.source != self_source) out.push_back(&s);
  return out;
}

std::size_t InstanceBank::total_segments() const {
  std::size_t n = 0;
  for (const auto& [label, segs] : by_label_) n += segs.size();
  return n;
}

DenseMatrix mixclip(const DenseMatrix& features, std::span<const ActionInstance> instances,
                    const InstanceBank& bank, double p_mc, int self_source,
                    std::mt19937_64& rng) {
  require(p_mc >= 0.0 && p_mc <= 1.0, "p_mc must be in [0,1]");
  std::size_t prev_end = 0;
  for (const auto& inst : instances) {
    require(inst.start < inst.end && inst.end <= features.rows,
            "instance span out of range");
    require(inst.start >= prev_end, "instances must be sorted and non-overlapping");
    prev_end = inst.end;
  }

  DenseMatrix out = features;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (const auto& inst : instances) {
    if (coin(rng) >= p_mc) continue;
    auto pool = bank.donors(inst.label, self_source);
    if (pool.empty()) continue;  // nothing to substitute, keep original span
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const InstanceBank::Segment& donor = *pool[pick(rng)];
    require(donor.features.cols == features.cols, "donor feature dim mismatch");
    const std::size_t span = inst.end - inst.start;
    std::size_t donor_len = donor.features.rows;
    std::size_t donor_off = 0;
    if (donor_len > span) {
      std::uniform_int_distribution<std::size_t> crop(0, donor_len - span);
      donor_off = crop(rng);
      donor_len = span;
    }
    for (std::size_t i = 0; i < donor_len; ++i)
      std::copy(donor.features.row(donor_off + i).begin(),
                donor.features.row(donor_off + i).end(), out.row(inst.start + i).begin());
    // shorter donor: rows [start+donor_len, end) keep the original frames
  }
  return out;
}

}  // namespace testra
