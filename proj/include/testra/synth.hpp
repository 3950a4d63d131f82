#pragma once

#include <cstdint>
#include <vector>

#include "testra/augment.hpp"
#include "testra/model.hpp"

namespace testra {

// Synthetic untrimmed streams: background is drift + noise, event frames add
// a class prototype. Desk-scale stand-in for real video features.
struct SynthConfig {
  std::size_t K = 5;
  std::size_t d = 16;
  std::size_t T = 10000;
  double sigma_noise = 0.1;
  double drift_sigma = 0.0;  // slow random walk added to every frame
  std::size_t dur_min = 16, dur_max = 32;  // event duration (frames)
  std::size_t gap_min = 16, gap_max = 48;  // background gap between events
  double proto_scale = 1.0;
  std::uint64_t proto_seed = 1234;  // prototypes shared across streams

  void validate() const;
};

struct LabeledStream {
  DenseMatrix features;  // T x d
  std::vector<int> labels;  // per-frame, 0 = background
  std::vector<ActionInstance> instances;
  int source = -1;
};

// K x d prototype rows, a deterministic function of proto_seed.
DenseMatrix class_prototypes(const SynthConfig& cfg);

LabeledStream gen_stream(const SynthConfig& cfg, std::uint64_t seed);

// Clip ending at frame t_last (inclusive). Requires a full N+L history and
// La frames of lookahead for the anticipation labels.
Clip make_clip(const LabeledStream& stream, const ModelConfig& cfg, std::size_t t_last);

// Uniformly sampled valid clip end points.
std::vector<Clip> sample_clips(const LabeledStream& stream, const ModelConfig& cfg,
                               std::size_t count, std::uint64_t seed);

InstanceBank build_instance_bank(std::span<const LabeledStream> streams);

}  // namespace testra
