#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "testra/streaming.hpp"

namespace testra {

struct CostStats {
  double median_ns = 0.0;
  double p95_ns = 0.0;
};

// Sliding-window attention baseline: recomputes multi-head attention over a
// ring of the last `capacity` projected frames on every step.
struct WindowedAttention {
  DenseMatrix queries;  // M x C
  DenseMatrix w_key, w_value;
  AttentionConfig cfg;
  std::size_t capacity = 0;
  std::deque<std::pair<DenseMatrix, DenseMatrix>> ring;  // (key 1xC, value 1xC)

  void push(std::span<const double> x);
  DenseMatrix read() const;
};

// Median / p95 wall time of one push+read, `frames` samples per rep, first
// rep discarded as warm-up. Frame payloads cycle deterministically through
// `pool`.
CostStats per_frame_cost_probe(StreamState& state, const DenseMatrix& pool,
                               std::size_t frames, std::size_t reps = 3);
CostStats per_frame_cost_probe(WindowedAttention& wa, const DenseMatrix& pool,
                               std::size_t frames, std::size_t reps = 3);

struct BenchConfig {
  std::vector<std::size_t> windows = {32, 128, 512, 2048, 8192};
  std::vector<std::string> modes = {"stream-es", "stream-fifo", "windowed"};
  std::size_t frames = 1000;  // measured frames per configuration per rep
  std::size_t reps = 3;
  std::size_t d = 64, C = 64, M = 16, heads = 4;
  std::uint64_t seed = 42;
};

struct BenchRow {
  std::string mode;
  std::size_t window = 0;
  std::size_t frames = 0;
  double median_ns = 0.0;
  double p95_ns = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
};

BenchReport run_benchmark(const BenchConfig& cfg);

std::string bench_report_csv(const BenchReport& report);

}  // namespace testra
