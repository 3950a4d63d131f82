#pragma once

#include <cstdint>
#include <deque>
#include <span>

#include "testra/attention.hpp"
#include "testra/matrix.hpp"

namespace testra {

enum class StreamMode { Fifo, Es };

// Per-query accumulator state for constant-cost streaming attention.
// phi holds the kernel-weighted value sums (M x C, head slices contiguous),
// psi the kernel mass per (query, head). log_scale absorbs common rescale
// factors so the phi/psi ratio stays representable on unbounded streams.
// Single-writer: pushes and reads must be externally serialized per state.
struct StreamState {
  StreamMode mode = StreamMode::Es;
  std::size_t capacity = 0;  // Fifo window
  double decay = 0.0;        // Es decay per frame

  DenseMatrix queries;  // M x C effective query bank
  DenseMatrix w_key;    // d x C
  DenseMatrix w_value;  // d x C
  AttentionConfig cfg;

  DenseMatrix phi;        // M x C
  DenseMatrix psi;        // M x heads
  DenseMatrix log_scale;  // M x heads, all cells share one exponent
  std::uint64_t t = 0;

  struct RingEntry {
    DenseMatrix kappa;  // M x heads, stored in the current rescaled frame
    DenseMatrix value;  // 1 x C
  };
  std::deque<RingEntry> ring;
  std::uint64_t pushes_since_rebuild = 0;
};

// Window of the most recent `capacity` frames, maintained add-newest /
// subtract-oldest over a ring buffer.
StreamState stream_init_fifo(DenseMatrix queries, DenseMatrix w_key, DenseMatrix w_value,
                             const AttentionConfig& cfg, std::size_t capacity);
// Exponentially decayed full history; no buffer retained.
StreamState stream_init_es(DenseMatrix queries, DenseMatrix w_key, DenseMatrix w_value,
                           const AttentionConfig& cfg, double decay);

void fifo_push(StreamState& state, std::span<const double> x);
void es_push(StreamState& state, std::span<const double> x);
void stream_push(StreamState& state, std::span<const double> x);

// phi/psi per (query, head), heads re-concatenated. Requires t >= 1.
DenseMatrix stream_read(const StreamState& state);

// Shifts the representation by exp(-c) without changing the read-out.
// Normally triggered internally by the magnitude guard; exposed so tests can
// force it at arbitrary steps.
void stream_rescale(StreamState& state, double c);

// Decay such that exp(-lambda*(window-1)) == tail_weight.
double decay_for_window(std::size_t window, double tail_weight = 1e-3);

}  // namespace testra
