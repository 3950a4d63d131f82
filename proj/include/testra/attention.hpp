#pragma once

#include <cstddef>
#include <optional>

#include "testra/matrix.hpp"

namespace testra {

struct AttentionConfig {
  std::size_t d = 0;      // input feature dim
  std::size_t C = 0;      // key/query/value channel dim
  std::size_t heads = 1;

  std::size_t head_dim() const;
  double scale() const;  // 1/sqrt(C/heads)
  void validate() const;
};

struct ProjectionWeights {
  DenseMatrix w_query;  // optional for cross-attention use; C x C when present
  DenseMatrix w_key;    // d x C
  DenseMatrix w_value;  // d x C
  DenseMatrix w_out;    // C x C
};

// Temporal smoothing kernel K(w_t, w_n): a hard window, an exponential decay,
// or no weighting at all.
struct TemporalKernel {
  enum class Kind { Box, Laplace, Constant };
  Kind kind = Kind::Constant;
  std::size_t window = 0;  // Box
  double decay = 0.0;      // Laplace, > 0

  static TemporalKernel box(std::size_t n);
  static TemporalKernel laplace(double lambda);
  static TemporalKernel constant();
};

// K(w_t, w_n) for a past index n <= t.
double temporal_weight(const TemporalKernel& kernel, std::size_t t, std::size_t n);

// exp(scale * q.k) and its log form. Callers needing stability use the log form.
double log_kappa(std::span<const double> q, std::span<const double> k, double scale);
double kappa(std::span<const double> q, std::span<const double> k, double scale);

// Sinusoidal table for positions 1..count, each row length c, entries in [-1,1].
DenseMatrix temporal_embedding(std::size_t count, std::size_t c);

// Softmax(Q K^T * scale + mask) V with multi-head split/concat. Q: MxC,
// K,V: NxC, optional additive mask MxN (-inf entries allowed).
DenseMatrix softmax_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                              const AttentionConfig& cfg,
                              const DenseMatrix* mask = nullptr);

// Normalized kernel-weighted sum over raw inputs: sum kappa(q,k_n) v_n over
// sum kappa, with k_n/v_n projected from x_n. Brute-force oracle for the
// streaming paths. Returns a C-vector as 1xC.
DenseMatrix kernel_attention(std::span<const double> q, const DenseMatrix& x,
                             const ProjectionWeights& proj, const AttentionConfig& cfg);

// Same sum with an explicit temporal kernel weighting frame ages (t = last
// row index of x, 0-based age t - n).
DenseMatrix stream_attention_bruteforce(std::span<const double> q, const DenseMatrix& x,
                                        const ProjectionWeights& proj,
                                        const AttentionConfig& cfg,
                                        const TemporalKernel& kernel);

// Additive log-mask for windowed decay training: every row is
// [-lambda(N-1), ..., -lambda, 0]. The decay-weight matrix itself is never
// materialized.
DenseMatrix es_log_mask(std::size_t m, std::size_t n, double lambda);

// Softmax(log-mask + Q K^T * scale) V; the windowed training form of
// decayed attention.
DenseMatrix es_attention_windowed(const DenseMatrix& q, const DenseMatrix& k,
                                  const DenseMatrix& v, double lambda,
                                  const AttentionConfig& cfg);

}  // namespace testra
