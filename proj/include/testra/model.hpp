#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "testra/attention.hpp"
#include "testra/augment.hpp"
#include "testra/matrix.hpp"
#include "testra/nn.hpp"
#include "testra/streaming.hpp"

namespace testra {

struct ModelConfig {
  std::size_t d = 16;    // input feature dim
  std::size_t C = 32;    // channels
  std::size_t heads = 4;
  std::size_t M = 16;    // stage-1 compression queries
  std::size_t M2 = 16;   // stage-2 queries
  std::size_t l_enc = 2;
  std::size_t l_dec = 2;
  std::size_t L = 8;     // short-memory length
  std::size_t La = 8;    // anticipation tokens
  std::size_t N = 64;    // long-memory training window
  double lambda = -1.0;  // decay; < 0 derives it from N (1e-3 tail weight)
  std::size_t K = 5;     // action classes, background excluded
  std::size_t ffn_mult = 4;
  bool use_long_mem = true;

  double decay() const;
  AttentionConfig attn() const { return {d, C, heads}; }
  void validate() const;
};

struct LayerNormParams {
  DenseMatrix gain;   // 1 x C
  DenseMatrix shift;  // 1 x C
};

struct AttnParams {
  DenseMatrix w_query;  // C x C
  DenseMatrix w_key;    // kv_dim x C
  DenseMatrix w_value;  // kv_dim x C
  DenseMatrix w_out;    // C x C
};

struct DecoderUnitParams {
  AttnParams self_attn;
  LayerNormParams ln_self;
  AttnParams cross_attn;
  LayerNormParams ln_cross;
  LayerParams ffn1, ffn2;
  LayerNormParams ln_ffn;
};

struct ModelParams {
  DenseMatrix stage1_queries;  // M x C
  DecoderUnitParams stage1;    // cross kv from raw d-dim frames
  DenseMatrix stage2_queries;  // M2 x C
  std::vector<DecoderUnitParams> enc_units;
  LayerParams embed;                  // d -> C
  DenseMatrix anticipation_tokens;    // La x C
  std::vector<DecoderUnitParams> dec_units;
  LayerParams classifier;             // C -> K+1

  // Stable traversal order; names match the checkpoint layout.
  std::vector<std::pair<std::string, DenseMatrix*>> named_tensors();
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// One training sample: N long-memory frames followed by L short frames.
struct Clip {
  DenseMatrix features;                  // (N+L) x d
  std::vector<int> labels;               // L, ids in [0, K]
  std::vector<int> anticipation_labels;  // La
  int source = -1;                       // originating stream id
  // Action spans inside the long-memory portion, clip-relative; used by the
  // substitution augmentation.
  std::vector<ActionInstance> long_instances;
};

using Scores = DenseMatrix;  // (L+La) x (K+1) logits

// Stage 1: compress long memory into M latent rows.
DenseMatrix encode_stage1_batch(ModelParams& params, const ModelConfig& cfg,
                                const DenseMatrix& long_mem);
// Stage 2: M2 queries cross-attend the compressed rows. l_enc == 0 passes z
// through unchanged.
DenseMatrix encode_stage2(ModelParams& params, const ModelConfig& cfg, const DenseMatrix& z);
// Short window + anticipation tokens against [compressed memory || short
// window]. `pad` leading short rows are cold-start zeros masked out of
// attention. z_enc may be null (no long memory yet, or it is disabled).
Scores decode(ModelParams& params, const ModelConfig& cfg, const DenseMatrix* z_enc,
              const DenseMatrix& short_mem, std::size_t pad = 0);

Scores forward_batch(ModelParams& params, const ModelConfig& cfg, const Clip& clip);

// Streaming inference state: decayed long-memory accumulators plus the
// rolling short window. Frames enter long memory once they age out of the
// short window.
struct StreamRuntime {
  StreamState long_state;
  std::deque<std::vector<double>> short_window;
};

StreamRuntime stream_runtime_init(ModelParams& params, const ModelConfig& cfg);
// Scores for the current frame (row 0) and the La anticipation horizons.
DenseMatrix forward_stream_step(ModelParams& params, const ModelConfig& cfg,
                                StreamRuntime& runtime, std::span<const double> x);

struct GradResult {
  double loss = 0.0;
  std::vector<DenseMatrix> grads;  // aligned with named_tensors() order
};

GradResult loss_and_grads(ModelParams& params, const ModelConfig& cfg,
                          std::span<const Clip> batch);
// Loss without gradients; the evaluation path for finite differencing.
// If min_relu_input is given it receives the smallest |pre-activation| seen,
// so callers can avoid differencing across a ReLU kink.
double loss_value(ModelParams& params, const ModelConfig& cfg, std::span<const Clip> batch,
                  double* min_relu_input = nullptr);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 8;
  double lr = 7e-4;  // base 7e-5 scaled x10 for the tiny synthetic task
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_frac = 0.1;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr_end = 0.0;
};

using ClipAugment = std::function<Clip(const Clip&, std::mt19937_64&)>;

// Adam with linear warm-up then cosine decay to zero. Deterministic per seed.
std::vector<EpochLog> train(ModelParams& params, const ModelConfig& cfg,
                            const std::vector<Clip>& dataset, const TrainConfig& tc,
                            const ClipAugment& augment = {});

}  // namespace testra
