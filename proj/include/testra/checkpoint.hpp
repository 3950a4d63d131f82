#pragma once

#include <string>

#include "testra/model.hpp"

namespace testra {

// Versioned binary container of ModelConfig plus all tensors.
// Layout (all integers and floats little-endian):
//   bytes 0..3   magic "TSRA"
//   u32          version (currently 1)
//   u64 x 12     d, C, heads, M, M2, l_enc, l_dec, L, La, N, K, ffn_mult
//   f64          lambda
//   u8           use_long_mem
//   u32          tensor count
//   per tensor:  u32 name length, name bytes, u32 rows, u32 cols,
//                rows*cols f64 values (row-major)
void save_checkpoint(const std::string& path, ModelParams& params, const ModelConfig& cfg);

struct Checkpoint {
  ModelConfig cfg;
  ModelParams params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace testra
