#pragma once

#include <map>
#include <string>

#include "testra/model.hpp"
#include "testra/synth.hpp"

namespace testra {

// features.bin: u32 magic "FTRA", u32 version, u32 T, u32 d (little-endian),
// then T*d little-endian 64-bit floats, row-major.
void write_features(const std::string& path, const DenseMatrix& features);
DenseMatrix read_features(const std::string& path);

// Flat key=value text, '#' starts a comment. Keys mirror the model / synth /
// training field names; unknown keys are rejected.
std::map<std::string, std::string> parse_kv_file(const std::string& path);

struct RunConfig {
  ModelConfig model;
  SynthConfig synth;
  TrainConfig train;
  double p_mc = 0.5;            // substitution probability; 0 disables
  std::size_t train_streams = 4;
  std::size_t clips_per_stream = 64;
  std::size_t val_frames = 4000;
};

RunConfig run_config_from_kv(const std::map<std::string, std::string>& kv);
RunConfig load_run_config(const std::string& path);

}  // namespace testra
