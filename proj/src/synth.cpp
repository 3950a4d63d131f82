#include "testra/synth.hpp"

#include <stdexcept>

namespace testra {

void SynthConfig::validate() const {
  require(K >= 1 && d >= 1 && T >= 1, "synth config needs K,d,T >= 1");
  require(sigma_noise >= 0.0 && drift_sigma >= 0.0, "noise levels must be >= 0");
  require(dur_min >= 1 && dur_min <= dur_max, "bad event duration range");
  require(gap_min <= gap_max, "bad gap range");
}

DenseMatrix class_prototypes(const SynthConfig& cfg) {
  std::mt19937_64 rng(cfg.proto_seed);
  DenseMatrix protos = DenseMatrix::random_normal(cfg.K, cfg.d, 0.0, 1.0, rng);
  for (std::size_t k = 0; k < cfg.K; ++k) {
    double norm = 0.0;
    for (double v : protos.row(k)) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : protos.row(k)) v = v / norm * cfg.proto_scale;
  }
  return protos;
}

LabeledStream gen_stream(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const DenseMatrix protos = class_prototypes(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> gap_dist(cfg.gap_min, cfg.gap_max);
  std::uniform_int_distribution<std::size_t> dur_dist(cfg.dur_min, cfg.dur_max);
  std::uniform_int_distribution<int> label_dist(1, static_cast<int>(cfg.K));

  LabeledStream s;
  s.labels.assign(cfg.T, 0);
  std::size_t pos = 0;
  while (true) {
    pos += gap_dist(rng);
    const std::size_t dur = dur_dist(rng);
    if (pos + dur > cfg.T) break;
    const int label = label_dist(rng);
    s.instances.push_back({pos, pos + dur, label});
    for (std::size_t t = pos; t < pos + dur; ++t) s.labels[t] = label;
    pos += dur;
  }

  s.features = DenseMatrix(cfg.T, cfg.d);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> drift(cfg.d, 0.0);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    for (std::size_t j = 0; j < cfg.d; ++j) {
      if (cfg.drift_sigma > 0.0) drift[j] += cfg.drift_sigma * noise(rng);
      double v = drift[j] + cfg.sigma_noise * noise(rng);
      if (s.labels[t] != 0) v += protos(static_cast<std::size_t>(s.labels[t] - 1), j);
      s.features(t, j) = v;
    }
  }
  return s;
}

Clip make_clip(const LabeledStream& stream, const ModelConfig& cfg, std::size_t t_last) {
  const std::size_t span = cfg.N + cfg.L;
  require(t_last + 1 >= span, "clip end too early for N+L history");
  require(t_last + cfg.La < stream.labels.size(), "clip end too late for anticipation labels");
  const std::size_t t0 = t_last + 1 - span;

  Clip c;
  c.source = stream.source;
  c.features = DenseMatrix(span, stream.features.cols);
  std::copy(stream.features.data.begin() + t0 * stream.features.cols,
            stream.features.data.begin() + (t_last + 1) * stream.features.cols,
            c.features.data.begin());
  c.labels.assign(stream.labels.begin() + static_cast<std::ptrdiff_t>(t_last + 1 - cfg.L),
                  stream.labels.begin() + static_cast<std::ptrdiff_t>(t_last + 1));
  c.anticipation_labels.assign(
      stream.labels.begin() + static_cast<std::ptrdiff_t>(t_last + 1),
      stream.labels.begin() + static_cast<std::ptrdiff_t>(t_last + 1 + cfg.La));

  // instances intersected with the long span [t0, t0+N), clip-relative
  const std::size_t long_end = t0 + cfg.N;
  for (const auto& inst : stream.instances) {
    const std::size_t a = std::max(inst.start, t0);
    const std::size_t b = std::min(inst.end, long_end);
    if (a < b) c.long_instances.push_back({a - t0, b - t0, inst.label});
  }
  return c;
}

std::vector<Clip> sample_clips(const LabeledStream& stream, const ModelConfig& cfg,
                               std::size_t count, std::uint64_t seed) {
  const std::size_t lo = cfg.N + cfg.L - 1;
  require(stream.labels.size() > lo + cfg.La, "stream too short for clips");
  const std::size_t hi = stream.labels.size() - cfg.La - 1;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(lo, hi);
  std::vector<Clip> clips;
  clips.reserve(count);
  for (std::size_t i = 0; i < count; ++i) clips.push_back(make_clip(stream, cfg, pick(rng)));
  return clips;
}

InstanceBank build_instance_bank(std::span<const LabeledStream> streams) {
  InstanceBank bank;
  for (const auto& s : streams) {
    for (const auto& inst : s.instances) {
      DenseMatrix seg(inst.end - inst.start, s.features.cols);
      std::copy(s.features.data.begin() + inst.start * s.features.cols,
                s.features.data.begin() + inst.end * s.features.cols, seg.data.begin());
      bank.add(inst.label, std::move(seg), s.source);
    }
  }
  return bank;
}

}  // namespace testra
