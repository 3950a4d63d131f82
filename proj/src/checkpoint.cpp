#include "testra/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace testra {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'R', 'A'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, ModelParams& params, const ModelConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  for (std::uint64_t v : {cfg.d, cfg.C, cfg.heads, cfg.M, cfg.M2, cfg.l_enc, cfg.l_dec,
                          cfg.L, cfg.La, cfg.N, cfg.K, cfg.ffn_mult})
    write_u64(os, v);
  write_f64(os, cfg.lambda);
  const char ulm = cfg.use_long_mem ? 1 : 0;
  os.write(&ulm, 1);
  auto tensors = params.named_tensors();
  write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (auto& [name, m] : tensors) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(m->rows));
    write_u32(os, static_cast<std::uint32_t>(m->cols));
    os.write(reinterpret_cast<const char*>(m->data.data()),
             static_cast<std::streamsize>(m->data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const std::uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  cfg.d = read_u64(is);
  cfg.C = read_u64(is);
  cfg.heads = read_u64(is);
  cfg.M = read_u64(is);
  cfg.M2 = read_u64(is);
  cfg.l_enc = read_u64(is);
  cfg.l_dec = read_u64(is);
  cfg.L = read_u64(is);
  cfg.La = read_u64(is);
  cfg.N = read_u64(is);
  cfg.K = read_u64(is);
  cfg.ffn_mult = read_u64(is);
  cfg.lambda = read_f64(is);
  char ulm = 1;
  is.read(&ulm, 1);
  cfg.use_long_mem = ulm != 0;
  cfg.validate();

  Checkpoint ck{cfg, init_params(cfg, 0)};
  auto tensors = ck.params.named_tensors();
  const std::uint32_t count = read_u32(is);
  if (count != tensors.size())
    throw std::runtime_error("checkpoint tensor count mismatch in " + path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rows = read_u32(is);
    const std::uint32_t cols = read_u32(is);
    DenseMatrix* target = nullptr;
    for (auto& [tname, tm] : tensors)
      if (tname == name) target = tm;
    if (!target) throw std::runtime_error("unknown tensor in checkpoint: " + name);
    if (target->rows != rows || target->cols != cols)
      throw std::runtime_error("tensor shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(target->data.data()),
            static_cast<std::streamsize>(target->data.size() * sizeof(double)));
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return ck;
}

}  // namespace testra
