#include "testra/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace testra {

namespace {

constexpr char kFeaturesMagic[4] = {'F', 'T', 'R', 'A'};
constexpr std::uint32_t kFeaturesVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void write_features(const std::string& path, const DenseMatrix& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kFeaturesMagic, 4);
  write_u32(os, kFeaturesVersion);
  write_u32(os, static_cast<std::uint32_t>(features.rows));
  write_u32(os, static_cast<std::uint32_t>(features.cols));
  os.write(reinterpret_cast<const char*>(features.data.data()),
           static_cast<std::streamsize>(features.data.size() * sizeof(double)));
  if (!os) throw std::runtime_error("failed writing features: " + path);
}

DenseMatrix read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open features file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kFeaturesMagic, 4) != 0)
    throw std::runtime_error("bad features magic in " + path);
  const std::uint32_t version = read_u32(is);
  if (version != kFeaturesVersion)
    throw std::runtime_error("unsupported features version " + std::to_string(version));
  const std::uint32_t t = read_u32(is);
  const std::uint32_t d = read_u32(is);
  DenseMatrix m(t, d);
  is.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("truncated features file: " + path);
  return m;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                              ": empty key");
    kv[key] = value;
  }
  return kv;
}

RunConfig run_config_from_kv(const std::map<std::string, std::string>& kv) {
  RunConfig rc;
  for (const auto& [key, value] : kv) {
    auto as_u = [&] { return static_cast<std::size_t>(std::stoull(value)); };
    auto as_f = [&] { return std::stod(value); };
    auto as_b = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw std::runtime_error("bad boolean for " + key + ": " + value);
    };
    if (key == "d") { rc.model.d = as_u(); rc.synth.d = as_u(); }
    else if (key == "C") rc.model.C = as_u();
    else if (key == "heads") rc.model.heads = as_u();
    else if (key == "M") rc.model.M = as_u();
    else if (key == "M2") rc.model.M2 = as_u();
    else if (key == "l_enc") rc.model.l_enc = as_u();
    else if (key == "l_dec") rc.model.l_dec = as_u();
    else if (key == "L") rc.model.L = as_u();
    else if (key == "L_a") rc.model.La = as_u();
    else if (key == "N") rc.model.N = as_u();
    else if (key == "lambda") rc.model.lambda = as_f();
    else if (key == "K") { rc.model.K = as_u(); rc.synth.K = as_u(); }
    else if (key == "ffn_mult") rc.model.ffn_mult = as_u();
    else if (key == "use_long_mem") rc.model.use_long_mem = as_b();
    else if (key == "T") rc.synth.T = as_u();
    else if (key == "sigma_noise") rc.synth.sigma_noise = as_f();
    else if (key == "drift_sigma") rc.synth.drift_sigma = as_f();
    else if (key == "dur_min") rc.synth.dur_min = as_u();
    else if (key == "dur_max") rc.synth.dur_max = as_u();
    else if (key == "gap_min") rc.synth.gap_min = as_u();
    else if (key == "gap_max") rc.synth.gap_max = as_u();
    else if (key == "proto_seed") rc.synth.proto_seed = std::stoull(value);
    else if (key == "epochs") rc.train.epochs = as_u();
    else if (key == "batch") rc.train.batch = as_u();
    else if (key == "lr") rc.train.lr = as_f();
    else if (key == "warmup_frac") rc.train.warmup_frac = as_f();
    else if (key == "p_mc") rc.p_mc = as_f();
    else if (key == "train_streams") rc.train_streams = as_u();
    else if (key == "clips_per_stream") rc.clips_per_stream = as_u();
    else if (key == "val_frames") rc.val_frames = as_u();
    else throw std::runtime_error("unknown config key: " + key);
  }
  rc.model.validate();
  rc.synth.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_kv(parse_kv_file(path));
}

}  // namespace testra
