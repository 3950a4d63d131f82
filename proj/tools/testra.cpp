#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "testra/bench.hpp"
#include "testra/checkpoint.hpp"
#include "testra/io.hpp"
#include "testra/metrics.hpp"
#include "testra/model.hpp"
#include "testra/selftest.hpp"
#include "testra/synth.hpp"

namespace {

using nlohmann::json;
using namespace testra;

std::vector<Clip> build_dataset(const RunConfig& rc, std::uint64_t seed,
                                std::vector<LabeledStream>& streams) {
  streams.clear();
  std::vector<Clip> dataset;
  for (std::size_t i = 0; i < rc.train_streams; ++i) {
    LabeledStream ls = gen_stream(rc.synth, seed * 1000 + i);
    ls.source = static_cast<int>(i);
    auto clips = sample_clips(ls, rc.model, rc.clips_per_stream, seed * 7777 + i);
    dataset.insert(dataset.end(), clips.begin(), clips.end());
    streams.push_back(std::move(ls));
  }
  return dataset;
}

int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out) {
  RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  std::vector<LabeledStream> streams;
  std::vector<Clip> dataset = build_dataset(rc, seed, streams);
  std::cout << "dataset: " << dataset.size() << " clips from " << streams.size()
            << " streams\n";

  InstanceBank bank = build_instance_bank(streams);
  ClipAugment augment;
  if (rc.p_mc > 0.0 && bank.total_segments() > 0) {
    const double p = rc.p_mc;
    augment = [p, &bank](const Clip& c, std::mt19937_64& rng) {
      Clip out_clip = c;
      out_clip.features = mixclip(c.features, c.long_instances, bank, p, c.source, rng);
      return out_clip;
    };
  }

  ModelParams params = init_params(rc.model, seed);
  TrainConfig tc = rc.train;
  tc.seed = seed;
  const auto log = train(params, rc.model, dataset, tc, augment);
  for (const auto& e : log)
    std::cout << "epoch " << e.epoch << " loss " << e.mean_loss << " lr " << e.lr_end << '\n';
  save_checkpoint(out, params, rc.model);
  std::cout << "saved " << out << '\n';
  return 0;
}

// Streaming outputs over a freshly generated validation stream.
std::vector<DenseMatrix> stream_outputs(ModelParams& params, const ModelConfig& cfg,
                                        const LabeledStream& ls, std::size_t frames) {
  StreamRuntime rt = stream_runtime_init(params, cfg);
  std::vector<DenseMatrix> outs;
  outs.reserve(frames);
  for (std::size_t t = 0; t < frames && t < ls.features.rows; ++t)
    outs.push_back(forward_stream_step(params, cfg, rt, ls.features.row(t)));
  return outs;
}

int cmd_eval(const std::string& ckpt_path, const std::vector<std::size_t>& horizons,
             const std::string& json_path, const std::string& config_path,
             std::uint64_t seed) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  rc.synth.K = ck.cfg.K;
  rc.synth.d = ck.cfg.d;

  LabeledStream val = gen_stream(rc.synth, seed);
  const std::size_t frames = std::min(rc.val_frames, val.features.rows);
  const auto outs = stream_outputs(ck.params, ck.cfg, val, frames);
  const std::vector<int> labels(val.labels.begin(), val.labels.begin() + frames);

  json report;
  report["frames"] = frames;
  report["seed"] = seed;
  for (std::size_t h : horizons) {
    if (h > ck.cfg.La) {
      std::cerr << "horizon " << h << " exceeds the model's anticipation range "
                << ck.cfg.La << '\n';
      return 1;
    }
    const MetricReport mr = anticipation_map(outs, labels, ck.cfg.K, h);
    json entry;
    entry["map"] = mr.map;
    entry["classes_scored"] = mr.classes_scored;
    entry["per_class_ap"] = mr.per_class_ap;
    report["horizons"][std::to_string(h)] = entry;
    std::cout << "horizon " << h << " mAP " << mr.map << " (" << mr.classes_scored
              << " classes)\n";
  }
  if (!json_path.empty()) {
    std::ofstream os(json_path);
    if (!os) {
      std::cerr << "cannot write " << json_path << '\n';
      return 1;
    }
    os << report.dump(2) << '\n';
    std::cout << "wrote " << json_path << '\n';
  }
  return 0;
}

int cmd_stream(const std::string& ckpt_path, const std::string& input,
               const std::string& emit) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  const DenseMatrix feats = read_features(input);
  if (feats.cols != ck.cfg.d) {
    std::cerr << "feature dim " << feats.cols << " does not match model d=" << ck.cfg.d
              << '\n';
    return 1;
  }
  std::ofstream os(emit);
  if (!os) {
    std::cerr << "cannot write " << emit << '\n';
    return 1;
  }
  StreamRuntime rt = stream_runtime_init(ck.params, ck.cfg);
  for (std::size_t t = 0; t < feats.rows; ++t) {
    const DenseMatrix out = forward_stream_step(ck.params, ck.cfg, rt, feats.row(t));
    json line;
    line["t"] = t;
    line["scores"] = std::vector<double>(out.row(0).begin(), out.row(0).end());
    std::vector<std::vector<double>> ant;
    for (std::size_t a = 0; a < ck.cfg.La; ++a)
      ant.emplace_back(out.row(1 + a).begin(), out.row(1 + a).end());
    line["anticipations"] = ant;
    os << line.dump() << '\n';
  }
  std::cout << "wrote " << feats.rows << " frames to " << emit << '\n';
  return 0;
}

int cmd_bench(const BenchConfig& bc, const std::string& csv_path) {
  const BenchReport report = run_benchmark(bc);
  const std::string csv = bench_report_csv(report);
  std::cout << csv;
  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    if (!os) {
      std::cerr << "cannot write " << csv_path << '\n';
      return 1;
    }
    os << csv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming-attention engine: selftest, benchmark, train, eval, stream"};
  app.require_subcommand(1);

  app.add_subcommand("selftest", "run all oracle-equivalence suites");

  auto* bench = app.add_subcommand("bench", "per-frame cost across window sizes");
  BenchConfig bc;
  bc.frames = 20000;
  std::string csv_path;
  bench->add_option("--windows", bc.windows, "window sizes")->delimiter(',');
  bench->add_option("--modes", bc.modes, "stream-es, stream-fifo, windowed")->delimiter(',');
  bench->add_option("--frames", bc.frames, "measured frames per configuration");
  bench->add_option("--reps", bc.reps, "repetitions (first is warm-up)");
  bench->add_option("--csv", csv_path, "write the report to this CSV file");

  auto* train_cmd = app.add_subcommand("train", "train on synthetic streams");
  std::string config_path, out_path = "model.ckpt";
  std::uint64_t seed = 1;
  train_cmd->add_option("--config", config_path, "key=value config file");
  train_cmd->add_option("--seed", seed, "master seed");
  train_cmd->add_option("--out", out_path, "checkpoint output path");

  auto* eval_cmd = app.add_subcommand("eval", "mAP on a held-out synthetic stream");
  std::string ckpt_path, json_path, eval_config;
  std::vector<std::size_t> horizons = {0, 2, 4, 8};
  std::uint64_t eval_seed = 99;
  eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval_cmd->add_option("--horizons", horizons, "anticipation horizons (frames)")
      ->delimiter(',');
  eval_cmd->add_option("--json", json_path, "write the report to this JSON file");
  eval_cmd->add_option("--config", eval_config, "key=value config for the validation data");
  eval_cmd->add_option("--seed", eval_seed, "validation stream seed");

  auto* stream_cmd = app.add_subcommand("stream", "score a features.bin frame by frame");
  std::string in_path, emit_path = "scores.jsonl";
  std::string stream_ckpt;
  stream_cmd->add_option("--ckpt", stream_ckpt, "checkpoint path")->required();
  stream_cmd->add_option("--input", in_path, "features.bin input")->required();
  stream_cmd->add_option("--emit", emit_path, "scores.jsonl output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("selftest")) return selftest(std::cout) ? 0 : 1;
    if (app.got_subcommand("bench")) return cmd_bench(bc, csv_path);
    if (app.got_subcommand("train")) return cmd_train(config_path, seed, out_path);
    if (app.got_subcommand("eval"))
      return cmd_eval(ckpt_path, horizons, json_path, eval_config, eval_seed);
    if (app.got_subcommand("stream")) return cmd_stream(stream_ckpt, in_path, emit_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
