#include "testra/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace testra {

namespace {

using Clock = std::chrono::steady_clock;

CostStats stats_from_samples(std::vector<double>& ns) {
  std::sort(ns.begin(), ns.end());
  CostStats s;
  s.median_ns = ns[ns.size() / 2];
  s.p95_ns = ns[std::min(ns.size() - 1, static_cast<std::size_t>(ns.size() * 0.95))];
  return s;
}

template <class PushRead>
CostStats probe_impl(const DenseMatrix& pool, std::size_t frames, std::size_t reps,
                     PushRead&& push_read) {
  require(reps >= 3, "per_frame_cost_probe needs reps >= 3");
  require(frames >= 1 && pool.rows >= 1, "probe needs frames and a non-empty pool");
  std::vector<double> samples;
  samples.reserve(frames * (reps - 1));
  std::size_t cursor = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < frames; ++i) {
      const auto row = pool.row(cursor++ % pool.rows);
      const auto t0 = Clock::now();
      push_read(row);
      const auto t1 = Clock::now();
      if (r > 0)  // first rep is warm-up
        samples.push_back(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    }
  }
  return stats_from_samples(samples);
}

}  // namespace

void WindowedAttention::push(std::span<const double> x) {
  const DenseMatrix xm = DenseMatrix::from_row(x);
  ring.emplace_back(matmul(xm, w_key), matmul(xm, w_value));
  if (ring.size() > capacity) ring.pop_front();
}

DenseMatrix WindowedAttention::read() const {
  if (ring.empty()) throw std::runtime_error("empty window");
  const std::size_t hd = cfg.head_dim();
  const double sc = cfg.scale();
  DenseMatrix out(queries.rows, cfg.C);
  std::vector<double> scores(ring.size());
  for (std::size_t m = 0; m < queries.rows; ++m) {
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::size_t off = h * hd;
      const auto qh = queries.row(m).subspan(off, hd);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t n = 0; n < ring.size(); ++n) {
        scores[n] = sc * dot(qh, ring[n].first.row(0).subspan(off, hd));
        mx = std::max(mx, scores[n]);
      }
      double den = 0.0;
      for (std::size_t n = 0; n < ring.size(); ++n) {
        const double w = std::exp(scores[n] - mx);
        den += w;
        const auto vh = ring[n].second.row(0).subspan(off, hd);
        for (std::size_t c = 0; c < hd; ++c) out(m, off + c) += w * vh[c];
      }
      for (std::size_t c = 0; c < hd; ++c) out(m, off + c) /= den;
    }
  }
  return out;
}

CostStats per_frame_cost_probe(StreamState& state, const DenseMatrix& pool,
                               std::size_t frames, std::size_t reps) {
  volatile double sink = 0.0;
  return probe_impl(pool, frames, reps, [&](std::span<const double> x) {
    stream_push(state, x);
    sink = stream_read(state)(0, 0);
  });
}

CostStats per_frame_cost_probe(WindowedAttention& wa, const DenseMatrix& pool,
                               std::size_t frames, std::size_t reps) {
  volatile double sink = 0.0;
  return probe_impl(pool, frames, reps, [&](std::span<const double> x) {
    wa.push(x);
    sink = wa.read()(0, 0);
  });
}

BenchReport run_benchmark(const BenchConfig& cfg) {
  require(!cfg.windows.empty(), "benchmark needs at least one window");
  AttentionConfig acfg{cfg.d, cfg.C, cfg.heads};
  acfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const double b = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  const DenseMatrix queries = DenseMatrix::random_uniform(cfg.M, cfg.C, -b, b, rng);
  const DenseMatrix w_key = DenseMatrix::random_uniform(cfg.d, cfg.C, -b, b, rng);
  const DenseMatrix w_value = DenseMatrix::random_uniform(cfg.d, cfg.C, -b, b, rng);
  const DenseMatrix pool = DenseMatrix::random_normal(1024, cfg.d, 0.0, 1.0, rng);

  BenchReport report;
  for (const std::string& mode : cfg.modes) {
    for (std::size_t window : cfg.windows) {
      CostStats stats;
      if (mode == "stream-es") {
        StreamState s = stream_init_es(queries, w_key, w_value, acfg,
                                       decay_for_window(window));
        for (std::size_t i = 0; i < window; ++i) es_push(s, pool.row(i % pool.rows));
        stats = per_frame_cost_probe(s, pool, cfg.frames, cfg.reps);
      } else if (mode == "stream-fifo") {
        StreamState s = stream_init_fifo(queries, w_key, w_value, acfg, window);
        for (std::size_t i = 0; i < window; ++i) fifo_push(s, pool.row(i % pool.rows));
        stats = per_frame_cost_probe(s, pool, cfg.frames, cfg.reps);
      } else if (mode == "windowed") {
        WindowedAttention wa{queries, w_key, w_value, acfg, window, {}};
        for (std::size_t i = 0; i < window; ++i) wa.push(pool.row(i % pool.rows));
        stats = per_frame_cost_probe(wa, pool, cfg.frames, cfg.reps);
      } else {
        throw std::invalid_argument("unknown benchmark mode: " + mode);
      }
      require(stats.median_ns > 0.0, "benchmark produced non-positive median");
      report.rows.push_back({mode, window, cfg.frames, stats.median_ns, stats.p95_ns});
    }
  }
  return report;
}

std::string bench_report_csv(const BenchReport& report) {
  std::ostringstream os;
  os << "mode,window,frames,median_ns,p95_ns\n";
  for (const auto& r : report.rows)
    os << r.mode << ',' << r.window << ',' << r.frames << ',' << r.median_ns << ','
       << r.p95_ns << '\n';
  return os.str();
}

}  // namespace testra
