#include "testra/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace testra {

namespace {

constexpr double kMagnitudeGuard = 1e100;
constexpr std::uint64_t kRebuildInterval = 4096;

StreamState init_common(DenseMatrix queries, DenseMatrix w_key, DenseMatrix w_value,
                        const AttentionConfig& cfg) {
  cfg.validate();
  require(queries.cols == cfg.C, "query bank channel mismatch");
  require(queries.rows >= 1, "query bank must hold at least one query");
  require(w_key.rows == cfg.d && w_key.cols == cfg.C, "w_key shape mismatch");
  require(w_value.rows == cfg.d && w_value.cols == cfg.C, "w_value shape mismatch");
  StreamState s;
  s.cfg = cfg;
  s.queries = std::move(queries);
  s.w_key = std::move(w_key);
  s.w_value = std::move(w_value);
  s.phi = DenseMatrix(s.queries.rows, cfg.C);
  s.psi = DenseMatrix(s.queries.rows, cfg.heads);
  s.log_scale = DenseMatrix(s.queries.rows, cfg.heads);
  return s;
}

// kappa per (query, head) in the state's rescaled frame, rescaling first if
// the new frame alone would overflow.
DenseMatrix rescaled_kappas(StreamState& s, const DenseMatrix& f) {
  const std::size_t hd = s.cfg.head_dim();
  const double sc = s.cfg.scale();
  DenseMatrix logk(s.queries.rows, s.cfg.heads);
  double max_logk = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < s.queries.rows; ++m) {
    for (std::size_t h = 0; h < s.cfg.heads; ++h) {
      const double v = log_kappa(s.queries.row(m).subspan(h * hd, hd),
                                 f.row(0).subspan(h * hd, hd), sc);
      logk(m, h) = v;
      max_logk = std::max(max_logk, v);
    }
  }
  const double exponent = s.log_scale(0, 0);
  if (max_logk - exponent > 690.0) stream_rescale(s, max_logk - exponent);
  DenseMatrix kap(s.queries.rows, s.cfg.heads);
  const double shifted = s.log_scale(0, 0);
  for (std::size_t i = 0; i < kap.data.size(); ++i)
    kap.data[i] = std::exp(logk.data[i] - shifted);
  return kap;
}

void guard_magnitude(StreamState& s) {
  double mx = 0.0;
  for (double v : s.psi.data) mx = std::max(mx, std::abs(v));
  for (double v : s.phi.data) mx = std::max(mx, std::abs(v));
  if (mx > kMagnitudeGuard) stream_rescale(s, std::log(mx));
}

void accumulate(StreamState& s, const DenseMatrix& kap, const DenseMatrix& v, double sign) {
  const std::size_t hd = s.cfg.head_dim();
  for (std::size_t m = 0; m < s.queries.rows; ++m) {
    for (std::size_t h = 0; h < s.cfg.heads; ++h) {
      const double w = sign * kap(m, h);
      s.psi(m, h) += w;
      for (std::size_t c = 0; c < hd; ++c) s.phi(m, h * hd + c) += w * v(0, h * hd + c);
    }
  }
}

// Exact recomputation from the ring; bounds the cancellation drift of the
// subtraction-based updates.
void rebuild_from_ring(StreamState& s) {
  s.phi = DenseMatrix(s.phi.rows, s.phi.cols);
  s.psi = DenseMatrix(s.psi.rows, s.psi.cols);
  for (const auto& e : s.ring) accumulate(s, e.kappa, e.value, 1.0);
  s.pushes_since_rebuild = 0;
}

}  // namespace

StreamState stream_init_fifo(DenseMatrix queries, DenseMatrix w_key, DenseMatrix w_value,
                             const AttentionConfig& cfg, std::size_t capacity) {
  if (capacity == 0) throw std::invalid_argument("fifo capacity must be >= 1");
  StreamState s = init_common(std::move(queries), std::move(w_key), std::move(w_value), cfg);
  s.mode = StreamMode::Fifo;
  s.capacity = capacity;
  return s;
}

StreamState stream_init_es(DenseMatrix queries, DenseMatrix w_key, DenseMatrix w_value,
                           const AttentionConfig& cfg, double decay) {
  require(decay >= 0.0, "es decay must be >= 0");
  StreamState s = init_common(std::move(queries), std::move(w_key), std::move(w_value), cfg);
  s.mode = StreamMode::Es;
  s.decay = decay;
  return s;
}

void fifo_push(StreamState& state, std::span<const double> x) {
  if (state.mode != StreamMode::Fifo)
    throw std::logic_error("fifo_push on a non-FIFO stream state");
  require(x.size() == state.cfg.d, "frame dimension mismatch");
  const DenseMatrix xm = DenseMatrix::from_row(x);
  const DenseMatrix f = matmul(xm, state.w_key);
  DenseMatrix v = matmul(xm, state.w_value);
  DenseMatrix kap = rescaled_kappas(state, f);
  accumulate(state, kap, v, 1.0);
  state.ring.push_back({std::move(kap), std::move(v)});
  if (state.ring.size() > state.capacity) {
    const auto& old = state.ring.front();
    accumulate(state, old.kappa, old.value, -1.0);
    state.ring.pop_front();
  }
  state.t += 1;
  if (++state.pushes_since_rebuild >= kRebuildInterval) rebuild_from_ring(state);
  guard_magnitude(state);
}

void es_push(StreamState& state, std::span<const double> x) {
  if (state.mode != StreamMode::Es)
    throw std::logic_error("es_push on a non-ES stream state");
  require(x.size() == state.cfg.d, "frame dimension mismatch");
  const DenseMatrix xm = DenseMatrix::from_row(x);
  const DenseMatrix f = matmul(xm, state.w_key);
  const DenseMatrix v = matmul(xm, state.w_value);
  const DenseMatrix kap = rescaled_kappas(state, f);
  const double df = std::exp(-state.decay);
  for (double& p : state.phi.data) p *= df;
  for (double& p : state.psi.data) p *= df;
  accumulate(state, kap, v, 1.0);
  state.t += 1;
  guard_magnitude(state);
}

void stream_push(StreamState& state, std::span<const double> x) {
  state.mode == StreamMode::Fifo ? fifo_push(state, x) : es_push(state, x);
}

DenseMatrix stream_read(const StreamState& state) {
  if (state.t == 0) throw std::runtime_error("empty stream");
  const std::size_t hd = state.cfg.head_dim();
  DenseMatrix out(state.queries.rows, state.cfg.C);
  for (std::size_t m = 0; m < out.rows; ++m)
    for (std::size_t h = 0; h < state.cfg.heads; ++h)
      for (std::size_t c = 0; c < hd; ++c)
        out(m, h * hd + c) = state.phi(m, h * hd + c) / state.psi(m, h);
  return out;
}

void stream_rescale(StreamState& state, double c) {
  const double f = std::exp(-c);
  for (double& v : state.phi.data) v *= f;
  for (double& v : state.psi.data) v *= f;
  for (double& v : state.log_scale.data) v += c;
  for (auto& e : state.ring)
    for (double& v : e.kappa.data) v *= f;
}

double decay_for_window(std::size_t window, double tail_weight) {
  require(window >= 2, "decay_for_window needs window >= 2");
  require(tail_weight > 0.0 && tail_weight < 1.0, "tail weight must be in (0,1)");
  return -std::log(tail_weight) / static_cast<double>(window - 1);
}

}  // namespace testra
