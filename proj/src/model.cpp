#include "testra/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "testra/autodiff.hpp"

namespace testra {

double ModelConfig::decay() const {
  if (lambda >= 0.0) return lambda;
  return decay_for_window(N, 1e-3);
}

void ModelConfig::validate() const {
  attn().validate();
  require(L >= 1 && N >= 1 && M >= 1 && K >= 1, "config needs L,N,M,K >= 1");
  require(M2 >= 1 && ffn_mult >= 1, "config needs M2,ffn_mult >= 1");
  if (l_enc == 0)
    require(M2 == M, "pass-through stage 2 (l_enc=0) requires M2 == M");
}

namespace {

template <class F>
void visit_unit(const std::string& prefix, DecoderUnitParams& u, F&& f) {
  f(prefix + ".self.wq", u.self_attn.w_query);
  f(prefix + ".self.wk", u.self_attn.w_key);
  f(prefix + ".self.wv", u.self_attn.w_value);
  f(prefix + ".self.wo", u.self_attn.w_out);
  f(prefix + ".ln_self.gain", u.ln_self.gain);
  f(prefix + ".ln_self.shift", u.ln_self.shift);
  f(prefix + ".cross.wq", u.cross_attn.w_query);
  f(prefix + ".cross.wk", u.cross_attn.w_key);
  f(prefix + ".cross.wv", u.cross_attn.w_value);
  f(prefix + ".cross.wo", u.cross_attn.w_out);
  f(prefix + ".ln_cross.gain", u.ln_cross.gain);
  f(prefix + ".ln_cross.shift", u.ln_cross.shift);
  f(prefix + ".ffn1.w", u.ffn1.weight);
  f(prefix + ".ffn1.b", u.ffn1.bias);
  f(prefix + ".ffn2.w", u.ffn2.weight);
  f(prefix + ".ffn2.b", u.ffn2.bias);
  f(prefix + ".ln_ffn.gain", u.ln_ffn.gain);
  f(prefix + ".ln_ffn.shift", u.ln_ffn.shift);
}

template <class F>
void visit_params(ModelParams& p, F&& f) {
  f("stage1.queries", p.stage1_queries);
  visit_unit("stage1", p.stage1, f);
  f("stage2.queries", p.stage2_queries);
  for (std::size_t i = 0; i < p.enc_units.size(); ++i)
    visit_unit("enc" + std::to_string(i), p.enc_units[i], f);
  f("embed.w", p.embed.weight);
  f("embed.b", p.embed.bias);
  f("anticipation_tokens", p.anticipation_tokens);
  for (std::size_t i = 0; i < p.dec_units.size(); ++i)
    visit_unit("dec" + std::to_string(i), p.dec_units[i], f);
  f("cls.w", p.classifier.weight);
  f("cls.b", p.classifier.bias);
}

DenseMatrix fan_in_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                           std::mt19937_64& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return DenseMatrix::random_uniform(rows, cols, -b, b, rng);
}

DecoderUnitParams init_unit(const ModelConfig& cfg, std::size_t kv_dim, std::mt19937_64& rng) {
  const std::size_t C = cfg.C;
  const std::size_t H = C * cfg.ffn_mult;
  DecoderUnitParams u;
  u.self_attn = {fan_in_uniform(C, C, C, rng), fan_in_uniform(C, C, C, rng),
                 fan_in_uniform(C, C, C, rng), fan_in_uniform(C, C, C, rng)};
  u.cross_attn = {fan_in_uniform(C, C, C, rng), fan_in_uniform(kv_dim, C, kv_dim, rng),
                  fan_in_uniform(kv_dim, C, kv_dim, rng), fan_in_uniform(C, C, C, rng)};
  u.ffn1 = {fan_in_uniform(C, H, C, rng), DenseMatrix(1, H)};
  u.ffn2 = {fan_in_uniform(H, C, H, rng), DenseMatrix(1, C)};
  auto ones = [C] {
    DenseMatrix g(1, C);
    for (double& v : g.data) v = 1.0;
    return g;
  };
  u.ln_self = {ones(), DenseMatrix(1, C)};
  u.ln_cross = {ones(), DenseMatrix(1, C)};
  u.ln_ffn = {ones(), DenseMatrix(1, C)};
  return u;
}

// --- tape-lifted parameter handles ---------------------------------------

struct LnVars {
  Var gain, shift;
};
struct AttnVars {
  Var wq, wk, wv, wo;
};
struct LinVars {
  Var w, b;
};
struct UnitVars {
  AttnVars self_a;
  LnVars ln_self;
  AttnVars cross_a;
  LnVars ln_cross;
  LinVars f1, f2;
  LnVars ln_ffn;
};

struct ModelVars {
  Var q1;
  UnitVars stage1;
  Var q2;
  std::vector<UnitVars> enc;
  LinVars embed;
  Var antok;
  std::vector<UnitVars> dec;
  LinVars cls;
  std::vector<Var> ordered;  // named_tensors() order
};

ModelVars lift(Tape& t, ModelParams& p, bool trainable) {
  ModelVars mv;
  std::unordered_map<const DenseMatrix*, Var> byptr;
  visit_params(p, [&](const std::string&, DenseMatrix& m) {
    Var v = trainable ? t.leaf(m) : t.constant(m);
    byptr.emplace(&m, v);
    mv.ordered.push_back(v);
  });
  auto at = [&](const DenseMatrix& m) { return byptr.at(&m); };
  auto unit = [&](DecoderUnitParams& u) {
    return UnitVars{{at(u.self_attn.w_query), at(u.self_attn.w_key), at(u.self_attn.w_value),
                     at(u.self_attn.w_out)},
                    {at(u.ln_self.gain), at(u.ln_self.shift)},
                    {at(u.cross_attn.w_query), at(u.cross_attn.w_key),
                     at(u.cross_attn.w_value), at(u.cross_attn.w_out)},
                    {at(u.ln_cross.gain), at(u.ln_cross.shift)},
                    {at(u.ffn1.weight), at(u.ffn1.bias)},
                    {at(u.ffn2.weight), at(u.ffn2.bias)},
                    {at(u.ln_ffn.gain), at(u.ln_ffn.shift)}};
  };
  mv.q1 = at(p.stage1_queries);
  mv.stage1 = unit(p.stage1);
  mv.q2 = at(p.stage2_queries);
  for (auto& u : p.enc_units) mv.enc.push_back(unit(u));
  mv.embed = {at(p.embed.weight), at(p.embed.bias)};
  mv.antok = at(p.anticipation_tokens);
  for (auto& u : p.dec_units) mv.dec.push_back(unit(u));
  mv.cls = {at(p.classifier.weight), at(p.classifier.bias)};
  return mv;
}

Var mha(Tape& t, Var q, Var k, Var v, std::size_t heads, const DenseMatrix* mask) {
  const std::size_t C = q->value.cols;
  const std::size_t hd = C / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * hd, (h + 1) * hd);
    Var kh = t.slice_cols(k, h * hd, (h + 1) * hd);
    Var vh = t.slice_cols(v, h * hd, (h + 1) * hd);
    Var s = t.scale(t.matmul_nt(qh, kh), sc);
    if (mask) s = t.add_const(s, *mask);
    outs.push_back(t.matmul(t.softmax_rows(s), vh));
  }
  return heads == 1 ? outs.front() : t.concat_cols(outs);
}

// Cold-start rows [0, pad) are zero padding: they may be attended by nobody
// except themselves, and attend nothing in the future.
DenseMatrix decode_self_mask(std::size_t L, std::size_t La, std::size_t pad) {
  const std::size_t T = L + La;
  const double ninf = -std::numeric_limits<double>::infinity();
  DenseMatrix m(T, T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      const bool live = j >= pad || j >= L;
      const bool ok = (j <= i && live) || j == i;
      m(i, j) = ok ? 0.0 : ninf;
    }
  return m;
}

// Keys are [compressed memory rows || short-memory rows]. Compressed rows are
// always visible; short keys obey causality per decoder position.
DenseMatrix decode_cross_mask(std::size_t L, std::size_t La, std::size_t pad,
                              std::size_t z_rows) {
  const std::size_t T = L + La;
  const double ninf = -std::numeric_limits<double>::infinity();
  DenseMatrix m(T, z_rows + L);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      bool ok;
      if (i < L)
        ok = (j <= i && j >= pad) || j == i;
      else
        ok = j >= pad;
      m(i, z_rows + j) = ok ? 0.0 : ninf;
    }
  }
  return m;
}

struct Forward {
  Tape& t;
  ModelVars& mv;
  const ModelConfig& cfg;

  Var ln(const LnVars& l, Var x) { return t.layer_norm_rows(x, l.gain, l.shift); }

  Var attn_block(const AttnVars& a, Var q_in, Var kv, const DenseMatrix* mask) {
    Var qp = t.matmul(q_in, a.wq);
    Var kp = t.matmul(kv, a.wk);
    Var vp = t.matmul(kv, a.wv);
    return t.matmul(mha(t, qp, kp, vp, cfg.heads, mask), a.wo);
  }

  Var ffn(const UnitVars& u, Var x) {
    Var h = t.relu(t.add_bias(t.matmul(x, u.f1.w), u.f1.b));
    return t.add_bias(t.matmul(h, u.f2.w), u.f2.b);
  }

  Var unit_tail(const UnitVars& u, Var h1, Var cross_out) {
    Var h2 = ln(u.ln_cross, t.add(h1, cross_out));
    return ln(u.ln_ffn, t.add(h2, ffn(u, h2)));
  }

  Var decoder_unit(const UnitVars& u, Var x, Var mem, const DenseMatrix* self_mask,
                   const DenseMatrix* cross_mask) {
    Var h1 = ln(u.ln_self, t.add(x, attn_block(u.self_a, x, x, self_mask)));
    return unit_tail(u, h1, attn_block(u.cross_a, h1, mem, cross_mask));
  }

  // Self-attention on the learned queries; independent of any input.
  Var stage1_h1() {
    return ln(mv.stage1.ln_self,
              t.add(mv.q1, attn_block(mv.stage1.self_a, mv.q1, mv.q1, nullptr)));
  }

  Var stage1_batch(Var long_mem) {
    Var h1 = stage1_h1();
    Var qpp = t.matmul(h1, mv.stage1.cross_a.wq);
    Var kp = t.matmul(long_mem, mv.stage1.cross_a.wk);
    Var vp = t.matmul(long_mem, mv.stage1.cross_a.wv);
    const DenseMatrix mask = es_log_mask(h1->value.rows, long_mem->value.rows, cfg.decay());
    Var att = mha(t, qpp, kp, vp, cfg.heads, &mask);
    return unit_tail(mv.stage1, h1, t.matmul(att, mv.stage1.cross_a.wo));
  }

  // Same tail as stage1_batch, fed from a streaming read-out instead of the
  // windowed matrix form.
  Var stage1_from_readout(Var att) {
    Var h1 = stage1_h1();
    return unit_tail(mv.stage1, h1, t.matmul(att, mv.stage1.cross_a.wo));
  }

  Var stage2(Var z) {
    if (cfg.l_enc == 0) return z;
    Var x = mv.q2;
    for (auto& u : mv.enc) x = decoder_unit(u, x, z, nullptr, nullptr);
    return x;
  }

  Var decode(Var z_enc, const DenseMatrix& short_mem, std::size_t pad) {
    require(short_mem.rows == cfg.L && short_mem.cols == cfg.d,
            "short memory must be L x d, got " + short_mem.shape_str());
    require(pad <= cfg.L, "pad exceeds short window");
    Var s_raw = t.constant(short_mem);
    Var s_emb = t.add_bias(t.matmul(s_raw, mv.embed.w), mv.embed.b);
    Var x = t.concat_rows({s_emb, mv.antok});
    x = t.add_const(x, temporal_embedding(cfg.L + cfg.La, cfg.C));
    Var short_keys = t.slice_rows(x, 0, cfg.L);
    Var mem = z_enc ? t.concat_rows({z_enc, short_keys}) : short_keys;
    const std::size_t z_rows = z_enc ? z_enc->value.rows : 0;
    const DenseMatrix self_mask = decode_self_mask(cfg.L, cfg.La, pad);
    const DenseMatrix cross_mask = decode_cross_mask(cfg.L, cfg.La, pad, z_rows);
    for (auto& u : mv.dec) x = decoder_unit(u, x, mem, &self_mask, &cross_mask);
    return t.add_bias(t.matmul(x, mv.cls.w), mv.cls.b);
  }

  Var logits_batch(const Clip& clip) {
    require(clip.features.rows == cfg.N + cfg.L && clip.features.cols == cfg.d,
            "clip must be (N+L) x d, got " + clip.features.shape_str());
    DenseMatrix long_mem(cfg.N, cfg.d);
    std::copy(clip.features.data.begin(), clip.features.data.begin() + cfg.N * cfg.d,
              long_mem.data.begin());
    DenseMatrix short_mem(cfg.L, cfg.d);
    std::copy(clip.features.data.begin() + cfg.N * cfg.d, clip.features.data.end(),
              short_mem.data.begin());
    Var z2 = nullptr;
    if (cfg.use_long_mem) z2 = stage2(stage1_batch(t.constant(long_mem)));
    return decode(z2, short_mem, 0);
  }
};

std::vector<int> clip_targets(const ModelConfig& cfg, const Clip& clip) {
  require(clip.labels.size() == cfg.L, "clip needs L per-frame labels");
  require(clip.anticipation_labels.size() == cfg.La, "clip needs La anticipation labels");
  std::vector<int> ys = clip.labels;
  ys.insert(ys.end(), clip.anticipation_labels.begin(), clip.anticipation_labels.end());
  for (int y : ys)
    if (y < 0 || static_cast<std::size_t>(y) > cfg.K)
      throw std::out_of_range("label out of range: " + std::to_string(y));
  return ys;
}

}  // namespace

std::vector<std::pair<std::string, DenseMatrix*>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  visit_params(*this, [&](const std::string& name, DenseMatrix& m) {
    out.emplace_back(name, &m);
  });
  return out;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.stage1_queries = fan_in_uniform(cfg.M, cfg.C, cfg.C, rng);
  p.stage1 = init_unit(cfg, cfg.d, rng);
  p.stage2_queries = fan_in_uniform(cfg.M2, cfg.C, cfg.C, rng);
  for (std::size_t i = 0; i < cfg.l_enc; ++i) p.enc_units.push_back(init_unit(cfg, cfg.C, rng));
  p.embed = {fan_in_uniform(cfg.d, cfg.C, cfg.d, rng), DenseMatrix(1, cfg.C)};
  p.anticipation_tokens = fan_in_uniform(cfg.La, cfg.C, cfg.C, rng);
  for (std::size_t i = 0; i < cfg.l_dec; ++i) p.dec_units.push_back(init_unit(cfg, cfg.C, rng));
  p.classifier = {fan_in_uniform(cfg.C, cfg.K + 1, cfg.C, rng), DenseMatrix(1, cfg.K + 1)};
  return p;
}

DenseMatrix encode_stage1_batch(ModelParams& params, const ModelConfig& cfg,
                                const DenseMatrix& long_mem) {
  if (long_mem.rows == 0) throw std::invalid_argument("empty long memory");
  require(long_mem.cols == cfg.d, "long memory dim mismatch");
  Tape t;
  ModelVars mv = lift(t, params, false);
  Forward f{t, mv, cfg};
  return f.stage1_batch(t.constant(long_mem))->value;
}

DenseMatrix encode_stage2(ModelParams& params, const ModelConfig& cfg, const DenseMatrix& z) {
  Tape t;
  ModelVars mv = lift(t, params, false);
  Forward f{t, mv, cfg};
  return f.stage2(t.constant(z))->value;
}

Scores decode(ModelParams& params, const ModelConfig& cfg, const DenseMatrix* z_enc,
              const DenseMatrix& short_mem, std::size_t pad) {
  Tape t;
  ModelVars mv = lift(t, params, false);
  Forward f{t, mv, cfg};
  Var z = (z_enc && cfg.use_long_mem) ? t.constant(*z_enc) : nullptr;
  return f.decode(z, short_mem, pad)->value;
}

Scores forward_batch(ModelParams& params, const ModelConfig& cfg, const Clip& clip) {
  Tape t;
  ModelVars mv = lift(t, params, false);
  Forward f{t, mv, cfg};
  return f.logits_batch(clip)->value;
}

StreamRuntime stream_runtime_init(ModelParams& params, const ModelConfig& cfg) {
  cfg.validate();
  Tape t;
  ModelVars mv = lift(t, params, false);
  Forward f{t, mv, cfg};
  const DenseMatrix h1 = f.stage1_h1()->value;
  DenseMatrix queries = matmul(h1, params.stage1.cross_attn.w_query);
  StreamRuntime rt{stream_init_es(std::move(queries), params.stage1.cross_attn.w_key,
                                  params.stage1.cross_attn.w_value, cfg.attn(), cfg.decay()),
                   {}};
  return rt;
}

DenseMatrix forward_stream_step(ModelParams& params, const ModelConfig& cfg,
                                StreamRuntime& runtime, std::span<const double> x) {
  require(x.size() == cfg.d, "frame dimension mismatch");
  if (runtime.short_window.size() == cfg.L) {
    es_push(runtime.long_state, runtime.short_window.front());
    runtime.short_window.pop_front();
  }
  runtime.short_window.emplace_back(x.begin(), x.end());
  const std::size_t pad = cfg.L - runtime.short_window.size();
  DenseMatrix short_mem(cfg.L, cfg.d);
  for (std::size_t i = 0; i < runtime.short_window.size(); ++i)
    std::copy(runtime.short_window[i].begin(), runtime.short_window[i].end(),
              short_mem.row(pad + i).begin());

  Tape t;
  ModelVars mv = lift(t, params, false);
  Forward f{t, mv, cfg};
  Var z2 = nullptr;
  if (cfg.use_long_mem && runtime.long_state.t >= 1)
    z2 = f.stage2(f.stage1_from_readout(t.constant(stream_read(runtime.long_state))));
  const DenseMatrix logits = f.decode(z2, short_mem, pad)->value;

  DenseMatrix out(1 + cfg.La, cfg.K + 1);
  std::copy(logits.row(cfg.L - 1).begin(), logits.row(cfg.L - 1).end(), out.row(0).begin());
  for (std::size_t a = 0; a < cfg.La; ++a)
    std::copy(logits.row(cfg.L + a).begin(), logits.row(cfg.L + a).end(),
              out.row(1 + a).begin());
  return out;
}

GradResult loss_and_grads(ModelParams& params, const ModelConfig& cfg,
                          std::span<const Clip> batch) {
  require(!batch.empty(), "loss needs at least one clip");
  Tape t;
  ModelVars mv = lift(t, params, true);
  Forward f{t, mv, cfg};
  Var total = nullptr;
  for (const Clip& clip : batch) {
    Var li = t.cross_entropy_mean(f.logits_batch(clip), clip_targets(cfg, clip));
    total = total ? t.add(total, li) : li;
  }
  total = t.scale(total, 1.0 / static_cast<double>(batch.size()));
  t.backward(total);
  GradResult gr;
  gr.loss = total->value(0, 0);
  gr.grads.reserve(mv.ordered.size());
  for (Var v : mv.ordered) gr.grads.push_back(v->grad);
  return gr;
}

double loss_value(ModelParams& params, const ModelConfig& cfg, std::span<const Clip> batch,
                  double* min_relu_input) {
  require(!batch.empty(), "loss needs at least one clip");
  Tape t;
  ModelVars mv = lift(t, params, false);
  Forward f{t, mv, cfg};
  double total = 0.0;
  for (const Clip& clip : batch)
    total += t.cross_entropy_mean(f.logits_batch(clip), clip_targets(cfg, clip))->value(0, 0);
  if (min_relu_input) *min_relu_input = t.min_abs_relu_input;
  return total / static_cast<double>(batch.size());
}

std::vector<EpochLog> train(ModelParams& params, const ModelConfig& cfg,
                            const std::vector<Clip>& dataset, const TrainConfig& tc,
                            const ClipAugment& augment) {
  require(!dataset.empty(), "empty training dataset");
  require(tc.batch >= 1 && tc.epochs >= 1, "train needs batch >= 1 and epochs >= 1");
  auto tensors = params.named_tensors();
  std::vector<DenseMatrix> m1, m2;
  for (auto& [name, tm] : tensors) {
    m1.emplace_back(tm->rows, tm->cols);
    m2.emplace_back(tm->rows, tm->cols);
  }

  const std::size_t steps_per_epoch = std::max<std::size_t>(1, dataset.size() / tc.batch);
  const std::size_t total_steps = tc.epochs * steps_per_epoch;
  const std::size_t warmup =
      std::max<std::size_t>(1, static_cast<std::size_t>(tc.warmup_frac * total_steps));
  auto lr_at = [&](std::size_t step) {
    if (step < warmup) return tc.lr * static_cast<double>(step + 1) / warmup;
    const double u = static_cast<double>(step - warmup) /
                     static_cast<double>(std::max<std::size_t>(1, total_steps - warmup));
    return tc.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * u));
  };

  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochLog> log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double lr_t = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      std::vector<Clip> batch;
      batch.reserve(tc.batch);
      for (std::size_t b = 0; b < tc.batch; ++b) {
        const Clip& c = dataset[order[(s * tc.batch + b) % dataset.size()]];
        batch.push_back(augment ? augment(c, rng) : c);
      }
      GradResult gr = loss_and_grads(params, cfg, batch);
      if (!std::isfinite(gr.loss))
        throw std::runtime_error("training diverged: non-finite loss at step " +
                                 std::to_string(step));
      loss_sum += gr.loss;
      lr_t = lr_at(step);
      const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step + 1));
      const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step + 1));
      for (std::size_t i = 0; i < tensors.size(); ++i) {
        DenseMatrix& p = *tensors[i].second;
        const DenseMatrix& g = gr.grads[i];
        for (std::size_t j = 0; j < p.data.size(); ++j) {
          m1[i].data[j] = tc.beta1 * m1[i].data[j] + (1.0 - tc.beta1) * g.data[j];
          m2[i].data[j] = tc.beta2 * m2[i].data[j] + (1.0 - tc.beta2) * g.data[j] * g.data[j];
          const double mhat = m1[i].data[j] / bc1;
          const double vhat = m2[i].data[j] / bc2;
          p.data[j] -= lr_t * mhat / (std::sqrt(vhat) + tc.eps);
        }
      }
    }
    log.push_back({epoch, loss_sum / static_cast<double>(steps_per_epoch), lr_t});
  }
  return log;
}

}  // namespace testra
