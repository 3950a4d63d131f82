#include "testra/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace testra {

std::size_t AttentionConfig::head_dim() const { return C / heads; }

double AttentionConfig::scale() const {
  return 1.0 / std::sqrt(static_cast<double>(head_dim()));
}

void AttentionConfig::validate() const {
  require(C >= 1 && heads >= 1, "attention config needs C >= 1, heads >= 1");
  require(C % heads == 0, "C must be divisible by heads");
}

TemporalKernel TemporalKernel::box(std::size_t n) {
  require(n >= 1, "box kernel window must be >= 1");
  return {Kind::Box, n, 0.0};
}

TemporalKernel TemporalKernel::laplace(double lambda) {
  require(lambda > 0.0, "laplace kernel decay must be > 0");
  return {Kind::Laplace, 0, lambda};
}

TemporalKernel TemporalKernel::constant() { return {Kind::Constant, 0, 0.0}; }

double temporal_weight(const TemporalKernel& kernel, std::size_t t, std::size_t n) {
  if (n > t) throw std::invalid_argument("future index: n > t");
  switch (kernel.kind) {
    case TemporalKernel::Kind::Box:
      return (t - n) < kernel.window ? 1.0 : 0.0;
    case TemporalKernel::Kind::Laplace:
      return std::exp(-kernel.decay * static_cast<double>(t - n));
    case TemporalKernel::Kind::Constant:
      return 1.0;
  }
  return 0.0;
}

double log_kappa(std::span<const double> q, std::span<const double> k, double scale) {
  require(q.size() == k.size(), "kappa length mismatch");
  return scale * dot(q, k);
}

double kappa(std::span<const double> q, std::span<const double> k, double scale) {
  return std::exp(log_kappa(q, k, scale));
}

DenseMatrix temporal_embedding(std::size_t count, std::size_t c) {
  DenseMatrix table(count, c);
  for (std::size_t pos = 0; pos < count; ++pos) {
    for (std::size_t i = 0; i < c; ++i) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(i / 2) / static_cast<double>(c));
      const double angle = static_cast<double>(pos + 1) * freq;
      table(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

DenseMatrix softmax_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                              const AttentionConfig& cfg, const DenseMatrix* mask) {
  cfg.validate();
  require(q.cols == cfg.C && k.cols == cfg.C && v.cols == cfg.C,
          "attention channel mismatch");
  require(k.rows == v.rows, "key/value count mismatch");
  if (mask)
    require(mask->rows == q.rows && mask->cols == k.rows, "attention mask shape mismatch");
  const std::size_t hd = cfg.head_dim();
  const double sc = cfg.scale();
  DenseMatrix out(q.rows, cfg.C);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t off = h * hd;
    DenseMatrix scores(q.rows, k.rows);
    for (std::size_t i = 0; i < q.rows; ++i) {
      for (std::size_t n = 0; n < k.rows; ++n) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += q(i, off + c) * k(n, off + c);
        scores(i, n) = s * sc + (mask ? (*mask)(i, n) : 0.0);
      }
    }
    DenseMatrix w = softmax_rows(scores);
    for (std::size_t i = 0; i < q.rows; ++i)
      for (std::size_t n = 0; n < k.rows; ++n)
        for (std::size_t c = 0; c < hd; ++c) out(i, off + c) += w(i, n) * v(n, off + c);
  }
  return out;
}

DenseMatrix kernel_attention(std::span<const double> q, const DenseMatrix& x,
                             const ProjectionWeights& proj, const AttentionConfig& cfg) {
  return stream_attention_bruteforce(q, x, proj, cfg, TemporalKernel::constant());
}

DenseMatrix stream_attention_bruteforce(std::span<const double> q, const DenseMatrix& x,
                                        const ProjectionWeights& proj,
                                        const AttentionConfig& cfg,
                                        const TemporalKernel& kernel) {
  cfg.validate();
  if (x.rows == 0) throw std::invalid_argument("empty sequence");
  require(q.size() == cfg.C, "query length mismatch");
  const DenseMatrix keys = matmul(x, proj.w_key);
  const DenseMatrix values = matmul(x, proj.w_value);
  const std::size_t hd = cfg.head_dim();
  const double sc = cfg.scale();
  const std::size_t t = x.rows - 1;
  DenseMatrix out(1, cfg.C);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t off = h * hd;
    std::vector<double> num(hd, 0.0);
    double den = 0.0;
    for (std::size_t n = 0; n < x.rows; ++n) {
      const double w = temporal_weight(kernel, t, n) *
                       kappa(q.subspan(off, hd), keys.row(n).subspan(off, hd), sc);
      for (std::size_t c = 0; c < hd; ++c) num[c] += w * values(n, off + c);
      den += w;
    }
    for (std::size_t c = 0; c < hd; ++c) out(0, off + c) = num[c] / den;
  }
  return out;
}

DenseMatrix es_log_mask(std::size_t m, std::size_t n, double lambda) {
  require(lambda >= 0.0, "decay must be >= 0");
  DenseMatrix mask(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      mask(i, j) = -lambda * static_cast<double>(n - 1 - j);
  return mask;
}

DenseMatrix es_attention_windowed(const DenseMatrix& q, const DenseMatrix& k,
                                  const DenseMatrix& v, double lambda,
                                  const AttentionConfig& cfg) {
  const DenseMatrix mask = es_log_mask(q.rows, k.rows, lambda);
  return softmax_attention(q, k, v, cfg, &mask);
}

}  // namespace testra
