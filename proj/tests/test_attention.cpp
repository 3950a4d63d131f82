#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "testra/attention.hpp"

using namespace testra;

TEST_CASE("kappa exponentiates the scaled dot product") {
  std::vector<double> q{1, 1, 0, 0}, k{1, 1, 0, 0};
  CHECK(log_kappa(q, k, 0.5) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(kappa(q, k, 0.5) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  std::vector<double> q2{1, 2}, k2{3, 4};
  CHECK(log_kappa(q2, k2, 0.5) == doctest::Approx(5.5).epsilon(1e-14));
  std::vector<double> short_k{1.0};
  CHECK_THROWS_AS(log_kappa(q2, short_k, 1.0), std::invalid_argument);
}

TEST_CASE("temporal kernel weights") {
  const TemporalKernel box = TemporalKernel::box(5);
  for (std::size_t age = 0; age < 5; ++age) CHECK(temporal_weight(box, 10, 10 - age) == 1.0);
  CHECK(temporal_weight(box, 10, 5) == 0.0);
  CHECK(temporal_weight(box, 10, 0) == 0.0);

  const TemporalKernel lap = TemporalKernel::laplace(1.0);
  CHECK(temporal_weight(lap, 7, 7) == 1.0);
  CHECK(temporal_weight(lap, 7, 5) == doctest::Approx(0.1353352832).epsilon(1e-9));

  CHECK(temporal_weight(TemporalKernel::constant(), 100, 0) == 1.0);
  CHECK_THROWS_AS(temporal_weight(box, 3, 4), std::invalid_argument);
  CHECK_THROWS_AS(TemporalKernel::box(0), std::invalid_argument);
  CHECK_THROWS_AS(TemporalKernel::laplace(0.0), std::invalid_argument);
}

TEST_CASE("softmax form equals normalized kernel sum") {
  // 100 random instances, N up to 64: the two algebraic forms of the same
  // attention read-out must agree to near machine precision.
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t heads = 1 + (inst % 4 == 0 ? 1 : 0) * 1;  // 1 or 2
    AttentionConfig cfg{static_cast<std::size_t>(4 + inst % 5), 8, heads};
    ProjectionWeights proj;
    proj.w_key = DenseMatrix::random_uniform(cfg.d, cfg.C, -0.7, 0.7, rng);
    proj.w_value = DenseMatrix::random_uniform(cfg.d, cfg.C, -0.7, 0.7, rng);
    std::uniform_int_distribution<std::size_t> n_dist(1, 64);
    const std::size_t n = n_dist(rng);
    const DenseMatrix x = DenseMatrix::random_normal(n, cfg.d, 0.0, 1.0, rng);
    const DenseMatrix q = DenseMatrix::random_uniform(1, cfg.C, -1.0, 1.0, rng);
    const DenseMatrix ref =
        softmax_attention(q, matmul(x, proj.w_key), matmul(x, proj.w_value), cfg);
    const DenseMatrix got = kernel_attention(q.row(0), x, proj, cfg);
    worst = std::max(worst, max_rel_diff(ref, got, 1e-9));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("attention output stays in the per-head value hull") {
  std::mt19937_64 rng(12);
  AttentionConfig cfg{5, 8, 2};
  ProjectionWeights proj;
  proj.w_key = DenseMatrix::random_uniform(cfg.d, cfg.C, -0.5, 0.5, rng);
  proj.w_value = DenseMatrix::random_uniform(cfg.d, cfg.C, -0.5, 0.5, rng);
  const DenseMatrix x = DenseMatrix::random_normal(20, cfg.d, 0.0, 1.0, rng);
  const DenseMatrix values = matmul(x, proj.w_value);
  const DenseMatrix q = DenseMatrix::random_uniform(1, cfg.C, -1.0, 1.0, rng);
  const DenseMatrix out = kernel_attention(q.row(0), x, proj, cfg);
  for (std::size_t c = 0; c < cfg.C; ++c) {
    double lo = values(0, c), hi = values(0, c);
    for (std::size_t n = 1; n < values.rows; ++n) {
      lo = std::min(lo, values(n, c));
      hi = std::max(hi, values(n, c));
    }
    CHECK(out(0, c) >= lo - 1e-12);
    CHECK(out(0, c) <= hi + 1e-12);
  }
}

TEST_CASE("zero decay mask is a no-op") {
  std::mt19937_64 rng(13);
  AttentionConfig cfg{6, 8, 2};
  const DenseMatrix q = DenseMatrix::random_normal(3, cfg.C, 0, 1, rng);
  const DenseMatrix k = DenseMatrix::random_normal(10, cfg.C, 0, 1, rng);
  const DenseMatrix v = DenseMatrix::random_normal(10, cfg.C, 0, 1, rng);
  CHECK(max_abs_diff(es_attention_windowed(q, k, v, 0.0, cfg),
                     softmax_attention(q, k, v, cfg)) <= 1e-12);
}

TEST_CASE("decay log-mask structure") {
  const double lambda = 0.25;
  const DenseMatrix mask = es_log_mask(3, 5, lambda);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(mask(i, 4) == 0.0);  // newest frame carries full weight
    for (std::size_t j = 0; j + 1 < 5; ++j) {
      CHECK(mask(i, j) == doctest::Approx(-lambda * (4.0 - j)).epsilon(1e-14));
      CHECK(mask(i, j) < mask(i, j + 1));  // strictly older, strictly smaller
    }
  }
  CHECK_THROWS_AS(es_log_mask(2, 2, -0.1), std::invalid_argument);
}

TEST_CASE("stronger decay concentrates weight on recent frames") {
  std::mt19937_64 rng(14);
  AttentionConfig cfg{4, 4, 1};
  const DenseMatrix q = DenseMatrix::random_normal(1, cfg.C, 0, 0.3, rng);
  const DenseMatrix k = DenseMatrix::random_normal(12, cfg.C, 0, 0.3, rng);
  // values encode frame age so the read-out measures effective recency
  DenseMatrix v(12, cfg.C);
  for (std::size_t n = 0; n < 12; ++n)
    for (std::size_t c = 0; c < cfg.C; ++c) v(n, c) = static_cast<double>(n);
  double prev = es_attention_windowed(q, k, v, 0.0, cfg)(0, 0);
  for (double lambda : {0.2, 0.8, 2.0}) {
    const double cur = es_attention_windowed(q, k, v, lambda, cfg)(0, 0);
    CHECK(cur > prev);  // more decay -> average age closer to the newest frame
    prev = cur;
  }
}

TEST_CASE("multi-head split matches manual per-head computation") {
  std::mt19937_64 rng(15);
  AttentionConfig cfg{6, 8, 2};
  const DenseMatrix q = DenseMatrix::random_normal(3, cfg.C, 0, 1, rng);
  const DenseMatrix k = DenseMatrix::random_normal(7, cfg.C, 0, 1, rng);
  const DenseMatrix v = DenseMatrix::random_normal(7, cfg.C, 0, 1, rng);
  const DenseMatrix full = softmax_attention(q, k, v, cfg);

  const std::size_t hd = cfg.head_dim();
  AttentionConfig single{cfg.d, hd, 1};
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    auto slice = [&](const DenseMatrix& m) {
      DenseMatrix out(m.rows, hd);
      for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < hd; ++c) out(r, c) = m(r, h * hd + c);
      return out;
    };
    const DenseMatrix head = softmax_attention(slice(q), slice(k), slice(v), single);
    CHECK(max_abs_diff(head, slice(full)) <= 1e-13);
  }
}

TEST_CASE("temporal embedding shape and range") {
  const DenseMatrix pe = temporal_embedding(10, 8);
  CHECK(pe.rows == 10);
  CHECK(pe.cols == 8);
  for (double v : pe.data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  // first position: sin/cos of the raw frequencies
  CHECK(pe(0, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(pe(0, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  // distinct positions produce distinct rows
  CHECK(max_abs_diff(DenseMatrix::from_row(pe.row(0)), DenseMatrix::from_row(pe.row(5))) >
        1e-3);
}

TEST_CASE("attention input validation") {
  AttentionConfig bad{4, 6, 4};  // 6 % 4 != 0
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  AttentionConfig cfg{4, 8, 2};
  std::mt19937_64 rng(16);
  ProjectionWeights proj;
  proj.w_key = DenseMatrix::random_normal(cfg.d, cfg.C, 0, 1, rng);
  proj.w_value = DenseMatrix::random_normal(cfg.d, cfg.C, 0, 1, rng);
  const DenseMatrix q = DenseMatrix::random_normal(1, cfg.C, 0, 1, rng);
  DenseMatrix empty(0, cfg.d);
  CHECK_THROWS_AS(kernel_attention(q.row(0), empty, proj, cfg), std::invalid_argument);

  const DenseMatrix k = DenseMatrix::random_normal(5, cfg.C, 0, 1, rng);
  const DenseMatrix v = DenseMatrix::random_normal(4, cfg.C, 0, 1, rng);
  CHECK_THROWS_AS(softmax_attention(q, k, v, cfg), std::invalid_argument);
}
