#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace testra {

// Row-major 2-D array of doubles. The universal numeric carrier.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  DenseMatrix(std::initializer_list<std::initializer_list<double>> init);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  std::string shape_str() const;

  static DenseMatrix zeros(std::size_t r, std::size_t c) { return DenseMatrix(r, c); }
  static DenseMatrix identity(std::size_t n);
  static DenseMatrix random_uniform(std::size_t r, std::size_t c, double lo, double hi,
                                    std::mt19937_64& rng);
  static DenseMatrix random_normal(std::size_t r, std::size_t c, double mean, double stddev,
                                   std::mt19937_64& rng);
  static DenseMatrix from_row(std::span<const double> v);
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a * b^T, avoids materializing the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
// a^T * b.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double s);
void add_in_place(DenseMatrix& a, const DenseMatrix& b);

// Row-wise softmax with per-row max subtraction. A row whose entries are all
// -inf has no valid attendee and is rejected.
DenseMatrix softmax_rows(const DenseMatrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
// |a-b| / max(|a|,|b|,floor), maximized over entries.
double max_rel_diff(const DenseMatrix& a, const DenseMatrix& b, double floor = 1e-12);

void require(bool cond, const std::string& msg);
void check_finite(const DenseMatrix& m, const std::string& what);

}  // namespace testra
