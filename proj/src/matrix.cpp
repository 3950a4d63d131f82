#include "testra/matrix.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace testra {

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> init) {
  rows = init.size();
  cols = rows ? init.begin()->size() : 0;
  data.reserve(rows * cols);
  for (const auto& r : init) {
    require(r.size() == cols, "ragged initializer for DenseMatrix");
    data.insert(data.end(), r.begin(), r.end());
  }
}

bool DenseMatrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string DenseMatrix::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::random_uniform(std::size_t r, std::size_t c, double lo, double hi,
                                        std::mt19937_64& rng) {
  DenseMatrix m(r, c);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : m.data) v = dist(rng);
  return m;
}

DenseMatrix DenseMatrix::random_normal(std::size_t r, std::size_t c, double mean, double stddev,
                                       std::mt19937_64& rng) {
  DenseMatrix m(r, c);
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : m.data) v = dist(rng);
  return m;
}

DenseMatrix DenseMatrix::from_row(std::span<const double> v) {
  DenseMatrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.data.begin());
  return m;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_finite(const DenseMatrix& m, const std::string& what) {
  if (!m.all_finite()) throw std::runtime_error("non-finite values in " + what);
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols == b.rows,
          "matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str());
  DenseMatrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* crow = c.data.data() + i * c.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols == b.cols,
          "matmul_nt shape mismatch: " + a.shape_str() + " * " + b.shape_str() + "^T");
  DenseMatrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data.data() + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows == b.rows,
          "matmul_tn shape mismatch: " + a.shape_str() + "^T * " + b.shape_str());
  DenseMatrix c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.data.data() + k * a.cols;
    const double* brow = b.data.data() + k * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.data.data() + i * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "sub shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

DenseMatrix scale(const DenseMatrix& a, double s) {
  DenseMatrix c = a;
  for (double& v : c.data) v *= s;
  return c;
}

void add_in_place(DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

DenseMatrix softmax_rows(const DenseMatrix& m) {
  DenseMatrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m.cols; ++j) mx = std::max(mx, m(i, j));
    if (!(mx > -std::numeric_limits<double>::infinity()))
      throw std::runtime_error("fully masked query at row " + std::to_string(i));
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      const double e = std::exp(m(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) /= sum;
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "diff shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  double mx = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
  return mx;
}

double max_rel_diff(const DenseMatrix& a, const DenseMatrix& b, double floor) {
  require(a.same_shape(b), "diff shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  double mx = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double denom = std::max({std::abs(a.data[i]), std::abs(b.data[i]), floor});
    mx = std::max(mx, std::abs(a.data[i] - b.data[i]) / denom);
  }
  return mx;
}

}  // namespace testra
