#include "testra/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace testra {

DenseMatrix linear(const DenseMatrix& x, const LayerParams& p) {
  require(p.bias.rows == 1 && p.bias.cols == p.weight.cols,
          "linear bias shape mismatch: " + p.bias.shape_str());
  DenseMatrix out = matmul(x, p.weight);
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += p.bias(0, j);
  return out;
}

DenseMatrix relu(const DenseMatrix& x) {
  DenseMatrix out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> shift) {
  const std::size_t n = x.size();
  require(n >= 2, "layer_norm needs vector length >= 2");
  require(gain.size() == n && shift.size() == n, "layer_norm gain/shift length mismatch");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv * gain[i] + shift[i];
  return out;
}

DenseMatrix layer_norm_rows(const DenseMatrix& x, const DenseMatrix& gain,
                            const DenseMatrix& shift) {
  DenseMatrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto r = layer_norm(x.row(i), gain.row(0), shift.row(0));
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

DenseMatrix ffn(const DenseMatrix& x, const LayerParams& p1, const LayerParams& p2) {
  return linear(relu(linear(x, p1)), p2);
}

std::vector<DenseMatrix> finite_diff_grad(const std::function<double()>& loss_fn,
                                          const std::vector<DenseMatrix*>& params,
                                          double step) {
  require(step > 0.0, "finite_diff_grad step must be > 0");
  std::vector<DenseMatrix> grads;
  grads.reserve(params.size());
  for (DenseMatrix* p : params) {
    DenseMatrix g(p->rows, p->cols);
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double saved = p->data[i];
      p->data[i] = saved + step;
      const double up = loss_fn();
      p->data[i] = saved - step;
      const double down = loss_fn();
      p->data[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw std::runtime_error("non-finite loss during finite differencing");
      g.data[i] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace testra
