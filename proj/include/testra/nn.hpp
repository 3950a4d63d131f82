#pragma once

#include <functional>
#include <span>
#include <vector>

#include "testra/matrix.hpp"

namespace testra {

inline constexpr double kLayerNormEps = 1e-5;

// One affine layer: weight is in x out, bias is 1 x out.
struct LayerParams {
  DenseMatrix weight;
  DenseMatrix bias;
};

// x * W + b with b broadcast over rows.
DenseMatrix linear(const DenseMatrix& x, const LayerParams& p);
DenseMatrix relu(const DenseMatrix& x);

// (x - mean) / sqrt(var + eps), then gain/shift. Population variance.
std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> shift);
DenseMatrix layer_norm_rows(const DenseMatrix& x, const DenseMatrix& gain,
                            const DenseMatrix& shift);

// linear -> ReLU -> linear.
DenseMatrix ffn(const DenseMatrix& x, const LayerParams& p1, const LayerParams& p2);

// Central differences (f(th+h) - f(th-h)) / 2h for every scalar in `params`.
// The loss function is re-evaluated with the perturbed parameters in place.
std::vector<DenseMatrix> finite_diff_grad(const std::function<double()>& loss_fn,
                                          const std::vector<DenseMatrix*>& params,
                                          double step = 1e-4);

}  // namespace testra
