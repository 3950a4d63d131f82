#include "testra/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace testra {

Var Tape::emit(DenseMatrix v, bool needs_grad, std::function<void()> back) {
  auto node = std::make_unique<TapeNode>();
  node->value = std::move(v);
  node->grad = DenseMatrix(node->value.rows, node->value.cols);
  node->needs_grad = needs_grad;
  node->back = std::move(back);
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Var Tape::leaf(DenseMatrix v) { return emit(std::move(v), true, {}); }
Var Tape::constant(DenseMatrix v) { return emit(std::move(v), false, {}); }

Var Tape::add(Var a, Var b) {
  Var out = emit(testra::add(a->value, b->value), a->needs_grad || b->needs_grad, {});
  out->back = [a, b, out] {
    if (a->needs_grad) add_in_place(a->grad, out->grad);
    if (b->needs_grad) add_in_place(b->grad, out->grad);
  };
  return out;
}

Var Tape::add_const(Var a, const DenseMatrix& c) {
  Var out = emit(testra::add(a->value, c), a->needs_grad, {});
  out->back = [a, out] {
    if (a->needs_grad) add_in_place(a->grad, out->grad);
  };
  return out;
}

Var Tape::add_bias(Var a, Var bias) {
  require(bias->value.rows == 1 && bias->value.cols == a->value.cols,
          "add_bias shape mismatch: " + a->value.shape_str() + " + " + bias->value.shape_str());
  DenseMatrix v = a->value;
  for (std::size_t i = 0; i < v.rows; ++i)
    for (std::size_t j = 0; j < v.cols; ++j) v(i, j) += bias->value(0, j);
  Var out = emit(std::move(v), a->needs_grad || bias->needs_grad, {});
  out->back = [a, bias, out] {
    if (a->needs_grad) add_in_place(a->grad, out->grad);
    if (bias->needs_grad) {
      for (std::size_t i = 0; i < out->grad.rows; ++i)
        for (std::size_t j = 0; j < out->grad.cols; ++j)
          bias->grad(0, j) += out->grad(i, j);
    }
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = emit(testra::scale(a->value, s), a->needs_grad, {});
  out->back = [a, out, s] {
    if (a->needs_grad) add_in_place(a->grad, testra::scale(out->grad, s));
  };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  Var out = emit(testra::matmul(a->value, b->value), a->needs_grad || b->needs_grad, {});
  out->back = [a, b, out] {
    if (a->needs_grad) add_in_place(a->grad, testra::matmul_nt(out->grad, b->value));
    if (b->needs_grad) add_in_place(b->grad, testra::matmul_tn(a->value, out->grad));
  };
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  Var out = emit(testra::matmul_nt(a->value, b->value), a->needs_grad || b->needs_grad, {});
  out->back = [a, b, out] {
    if (a->needs_grad) add_in_place(a->grad, testra::matmul(out->grad, b->value));
    if (b->needs_grad) add_in_place(b->grad, testra::matmul_tn(out->grad, a->value));
  };
  return out;
}

Var Tape::relu(Var a) {
  DenseMatrix v = a->value;
  for (double& x : v.data) {
    min_abs_relu_input = std::min(min_abs_relu_input, std::abs(x));
    x = x > 0.0 ? x : 0.0;
  }
  Var out = emit(std::move(v), a->needs_grad, {});
  out->back = [a, out] {
    if (!a->needs_grad) return;
    for (std::size_t i = 0; i < a->grad.data.size(); ++i)
      if (a->value.data[i] > 0.0) a->grad.data[i] += out->grad.data[i];
  };
  return out;
}

Var Tape::softmax_rows(Var a) {
  Var out = emit(testra::softmax_rows(a->value), a->needs_grad, {});
  out->back = [a, out] {
    if (!a->needs_grad) return;
    const DenseMatrix& p = out->value;
    for (std::size_t i = 0; i < p.rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < p.cols; ++j) acc += out->grad(i, j) * p(i, j);
      for (std::size_t j = 0; j < p.cols; ++j)
        a->grad(i, j) += p(i, j) * (out->grad(i, j) - acc);
    }
  };
  return out;
}

Var Tape::layer_norm_rows(Var x, Var gain, Var shift) {
  const std::size_t n = x->value.cols;
  require(n >= 2, "layer_norm needs vector length >= 2");
  require(gain->value.rows == 1 && gain->value.cols == n && shift->value.rows == 1 &&
              shift->value.cols == n,
          "layer_norm gain/shift shape mismatch");
  const double eps = 1e-5;
  DenseMatrix out_v(x->value.rows, n);
  // normalized activations and inverse stddev saved for the backward pass
  auto xhat = std::make_shared<DenseMatrix>(x->value.rows, n);
  auto inv_std = std::make_shared<std::vector<double>>(x->value.rows);
  for (std::size_t i = 0; i < x->value.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x->value(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x->value(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (x->value(i, j) - mean) * inv;
      (*xhat)(i, j) = h;
      out_v(i, j) = h * gain->value(0, j) + shift->value(0, j);
    }
  }
  Var out = emit(std::move(out_v), x->needs_grad || gain->needs_grad || shift->needs_grad, {});
  out->back = [x, gain, shift, out, xhat, inv_std, n] {
    for (std::size_t i = 0; i < out->grad.rows; ++i) {
      if (gain->needs_grad || shift->needs_grad) {
        for (std::size_t j = 0; j < n; ++j) {
          if (gain->needs_grad) gain->grad(0, j) += out->grad(i, j) * (*xhat)(i, j);
          if (shift->needs_grad) shift->grad(0, j) += out->grad(i, j);
        }
      }
      if (!x->needs_grad) continue;
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double dh = out->grad(i, j) * gain->value(0, j);
        mean_dh += dh;
        mean_dh_h += dh * (*xhat)(i, j);
      }
      mean_dh /= static_cast<double>(n);
      mean_dh_h /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const double dh = out->grad(i, j) * gain->value(0, j);
        x->grad(i, j) += (*inv_std)[i] * (dh - mean_dh - (*xhat)(i, j) * mean_dh_h);
      }
    }
  };
  return out;
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
  require(r0 <= r1 && r1 <= a->value.rows, "slice_rows out of range");
  DenseMatrix v(r1 - r0, a->value.cols);
  std::copy(a->value.data.begin() + r0 * a->value.cols,
            a->value.data.begin() + r1 * a->value.cols, v.data.begin());
  Var out = emit(std::move(v), a->needs_grad, {});
  out->back = [a, out, r0] {
    if (!a->needs_grad) return;
    for (std::size_t i = 0; i < out->grad.rows; ++i)
      for (std::size_t j = 0; j < out->grad.cols; ++j)
        a->grad(r0 + i, j) += out->grad(i, j);
  };
  return out;
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  require(c0 <= c1 && c1 <= a->value.cols, "slice_cols out of range");
  DenseMatrix v(a->value.rows, c1 - c0);
  for (std::size_t i = 0; i < v.rows; ++i)
    for (std::size_t j = 0; j < v.cols; ++j) v(i, j) = a->value(i, c0 + j);
  Var out = emit(std::move(v), a->needs_grad, {});
  out->back = [a, out, c0] {
    if (!a->needs_grad) return;
    for (std::size_t i = 0; i < out->grad.rows; ++i)
      for (std::size_t j = 0; j < out->grad.cols; ++j)
        a->grad(i, c0 + j) += out->grad(i, j);
  };
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows needs at least one part");
  std::size_t rows = 0;
  const std::size_t cols = parts.front()->value.cols;
  bool needs = false;
  for (Var p : parts) {
    require(p->value.cols == cols, "concat_rows column mismatch");
    rows += p->value.rows;
    needs = needs || p->needs_grad;
  }
  DenseMatrix v(rows, cols);
  std::size_t r = 0;
  for (Var p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), v.data.begin() + r * cols);
    r += p->value.rows;
  }
  Var out = emit(std::move(v), needs, {});
  auto parts_copy = parts;
  out->back = [parts_copy, out, cols] {
    std::size_t r = 0;
    for (Var p : parts_copy) {
      if (p->needs_grad) {
        for (std::size_t i = 0; i < p->grad.rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) p->grad(i, j) += out->grad(r + i, j);
      }
      r += p->value.rows;
    }
  };
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols needs at least one part");
  const std::size_t rows = parts.front()->value.rows;
  std::size_t cols = 0;
  bool needs = false;
  for (Var p : parts) {
    require(p->value.rows == rows, "concat_cols row mismatch");
    cols += p->value.cols;
    needs = needs || p->needs_grad;
  }
  DenseMatrix v(rows, cols);
  std::size_t c = 0;
  for (Var p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p->value.cols; ++j) v(i, c + j) = p->value(i, j);
    c += p->value.cols;
  }
  Var out = emit(std::move(v), needs, {});
  auto parts_copy = parts;
  out->back = [parts_copy, out] {
    std::size_t c = 0;
    for (Var p : parts_copy) {
      if (p->needs_grad) {
        for (std::size_t i = 0; i < p->grad.rows; ++i)
          for (std::size_t j = 0; j < p->grad.cols; ++j)
            p->grad(i, j) += out->grad(i, c + j);
      }
      c += p->value.cols;
    }
  };
  return out;
}

Var Tape::cross_entropy_mean(Var logits, std::vector<int> labels) {
  const std::size_t rows = logits->value.rows;
  const std::size_t cols = logits->value.cols;
  require(labels.size() == rows, "cross_entropy label count mismatch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= cols)
      throw std::out_of_range("label out of range: " + std::to_string(y));
  auto probs = std::make_shared<DenseMatrix>(testra::softmax_rows(logits->value));
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double p = (*probs)(i, static_cast<std::size_t>(labels[i]));
    loss -= std::log(std::max(p, 1e-300));
  }
  loss /= static_cast<double>(rows);
  DenseMatrix v(1, 1);
  v(0, 0) = loss;
  Var out = emit(std::move(v), logits->needs_grad, {});
  auto labels_copy = std::move(labels);
  out->back = [logits, out, probs, labels_copy, rows, cols] {
    if (!logits->needs_grad) return;
    const double g = out->grad(0, 0) / static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j)
        logits->grad(i, j) += g * (*probs)(i, j);
      logits->grad(i, static_cast<std::size_t>(labels_copy[i])) -= g;
    }
  };
  return out;
}

void Tape::backward(Var loss) {
  require(loss->value.rows == 1 && loss->value.cols == 1, "backward target must be scalar");
  loss->grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    TapeNode* n = it->get();
    if (n->needs_grad && n->back) n->back();
  }
}

}  // namespace testra
