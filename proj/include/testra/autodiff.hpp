#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "testra/matrix.hpp"

namespace testra {

struct TapeNode {
  DenseMatrix value;
  DenseMatrix grad;
  std::function<void()> back;  // empty for leaves and constants
  bool needs_grad = false;
};

using Var = TapeNode*;

// Records matrix-level primitives in topological order. Replaying the tape
// backward visits each recorded op exactly once. One tape per logical
// forward/backward pass; not shared across threads.
class Tape {
 public:
  Var leaf(DenseMatrix v);      // gradient is tracked
  Var constant(DenseMatrix v);  // gradient is not propagated past it

  Var add(Var a, Var b);
  Var add_const(Var a, const DenseMatrix& c);  // c may contain -inf (mask)
  Var add_bias(Var a, Var bias);               // bias 1xC, broadcast over rows
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var shift);  // gain/shift 1xC
  Var slice_rows(Var a, std::size_t r0, std::size_t r1);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  // Mean of per-row cross entropy of logits against integer labels.
  Var cross_entropy_mean(Var logits, std::vector<int> labels);

  void backward(Var loss);
  std::size_t size() const { return nodes_.size(); }

  // Smallest |input| seen by any relu on this tape; finite-difference
  // callers use it to keep the step away from the kink.
  double min_abs_relu_input = std::numeric_limits<double>::infinity();

 private:
  Var emit(DenseMatrix v, bool needs_grad, std::function<void()> back);
  std::vector<std::unique_ptr<TapeNode>> nodes_;
};

}  // namespace testra
