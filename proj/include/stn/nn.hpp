#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "stn/errors.hpp"
#include "stn/matrix.hpp"

namespace stn {

/// Probabilities are clamped by this guard before the logarithm so the loss
/// stays bounded on degenerate predictions.
inline constexpr double kLogGuard = 1e-12;

/// Weights of one affine layer; bias is a 1 x out_dim row broadcast over
/// samples.
struct AffineParams {
  Matrix weight;  // in_dim x out_dim
  Matrix bias;    // 1 x out_dim
};

/// x * W + bias, x is n x in_dim.
inline Matrix affine_forward(const AffineParams& p, const Matrix& x) {
  if (x.cols() != p.weight.rows()) {
    throw ShapeError("affine_forward: input " + shape_str(x) + " vs weight " + shape_str(p.weight));
  }
  Matrix out = matmul(x, p.weight);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += p.bias(0, j);
  return out;
}

struct AffineGrads {
  Matrix weight;
  Matrix bias;
  Matrix input;
};

/// Backward pass for the affine layer: `x` must be the same input the forward
/// pass saw, `upstream` the gradient w.r.t. the layer output.
inline AffineGrads affine_backward(const AffineParams& p, const Matrix& x, const Matrix& upstream) {
  if (upstream.rows() != x.rows() || upstream.cols() != p.weight.cols()) {
    throw ShapeError("affine_backward: upstream " + shape_str(upstream) + " does not match forward shapes");
  }
  AffineGrads g;
  g.weight = matmul(transpose(x), upstream);
  g.bias = colwise_sum(upstream);
  g.input = matmul(upstream, transpose(p.weight));
  return g;
}

/// Elementwise max(x, slope * x); slope must lie in [0, 1).
inline Matrix leaky_relu(const Matrix& x, double slope) {
  if (slope < 0.0 || slope >= 1.0) throw RangeError("leaky_relu: slope must be in [0,1)");
  Matrix out = x;
  for (double& v : out.data()) v = v >= 0.0 ? v : slope * v;
  return out;
}

inline Matrix leaky_relu_backward(const Matrix& x, double slope, const Matrix& upstream) {
  if (slope < 0.0 || slope >= 1.0) throw RangeError("leaky_relu_backward: slope must be in [0,1)");
  require_same_shape(x, upstream, "leaky_relu_backward");
  Matrix out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (x.data()[i] < 0.0) out.data()[i] *= slope;
  }
  return out;
}

/// Row-wise softmax with max-subtraction stabilization.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j) row_max = std::max(row_max, logits(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      const double e = std::exp(logits(i, j) - row_max);
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) /= denom;
  }
  return out;
}

/// Sum over samples of -sum_k y_k ln(p_k + guard). The caller owns any 1/n
/// averaging; this is the raw sum. The guarded probability is capped at 1 so
/// the loss stays nonnegative for simplex label rows.
inline double cross_entropy(const Matrix& probs, const Matrix& labels) {
  require_same_shape(probs, labels, "cross_entropy");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double y = labels.data()[i];
    if (y != 0.0) loss -= y * std::log(std::min(1.0, probs.data()[i] + kLogGuard));
  }
  return loss;
}

/// Gradient of cross_entropy(softmax(z), labels) w.r.t. the logits z:
/// probs - labels, row by row.
inline Matrix softmax_cross_entropy_backward(const Matrix& probs, const Matrix& labels) {
  require_same_shape(probs, labels, "softmax_cross_entropy_backward");
  return probs - labels;
}

/// Per-parameter gradient matrices, shape-congruent with an ordered set of
/// parameter matrices.
struct GradBuffer {
  std::vector<Matrix> grads;

  static GradBuffer zeros_like(std::span<const Matrix* const> params) {
    GradBuffer g;
    g.grads.reserve(params.size());
    for (const Matrix* m : params) g.grads.emplace_back(m->rows(), m->cols(), 0.0);
    return g;
  }

  Matrix& operator[](std::size_t i) { return grads[i]; }
  const Matrix& operator[](std::size_t i) const { return grads[i]; }
  std::size_t size() const { return grads.size(); }

  GradBuffer& operator+=(const GradBuffer& o) {
    if (grads.size() != o.grads.size()) throw ShapeError("GradBuffer+=: slot count mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += o.grads[i];
    return *this;
  }

  bool all_finite() const {
    for (const Matrix& g : grads)
      if (!stn::all_finite(g)) return false;
    return true;
  }
};

}  // namespace stn
