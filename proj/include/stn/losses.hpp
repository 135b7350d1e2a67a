#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stn/errors.hpp"
#include "stn/matrix.hpp"
#include "stn/model.hpp"
#include "stn/nn.hpp"

namespace stn {

/// Guard added to the conditional-MMD denominator. The denominator is already
/// strictly positive whenever every class has a labeled target sample; the
/// guard covers the hypothetical n_l^k = 0 configuration at r = 0.
inline constexpr double kConditionalDenomGuard = 1e-8;

inline Matrix one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  Matrix out(labels.size(), num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ConfigError("one_hot: label " + std::to_string(labels[i]) + " out of range at row " +
                        std::to_string(i));
    }
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

/// Projected labeled data from both domains, source rows first, with the
/// matching one-hot label rows.
struct LabeledProjectedBatch {
  Matrix features;  // (n_s + n_l) x d
  Matrix labels;    // (n_s + n_l) x C, one-hot
};

/// Per-class row indices of labeled source and labeled target samples.
/// Construction fails if any class is missing on either side, which is the
/// precondition of the conditional-MMD term.
struct ClassIndex {
  std::vector<std::vector<std::size_t>> source_rows;
  std::vector<std::vector<std::size_t>> labeled_rows;

  std::size_t num_classes() const { return source_rows.size(); }

  static ClassIndex build(const std::vector<int>& source_y, const std::vector<int>& labeled_y,
                          std::size_t num_classes) {
    ClassIndex idx;
    idx.source_rows.resize(num_classes);
    idx.labeled_rows.resize(num_classes);
    for (std::size_t i = 0; i < source_y.size(); ++i) {
      if (source_y[i] < 0 || static_cast<std::size_t>(source_y[i]) >= num_classes) {
        throw ConfigError("ClassIndex: source label out of range at row " + std::to_string(i));
      }
      idx.source_rows[static_cast<std::size_t>(source_y[i])].push_back(i);
    }
    for (std::size_t i = 0; i < labeled_y.size(); ++i) {
      if (labeled_y[i] < 0 || static_cast<std::size_t>(labeled_y[i]) >= num_classes) {
        throw ConfigError("ClassIndex: target label out of range at row " + std::to_string(i));
      }
      idx.labeled_rows[static_cast<std::size_t>(labeled_y[i])].push_back(i);
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
      if (idx.source_rows[k].empty()) {
        throw ConfigError("ClassIndex: class " + std::to_string(k) + " has no labeled source samples");
      }
      if (idx.labeled_rows[k].empty()) {
        throw ConfigError("ClassIndex: class " + std::to_string(k) + " has no labeled target samples");
      }
    }
    return idx;
  }
};

/// Per-iteration objective values. The identity
/// total = cls_loss + reg_term + beta * (q_m + q_c) holds for every recorded
/// breakdown; ablated terms are recorded as 0.
struct ObjectiveBreakdown {
  double cls_loss = 0.0;  // (1/(n_s+n_l)) * cross-entropy
  double reg_term = 0.0;  // tau * sum of squared weights
  double q_m = 0.0;
  double q_c = 0.0;
  double total = 0.0;
  std::size_t iteration = 0;
};

struct ClassificationLoss {
  double value = 0.0;     // cls_part + reg_part
  double cls_part = 0.0;
  double reg_part = 0.0;
  Matrix grad_features;   // gradient w.r.t. the projected batch rows
  GradBuffer param_grads; // classifier gradients plus weight-decay terms
};

/// Averaged cross-entropy of the shared classifier over projected labeled
/// data plus tau times the squared weight norms of all three networks
/// (biases excluded).
inline ClassificationLoss classification_loss(const LabeledProjectedBatch& batch, const StnParams& p,
                                              double tau) {
  if (batch.features.rows() == 0) throw EmptyInputError("classification_loss: empty batch");
  if (batch.labels.rows() != batch.features.rows() || batch.labels.cols() != p.num_classes()) {
    throw ShapeError("classification_loss: label matrix is " + shape_str(batch.labels));
  }
  if (tau < 0.0) throw RangeError("classification_loss: tau must be nonnegative");

  const std::size_t n = batch.features.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  const Matrix probs = classify(p, batch.features);
  ClassificationLoss out;
  out.cls_part = inv_n * cross_entropy(probs, batch.labels);
  out.reg_part = tau * (sum_squares(p.source_hidden.weight) + sum_squares(p.source_out.weight) +
                        sum_squares(p.target_hidden.weight) + sum_squares(p.target_out.weight) +
                        sum_squares(p.classifier.weight));
  out.value = out.cls_part + out.reg_part;

  const Matrix d_logits = inv_n * softmax_cross_entropy_backward(probs, batch.labels);
  const auto params = p.matrices();
  out.param_grads = GradBuffer::zeros_like(std::span<const Matrix* const>(params));
  out.grad_features = matmul(d_logits, transpose(p.classifier.weight));
  out.param_grads[StnParams::kClassifierW] =
      matmul(transpose(batch.features), d_logits) + (2.0 * tau) * p.classifier.weight;
  out.param_grads[StnParams::kClassifierB] = colwise_sum(d_logits);
  out.param_grads[StnParams::kSourceHiddenW] = (2.0 * tau) * p.source_hidden.weight;
  out.param_grads[StnParams::kSourceOutW] = (2.0 * tau) * p.source_out.weight;
  out.param_grads[StnParams::kTargetHiddenW] = (2.0 * tau) * p.target_hidden.weight;
  out.param_grads[StnParams::kTargetOutW] = (2.0 * tau) * p.target_out.weight;
  return out;
}

struct MarginalMmd {
  double value = 0.0;
  Matrix grad_source;  // n_s x d
  Matrix grad_target;  // n_t x d
};

/// Squared distance between the projected source and target centroids.
inline MarginalMmd marginal_mmd(const Matrix& z_source, const Matrix& z_target) {
  if (z_source.rows() == 0 || z_target.rows() == 0) {
    throw EmptyInputError("marginal_mmd: both sides need at least one row");
  }
  if (z_source.cols() != z_target.cols()) {
    throw ShapeError("marginal_mmd: " + shape_str(z_source) + " vs " + shape_str(z_target));
  }
  const Matrix delta = rowwise_mean(z_source) - rowwise_mean(z_target);

  MarginalMmd out;
  out.value = sum_squares(delta);
  out.grad_source = Matrix(z_source.rows(), z_source.cols());
  out.grad_target = Matrix(z_target.rows(), z_target.cols());
  const double cs = 2.0 / static_cast<double>(z_source.rows());
  const double ct = -2.0 / static_cast<double>(z_target.rows());
  for (std::size_t i = 0; i < z_source.rows(); ++i)
    for (std::size_t j = 0; j < z_source.cols(); ++j) out.grad_source(i, j) = cs * delta(0, j);
  for (std::size_t i = 0; i < z_target.rows(); ++i)
    for (std::size_t j = 0; j < z_target.cols(); ++j) out.grad_target(i, j) = ct * delta(0, j);
  return out;
}

struct ConditionalMmd {
  double value = 0.0;
  Matrix grad_source;
  Matrix grad_labeled;
  Matrix grad_unlabeled;
};

/// Sum over classes of the squared distance between the source class centroid
/// and the soft-label-weighted target class centroid,
///   || (1/n_s^k) sum x_s  -  (sum x_l + sum_i A_{i,k} x_u_i) / (n_l^k + sum_i A_{i,k} + guard) ||^2.
/// The weights A = (r/R) * soft-label probabilities are treated as constants;
/// gradients flow only through the projected features.
inline ConditionalMmd conditional_mmd(const Matrix& z_source, const Matrix& z_labeled,
                                      const Matrix& z_unlabeled, const ClassIndex& idx,
                                      const SoftLabelMatrix& soft) {
  const std::size_t d = z_source.cols();
  const std::size_t num_classes = idx.num_classes();
  if (z_labeled.cols() != d || z_unlabeled.cols() != d) {
    throw ShapeError("conditional_mmd: projected dimensions disagree");
  }
  if (soft.probs.rows() != z_unlabeled.rows() || soft.probs.cols() != num_classes) {
    throw ShapeError("conditional_mmd: soft-label matrix is " + shape_str(soft.probs) + ", expected " +
                     std::to_string(z_unlabeled.rows()) + "x" + std::to_string(num_classes));
  }

  const Matrix weights = soft.adaptive_weights();

  ConditionalMmd out;
  out.grad_source = Matrix(z_source.rows(), d);
  out.grad_labeled = Matrix(z_labeled.rows(), d);
  out.grad_unlabeled = Matrix(z_unlabeled.rows(), d);

  for (std::size_t k = 0; k < num_classes; ++k) {
    const auto& src = idx.source_rows[k];
    const auto& lab = idx.labeled_rows[k];

    Matrix source_centroid(1, d, 0.0);
    for (std::size_t i : src)
      for (std::size_t j = 0; j < d; ++j) source_centroid(0, j) += z_source(i, j);
    source_centroid *= 1.0 / static_cast<double>(src.size());

    double weight_sum = 0.0;
    for (std::size_t i = 0; i < z_unlabeled.rows(); ++i) weight_sum += weights(i, k);
    const double denom = static_cast<double>(lab.size()) + weight_sum + kConditionalDenomGuard;

    Matrix target_centroid(1, d, 0.0);
    for (std::size_t i : lab)
      for (std::size_t j = 0; j < d; ++j) target_centroid(0, j) += z_labeled(i, j);
    for (std::size_t i = 0; i < z_unlabeled.rows(); ++i) {
      const double w = weights(i, k);
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) target_centroid(0, j) += w * z_unlabeled(i, j);
    }
    target_centroid *= 1.0 / denom;

    const Matrix delta = source_centroid - target_centroid;
    out.value += sum_squares(delta);

    const double src_coeff = 2.0 / static_cast<double>(src.size());
    for (std::size_t i : src)
      for (std::size_t j = 0; j < d; ++j) out.grad_source(i, j) += src_coeff * delta(0, j);
    const double lab_coeff = -2.0 / denom;
    for (std::size_t i : lab)
      for (std::size_t j = 0; j < d; ++j) out.grad_labeled(i, j) += lab_coeff * delta(0, j);
    for (std::size_t i = 0; i < z_unlabeled.rows(); ++i) {
      const double coeff = -2.0 * weights(i, k) / denom;
      if (coeff == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) out.grad_unlabeled(i, j) += coeff * delta(0, j);
    }
  }
  return out;
}

struct SoftMmd {
  double value = 0.0;
  double marginal = 0.0;
  double conditional = 0.0;
  Matrix grad_source;
  Matrix grad_labeled;
  Matrix grad_unlabeled;
};

/// Marginal plus conditional term, unweighted sum; the single tradeoff beta
/// is applied by the objective assembly, not here. z_target must be the
/// row-stack [z_labeled; z_unlabeled].
inline SoftMmd soft_mmd(const Matrix& z_source, const Matrix& z_target, const Matrix& z_labeled,
                        const Matrix& z_unlabeled, const ClassIndex& idx, const SoftLabelMatrix& soft) {
  if (z_target.rows() != z_labeled.rows() + z_unlabeled.rows() || z_target.cols() != z_labeled.cols()) {
    throw ShapeError("soft_mmd: z_target must stack z_labeled over z_unlabeled");
  }
  const MarginalMmd m = marginal_mmd(z_source, z_target);
  const ConditionalMmd c = conditional_mmd(z_source, z_labeled, z_unlabeled, idx, soft);

  SoftMmd out;
  out.marginal = m.value;
  out.conditional = c.value;
  out.value = m.value + c.value;
  out.grad_source = m.grad_source + c.grad_source;
  out.grad_labeled = slice_rows(m.grad_target, 0, z_labeled.rows()) + c.grad_labeled;
  out.grad_unlabeled = slice_rows(m.grad_target, z_labeled.rows(), z_target.rows()) + c.grad_unlabeled;
  return out;
}

}  // namespace stn
