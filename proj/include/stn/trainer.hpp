#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "stn/data.hpp"
#include "stn/errors.hpp"
#include "stn/losses.hpp"
#include "stn/matrix.hpp"
#include "stn/model.hpp"
#include "stn/nn.hpp"

namespace stn {

/// Training variants. `full` is the complete objective; the others disable
/// one mechanism each:
///   r_eq_R  pins the adaptive schedule to its final value,
///   r_eq_0  zeroes the unlabeled soft-label weights,
///   beta_0  drops the whole distribution-matching loss,
///   hard    replaces soft labels by one-hot argmax labels,
///   qm_only keeps the marginal term and drops the conditional one.
enum class Variant { full, r_eq_R, r_eq_0, beta_0, hard, qm_only };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::r_eq_R: return "r_eq_R";
    case Variant::r_eq_0: return "r_eq_0";
    case Variant::beta_0: return "beta_0";
    case Variant::hard: return "hard";
    case Variant::qm_only: return "qm_only";
  }
  return "unknown";
}

inline constexpr std::array<Variant, 6> kAllVariants = {Variant::full,   Variant::r_eq_R,
                                                        Variant::r_eq_0, Variant::beta_0,
                                                        Variant::hard,   Variant::qm_only};

inline Variant variant_from_string(const std::string& name) {
  for (Variant v : kAllVariants) {
    if (name == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

struct TrainConfig {
  double beta = 0.001;
  double tau = 0.001;
  double learning_rate = 0.001;
  std::size_t iterations = 300;  // R
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Variant variant = Variant::full;

  void validate() const {
    if (beta < 0.0 || tau < 0.0) throw ConfigError("TrainConfig: beta and tau must be nonnegative");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (iterations < 1) throw ConfigError("TrainConfig: iterations must be >= 1");
  }
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::size_t step = 0;

  static AdamState like(std::span<const Matrix* const> params) {
    AdamState s;
    s.first_moment.reserve(params.size());
    s.second_moment.reserve(params.size());
    for (const Matrix* m : params) {
      s.first_moment.emplace_back(m->rows(), m->cols(), 0.0);
      s.second_moment.emplace_back(m->rows(), m->cols(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update over the flattened parameter list.
inline void adam_step(AdamState& state, std::span<Matrix* const> params, const GradBuffer& grads,
                      const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: parameter/gradient/state slot counts differ");
  }
  if (!grads.all_finite()) {
    throw DivergenceError("adam_step: non-finite gradient at step " + std::to_string(state.step + 1));
  }
  ++state.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p]->data();
    auto m = state.first_moment[p].data();
    auto v = state.second_moment[p].data();
    auto g = grads[p].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

/// Soft labels for iteration r under the configured variant: r_eq_R pins
/// r <- R, r_eq_0 pins r <- 0, hard swaps rows for one-hot argmax labels.
inline SoftLabelMatrix prepare_soft_labels(const StnParams& p, const Matrix& unlabeled_x, std::size_t r,
                                           std::size_t total, Variant variant) {
  std::size_t r_eff = r;
  if (variant == Variant::r_eq_R) r_eff = total;
  if (variant == Variant::r_eq_0) r_eff = 0;
  SoftLabelMatrix soft = compute_soft_labels(p, unlabeled_x, r_eff, total);
  if (variant == Variant::hard) soft = to_hard_labels(soft);
  return soft;
}

struct ObjectiveEval {
  ObjectiveBreakdown breakdown;
  GradBuffer grads;
};

namespace detail {

/// Forward activations of one two-layer projection network, kept for the
/// backward pass.
struct ProjectionTrace {
  Matrix pre_hidden;
  Matrix hidden;
  Matrix output;
};

inline ProjectionTrace project_with_trace(const AffineParams& first, const AffineParams& second,
                                          double slope, const Matrix& x) {
  ProjectionTrace t;
  t.pre_hidden = affine_forward(first, x);
  t.hidden = leaky_relu(t.pre_hidden, slope);
  t.output = affine_forward(second, t.hidden);
  return t;
}

/// Accumulates d(objective)/d(output) back through a projection network.
inline void backprop_projection(const AffineParams& first, const AffineParams& second, double slope,
                                const Matrix& x, const ProjectionTrace& trace, const Matrix& d_output,
                                GradBuffer& grads, std::size_t first_w, std::size_t first_b,
                                std::size_t second_w, std::size_t second_b) {
  const AffineGrads g2 = affine_backward(second, trace.hidden, d_output);
  const Matrix d_pre = leaky_relu_backward(trace.pre_hidden, slope, g2.input);
  const AffineGrads g1 = affine_backward(first, x, d_pre);
  grads[second_w] += g2.weight;
  grads[second_b] += g2.bias;
  grads[first_w] += g1.weight;
  grads[first_b] += g1.bias;
}

}  // namespace detail

/// Full objective (classification + regularizer + beta * Soft-MMD) and its
/// analytic gradient at the given parameters, with the soft labels held
/// fixed. Variant switches adjust which terms contribute: beta_0 still
/// reports q_m/q_c but they contribute nothing; qm_only records q_c = 0 so
/// the breakdown identity stays exact.
inline ObjectiveEval evaluate_objective(const StnParams& p, const HdaDataset& data, const ClassIndex& idx,
                                        const SoftLabelMatrix& soft, const TrainConfig& cfg) {
  const detail::ProjectionTrace source_trace =
      detail::project_with_trace(p.source_hidden, p.source_out, p.leaky_slope, data.source_x);
  const detail::ProjectionTrace labeled_trace =
      detail::project_with_trace(p.target_hidden, p.target_out, p.leaky_slope, data.target_labeled_x);
  const detail::ProjectionTrace unlabeled_trace =
      detail::project_with_trace(p.target_hidden, p.target_out, p.leaky_slope, data.target_unlabeled_x);

  LabeledProjectedBatch batch;
  batch.features = vstack(source_trace.output, labeled_trace.output);
  batch.labels = vstack(one_hot(data.source_y, data.num_classes),
                        one_hot(data.target_labeled_y, data.num_classes));
  ClassificationLoss cls = classification_loss(batch, p, cfg.tau);

  const Matrix z_target = vstack(labeled_trace.output, unlabeled_trace.output);
  const SoftMmd mmd = soft_mmd(source_trace.output, z_target, labeled_trace.output,
                               unlabeled_trace.output, idx, soft);

  const bool include_qc = cfg.variant != Variant::qm_only;
  const double beta_eff = cfg.variant == Variant::beta_0 ? 0.0 : cfg.beta;
  const double q_c_recorded = include_qc ? mmd.conditional : 0.0;

  ObjectiveEval eval;
  eval.breakdown.cls_loss = cls.cls_part;
  eval.breakdown.reg_term = cls.reg_part;
  eval.breakdown.q_m = mmd.marginal;
  eval.breakdown.q_c = q_c_recorded;
  eval.breakdown.iteration = soft.iteration;
  eval.breakdown.total = cls.value + beta_eff * (mmd.marginal + q_c_recorded);

  // Gradients w.r.t. the projected rows, combined across the loss terms.
  const std::size_t n_s = data.source_x.rows();
  Matrix d_source = slice_rows(cls.grad_features, 0, n_s);
  Matrix d_labeled = slice_rows(cls.grad_features, n_s, batch.features.rows());
  Matrix d_unlabeled(unlabeled_trace.output.rows(), unlabeled_trace.output.cols(), 0.0);
  if (beta_eff != 0.0) {
    Matrix mmd_source = mmd.grad_source;
    Matrix mmd_labeled = mmd.grad_labeled;
    Matrix mmd_unlabeled = mmd.grad_unlabeled;
    if (!include_qc) {
      // Recompute the marginal-only gradients; soft_mmd bundled both terms.
      const MarginalMmd only_m = marginal_mmd(source_trace.output, z_target);
      mmd_source = only_m.grad_source;
      mmd_labeled = slice_rows(only_m.grad_target, 0, labeled_trace.output.rows());
      mmd_unlabeled = slice_rows(only_m.grad_target, labeled_trace.output.rows(), z_target.rows());
    }
    d_source += beta_eff * mmd_source;
    d_labeled += beta_eff * mmd_labeled;
    d_unlabeled += beta_eff * mmd_unlabeled;
  }

  eval.grads = std::move(cls.param_grads);
  detail::backprop_projection(p.source_hidden, p.source_out, p.leaky_slope, data.source_x, source_trace,
                              d_source, eval.grads, StnParams::kSourceHiddenW, StnParams::kSourceHiddenB,
                              StnParams::kSourceOutW, StnParams::kSourceOutB);
  detail::backprop_projection(p.target_hidden, p.target_out, p.leaky_slope, data.target_labeled_x,
                              labeled_trace, d_labeled, eval.grads, StnParams::kTargetHiddenW,
                              StnParams::kTargetHiddenB, StnParams::kTargetOutW, StnParams::kTargetOutB);
  if (beta_eff != 0.0) {
    detail::backprop_projection(p.target_hidden, p.target_out, p.leaky_slope, data.target_unlabeled_x,
                                unlabeled_trace, d_unlabeled, eval.grads, StnParams::kTargetHiddenW,
                                StnParams::kTargetHiddenB, StnParams::kTargetOutW,
                                StnParams::kTargetOutB);
  }
  return eval;
}

struct TrainTrace {
  std::vector<ObjectiveBreakdown> iterations;
  StnParams final_params;
};

/// Full-batch training of the complete model for cfg.iterations steps. Soft
/// labels are recomputed from the current parameters at every step and the
/// 1-based step index drives the adaptive schedule. Deterministic given the
/// dataset and seeds.
inline TrainTrace train(const HdaDataset& data, const ModelConfig& mcfg, const TrainConfig& tcfg) {
  data.validate();
  tcfg.validate();
  const ClassIndex idx = ClassIndex::build(data.source_y, data.target_labeled_y, data.num_classes);

  StnParams params = init_params(mcfg);
  auto param_list = params.matrices();
  const std::span<Matrix* const> param_span(param_list);
  AdamState adam = AdamState::like(std::span<const Matrix* const>(params.matrices()));

  TrainTrace trace;
  trace.iterations.reserve(tcfg.iterations);
  for (std::size_t r = 1; r <= tcfg.iterations; ++r) {
    const SoftLabelMatrix soft =
        prepare_soft_labels(params, data.target_unlabeled_x, r, tcfg.iterations, tcfg.variant);
    ObjectiveEval eval = evaluate_objective(params, data, idx, soft, tcfg);
    eval.breakdown.iteration = r;
    if (!std::isfinite(eval.breakdown.total)) {
      throw DivergenceError("train: non-finite objective at iteration " + std::to_string(r));
    }
    trace.iterations.push_back(eval.breakdown);
    adam_step(adam, param_span, eval.grads, tcfg);
  }
  trace.final_params = std::move(params);
  return trace;
}

/// Target-only baseline (an NNt analogue): trains the target projection and
/// the classifier on the labeled target samples alone. No source data and no
/// distribution matching take part; the source network stays at its
/// initialization.
inline TrainTrace train_target_only(const HdaDataset& data, const ModelConfig& mcfg,
                                    const TrainConfig& tcfg) {
  data.validate();
  tcfg.validate();

  StnParams params = init_params(mcfg);
  auto param_list = params.matrices();
  const std::span<Matrix* const> param_span(param_list);
  AdamState adam = AdamState::like(std::span<const Matrix* const>(params.matrices()));

  const Matrix labels = one_hot(data.target_labeled_y, data.num_classes);
  const std::size_t n = data.target_labeled_x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  TrainTrace trace;
  trace.iterations.reserve(tcfg.iterations);
  for (std::size_t r = 1; r <= tcfg.iterations; ++r) {
    const detail::ProjectionTrace proj = detail::project_with_trace(
        params.target_hidden, params.target_out, params.leaky_slope, data.target_labeled_x);
    const Matrix probs = classify(params, proj.output);

    ObjectiveBreakdown step;
    step.iteration = r;
    step.cls_loss = inv_n * cross_entropy(probs, labels);
    step.reg_term = tcfg.tau * (sum_squares(params.target_hidden.weight) +
                                sum_squares(params.target_out.weight) +
                                sum_squares(params.classifier.weight));
    step.total = step.cls_loss + step.reg_term;
    if (!std::isfinite(step.total)) {
      throw DivergenceError("train_target_only: non-finite objective at iteration " + std::to_string(r));
    }
    trace.iterations.push_back(step);

    const Matrix d_logits = inv_n * softmax_cross_entropy_backward(probs, labels);
    GradBuffer grads = GradBuffer::zeros_like(std::span<const Matrix* const>(params.matrices()));
    grads[StnParams::kClassifierW] =
        matmul(transpose(proj.output), d_logits) + (2.0 * tcfg.tau) * params.classifier.weight;
    grads[StnParams::kClassifierB] = colwise_sum(d_logits);
    grads[StnParams::kTargetHiddenW] = (2.0 * tcfg.tau) * params.target_hidden.weight;
    grads[StnParams::kTargetOutW] = (2.0 * tcfg.tau) * params.target_out.weight;
    const Matrix d_proj = matmul(d_logits, transpose(params.classifier.weight));
    detail::backprop_projection(params.target_hidden, params.target_out, params.leaky_slope,
                                data.target_labeled_x, proj, d_proj, grads, StnParams::kTargetHiddenW,
                                StnParams::kTargetHiddenB, StnParams::kTargetOutW,
                                StnParams::kTargetOutB);
    adam_step(adam, param_span, grads, tcfg);
  }
  trace.final_params = std::move(params);
  return trace;
}

/// Predicted class indices for target-space samples; ties break toward the
/// lowest class index.
inline std::vector<int> predict(const StnParams& p, const Matrix& target_x) {
  const Matrix probs = classify(p, project_target(p, target_x));
  std::vector<int> labels(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < probs.cols(); ++k) {
      if (probs(i, k) > probs(i, best)) best = k;
    }
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

inline void write_trace_csv(const TrainTrace& trace, std::ostream& os) {
  os << "r,cls_loss,q_m,q_c,reg,total\n";
  char buf[64];
  for (const ObjectiveBreakdown& b : trace.iterations) {
    os << b.iteration;
    for (double v : {b.cls_loss, b.q_m, b.q_c, b.reg_term, b.total}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
}

inline void write_trace_csv(const TrainTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FileError("write_trace_csv: cannot open " + path);
  write_trace_csv(trace, os);
  if (!os) throw FileError("write_trace_csv: write failed for " + path);
}

}  // namespace stn
