#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stn/errors.hpp"
#include "stn/matrix.hpp"
#include "stn/nn.hpp"
#include "stn/rng.hpp"

namespace stn {

struct ModelConfig {
  std::size_t source_dim = 0;    // d_s
  std::size_t target_dim = 0;    // d_t
  std::size_t subspace_dim = 256;  // d, the common subspace
  std::size_t hidden_dim = 0;      // h; 0 means "same as subspace_dim"
  std::size_t num_classes = 0;     // C
  double leaky_slope = 0.2;
  std::uint64_t init_seed = 0;

  std::size_t hidden() const { return hidden_dim == 0 ? subspace_dim : hidden_dim; }

  void validate() const {
    if (source_dim < 1 || target_dim < 1 || subspace_dim < 1 || hidden() < 1 || num_classes < 1) {
      throw ConfigError("ModelConfig: all dimensions must be >= 1");
    }
    if (leaky_slope < 0.0 || leaky_slope >= 1.0) {
      throw ConfigError("ModelConfig: leaky_slope must be in [0,1)");
    }
  }
};

/// All learnable weights: two-layer projection networks for each domain
/// (input -> hidden -> subspace, Leaky ReLU after the hidden layer, linear
/// output) plus the shared softmax classifier. Both projections land in the
/// same subspace regardless of the differing input dimensions.
struct StnParams {
  AffineParams source_hidden;  // d_s -> h
  AffineParams source_out;     // h -> d
  AffineParams target_hidden;  // d_t -> h
  AffineParams target_out;     // h -> d
  AffineParams classifier;     // d -> C
  double leaky_slope = 0.2;

  static constexpr std::size_t kMatrixCount = 10;

  /// Slot indices into matrices() and any GradBuffer mirroring it.
  enum Slot : std::size_t {
    kSourceHiddenW = 0,
    kSourceHiddenB,
    kSourceOutW,
    kSourceOutB,
    kTargetHiddenW,
    kTargetHiddenB,
    kTargetOutW,
    kTargetOutB,
    kClassifierW,
    kClassifierB,
  };

  /// Fixed flattened ordering used by the optimizer and gradient buffers.
  std::array<Matrix*, kMatrixCount> matrices() {
    return {&source_hidden.weight, &source_hidden.bias, &source_out.weight, &source_out.bias,
            &target_hidden.weight, &target_hidden.bias, &target_out.weight, &target_out.bias,
            &classifier.weight, &classifier.bias};
  }
  std::array<const Matrix*, kMatrixCount> matrices() const {
    return {&source_hidden.weight, &source_hidden.bias, &source_out.weight, &source_out.bias,
            &target_hidden.weight, &target_hidden.bias, &target_out.weight, &target_out.bias,
            &classifier.weight, &classifier.bias};
  }

  std::size_t subspace_dim() const { return source_out.weight.cols(); }
  std::size_t num_classes() const { return classifier.weight.cols(); }
  std::size_t source_dim() const { return source_hidden.weight.rows(); }
  std::size_t target_dim() const { return target_hidden.weight.rows(); }
};

namespace detail {

inline AffineParams glorot_affine(SeededRng& rng, std::size_t in_dim, std::size_t out_dim) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  return {rng_uniform(rng, in_dim, out_dim, -bound, bound), Matrix(1, out_dim, 0.0)};
}

}  // namespace detail

/// Glorot-uniform weights, zero biases, deterministic per cfg.init_seed.
inline StnParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  SeededRng rng(cfg.init_seed);
  StnParams p;
  p.source_hidden = detail::glorot_affine(rng, cfg.source_dim, cfg.hidden());
  p.source_out = detail::glorot_affine(rng, cfg.hidden(), cfg.subspace_dim);
  p.target_hidden = detail::glorot_affine(rng, cfg.target_dim, cfg.hidden());
  p.target_out = detail::glorot_affine(rng, cfg.hidden(), cfg.subspace_dim);
  p.classifier = detail::glorot_affine(rng, cfg.subspace_dim, cfg.num_classes);
  p.leaky_slope = cfg.leaky_slope;
  return p;
}

inline Matrix project_source(const StnParams& p, const Matrix& source_x) {
  return affine_forward(p.source_out, leaky_relu(affine_forward(p.source_hidden, source_x), p.leaky_slope));
}

inline Matrix project_target(const StnParams& p, const Matrix& target_x) {
  return affine_forward(p.target_out, leaky_relu(affine_forward(p.target_hidden, target_x), p.leaky_slope));
}

inline Matrix classifier_logits(const StnParams& p, const Matrix& z) {
  return affine_forward(p.classifier, z);
}

/// Softmax class probabilities for already-projected rows.
inline Matrix classify(const StnParams& p, const Matrix& z) {
  return softmax_rows(classifier_logits(p, z));
}

/// Class-probability rows assigned to unlabeled target samples by the current
/// classifier, with iteration bookkeeping for the adaptive weight schedule.
/// The rows are detached constants: within one iteration no gradient flows
/// through them.
struct SoftLabelMatrix {
  Matrix probs;           // n_u x C, rows in the simplex
  std::size_t iteration;  // r
  std::size_t total;      // R

  /// Adaptive weights A_{i,k} = (r/R) * probs_{i,k}.
  Matrix adaptive_weights() const {
    const double scale = static_cast<double>(iteration) / static_cast<double>(total);
    return scale * probs;
  }
};

/// Soft labels of the unlabeled target batch at schedule position (r, R).
inline SoftLabelMatrix compute_soft_labels(const StnParams& p, const Matrix& unlabeled_x,
                                           std::size_t r, std::size_t total) {
  if (total < 1) throw RangeError("compute_soft_labels: total iterations must be >= 1");
  if (r > total) throw RangeError("compute_soft_labels: requires r <= total");
  return {classify(p, project_target(p, unlabeled_x)), r, total};
}

/// Replaces each soft-label row by the one-hot argmax row (ties toward the
/// lowest class index); the schedule bookkeeping is preserved.
inline SoftLabelMatrix to_hard_labels(const SoftLabelMatrix& soft) {
  Matrix hard(soft.probs.rows(), soft.probs.cols(), 0.0);
  for (std::size_t i = 0; i < soft.probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < soft.probs.cols(); ++k) {
      if (soft.probs(i, k) > soft.probs(i, best)) best = k;
    }
    hard(i, best) = 1.0;
  }
  return {hard, soft.iteration, soft.total};
}

// ---------------------------------------------------------------------------
// Checkpoint container: plain text, hexfloat payload for bit-exact round trips.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_matrix(std::ostream& os, const char* name, const Matrix& m) {
  os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%a", m(i, j));
      os << buf << (j + 1 < m.cols() ? ' ' : '\n');
    }
  }
}

inline double parse_double_token(const std::string& tok, const char* context) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw ParseError(std::string(context) + ": bad numeric token '" + tok + "'");
  }
  return v;
}

inline Matrix read_matrix(std::istream& is, const std::string& expected_name) {
  std::string keyword, name;
  std::size_t rows = 0, cols = 0;
  if (!(is >> keyword >> name >> rows >> cols) || keyword != "matrix" || name != expected_name) {
    throw ParseError("checkpoint: expected matrix '" + expected_name + "'");
  }
  Matrix m(rows, cols);
  std::string tok;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(is >> tok)) throw ParseError("checkpoint: truncated matrix '" + expected_name + "'");
    m.data()[i] = parse_double_token(tok, "checkpoint");
  }
  return m;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const StnParams& p) {
  std::ofstream os(path);
  if (!os) throw FileError("save_checkpoint: cannot open " + path);
  os << "stn-checkpoint 1\n";
  char slope[64];
  std::snprintf(slope, sizeof(slope), "%a", cfg.leaky_slope);
  os << "config " << cfg.source_dim << ' ' << cfg.target_dim << ' ' << cfg.subspace_dim << ' '
     << cfg.hidden_dim << ' ' << cfg.num_classes << ' ' << slope << ' ' << cfg.init_seed << '\n';
  detail::write_matrix(os, "source_hidden.weight", p.source_hidden.weight);
  detail::write_matrix(os, "source_hidden.bias", p.source_hidden.bias);
  detail::write_matrix(os, "source_out.weight", p.source_out.weight);
  detail::write_matrix(os, "source_out.bias", p.source_out.bias);
  detail::write_matrix(os, "target_hidden.weight", p.target_hidden.weight);
  detail::write_matrix(os, "target_hidden.bias", p.target_hidden.bias);
  detail::write_matrix(os, "target_out.weight", p.target_out.weight);
  detail::write_matrix(os, "target_out.bias", p.target_out.bias);
  detail::write_matrix(os, "classifier.weight", p.classifier.weight);
  detail::write_matrix(os, "classifier.bias", p.classifier.bias);
  if (!os) throw FileError("save_checkpoint: write failed for " + path);
}

inline std::pair<ModelConfig, StnParams> load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FileError("load_checkpoint: cannot open " + path);
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "stn-checkpoint" || version != 1) {
    throw ParseError("load_checkpoint: not a version-1 checkpoint: " + path);
  }
  std::string keyword, slope_tok;
  ModelConfig cfg;
  if (!(is >> keyword >> cfg.source_dim >> cfg.target_dim >> cfg.subspace_dim >> cfg.hidden_dim >>
        cfg.num_classes >> slope_tok >> cfg.init_seed) ||
      keyword != "config") {
    throw ParseError("load_checkpoint: malformed config line");
  }
  cfg.leaky_slope = detail::parse_double_token(slope_tok, "load_checkpoint");
  StnParams p;
  p.source_hidden.weight = detail::read_matrix(is, "source_hidden.weight");
  p.source_hidden.bias = detail::read_matrix(is, "source_hidden.bias");
  p.source_out.weight = detail::read_matrix(is, "source_out.weight");
  p.source_out.bias = detail::read_matrix(is, "source_out.bias");
  p.target_hidden.weight = detail::read_matrix(is, "target_hidden.weight");
  p.target_hidden.bias = detail::read_matrix(is, "target_hidden.bias");
  p.target_out.weight = detail::read_matrix(is, "target_out.weight");
  p.target_out.bias = detail::read_matrix(is, "target_out.bias");
  p.classifier.weight = detail::read_matrix(is, "classifier.weight");
  p.classifier.bias = detail::read_matrix(is, "classifier.bias");
  p.leaky_slope = cfg.leaky_slope;
  return {cfg, p};
}

}  // namespace stn
