#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stn/errors.hpp"
#include "stn/matrix.hpp"
#include "stn/rng.hpp"

namespace stn {

/// Heterogeneous-domain dataset: labeled source samples in one feature space,
/// labeled and unlabeled target samples in another. Ground-truth labels for
/// the unlabeled split, when present, exist purely for scoring; no training
/// code path reads them.
struct HdaDataset {
  Matrix source_x;  // n_s x d_s
  std::vector<int> source_y;
  Matrix target_labeled_x;  // n_l x d_t
  std::vector<int> target_labeled_y;
  Matrix target_unlabeled_x;  // n_u x d_t
  std::optional<std::vector<int>> target_unlabeled_truth;  // evaluation only
  std::size_t num_classes = 0;

  void validate() const {
    if (num_classes < 1) throw ConfigError("HdaDataset: num_classes must be >= 1");
    if (source_x.rows() != source_y.size()) {
      throw ShapeError("HdaDataset: source feature/label row counts differ");
    }
    if (target_labeled_x.rows() != target_labeled_y.size()) {
      throw ShapeError("HdaDataset: labeled target feature/label row counts differ");
    }
    if (target_unlabeled_truth && target_unlabeled_truth->size() != target_unlabeled_x.rows()) {
      throw ShapeError("HdaDataset: unlabeled truth length differs from unlabeled rows");
    }
    std::vector<bool> in_source(num_classes, false), in_target(num_classes, false);
    auto check = [&](const std::vector<int>& ys, std::vector<bool>& seen, const char* side) {
      for (int y : ys) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
          throw ConfigError(std::string("HdaDataset: ") + side + " label " + std::to_string(y) +
                            " out of range");
        }
        seen[static_cast<std::size_t>(y)] = true;
      }
    };
    check(source_y, in_source, "source");
    check(target_labeled_y, in_target, "target");
    if (target_unlabeled_truth) {
      for (int y : *target_unlabeled_truth) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
          throw ConfigError("HdaDataset: unlabeled truth label out of range");
        }
      }
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
      if (!in_source[k]) {
        throw ConfigError("HdaDataset: class " + std::to_string(k) + " missing from labeled source data");
      }
      if (!in_target[k]) {
        throw ConfigError("HdaDataset: class " + std::to_string(k) + " missing from labeled target data");
      }
    }
  }
};

struct CsvSchema {
  std::size_t num_classes = 0;
  bool has_header = false;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t line_no, const std::string& path) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (end == begin || *end != '\0') {
    throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
  }
  return v;
}

struct CsvTable {
  Matrix features;
  std::vector<int> labels;  // empty when label_column is false
};

inline CsvTable read_csv(const std::string& path, bool label_column, const CsvSchema& schema) {
  std::ifstream is(path);
  if (!is) throw FileError("read_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool skip_header = schema.has_header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_header) {
      skip_header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (width == 0) {
      width = cells.size();
      if (label_column && width < 2) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": need features plus a label column");
      }
    } else if (cells.size() != width) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": ragged row (" +
                       std::to_string(cells.size()) + " cells, expected " + std::to_string(width) + ")");
    }
    std::vector<double> row;
    const std::size_t feature_count = label_column ? width - 1 : width;
    row.reserve(feature_count);
    for (std::size_t j = 0; j < feature_count; ++j) row.push_back(parse_cell(cells[j], line_no, path));
    if (label_column) {
      const double raw = parse_cell(cells[width - 1], line_no, path);
      const int y = static_cast<int>(raw);
      if (static_cast<double>(y) != raw || y < 0 ||
          static_cast<std::size_t>(y) >= schema.num_classes) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": label " + cells[width - 1] +
                         " out of range for " + std::to_string(schema.num_classes) + " classes");
      }
      labels.push_back(y);
    }
    rows.push_back(std::move(row));
  }
  CsvTable table;
  table.features = Matrix(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) table.features(i, j) = rows[i][j];
  table.labels = std::move(labels);
  return table;
}

inline void format_double(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace detail

/// One sample per line, comma-separated decimal floats, optional trailing
/// integer label column, no quoting.
inline void write_csv(const std::string& path, const Matrix& features, const std::vector<int>* labels) {
  if (labels && labels->size() != features.rows()) {
    throw ShapeError("write_csv: label count differs from row count");
  }
  std::ofstream os(path);
  if (!os) throw FileError("write_csv: cannot open " + path);
  std::string line;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    line.clear();
    for (std::size_t j = 0; j < features.cols(); ++j) {
      if (j) line += ',';
      detail::format_double(line, features(i, j));
    }
    if (labels) {
      if (features.cols()) line += ',';
      line += std::to_string((*labels)[i]);
    }
    line += '\n';
    os << line;
  }
  if (!os) throw FileError("write_csv: write failed for " + path);
}

/// One integer label per line (ground truth for the unlabeled split).
inline void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream os(path);
  if (!os) throw FileError("write_labels: cannot open " + path);
  for (int y : labels) os << y << '\n';
  if (!os) throw FileError("write_labels: write failed for " + path);
}

inline std::vector<int> load_labels(const std::string& path, std::size_t num_classes) {
  std::ifstream is(path);
  if (!is) throw FileError("load_labels: cannot open " + path);
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const double raw = detail::parse_cell(line, line_no, path);
    const int y = static_cast<int>(raw);
    if (static_cast<double>(y) != raw || y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": label out of range");
    }
    labels.push_back(y);
  }
  return labels;
}

/// Loads the three delimited-text files of a dataset. Labeled files carry the
/// label as the final column; the unlabeled file holds features only.
inline HdaDataset load_csv(const std::string& source_path, const std::string& target_labeled_path,
                           const std::string& target_unlabeled_path, const CsvSchema& schema) {
  if (schema.num_classes < 1) throw ConfigError("load_csv: schema.num_classes must be >= 1");
  HdaDataset data;
  data.num_classes = schema.num_classes;
  auto source = detail::read_csv(source_path, true, schema);
  data.source_x = std::move(source.features);
  data.source_y = std::move(source.labels);
  auto labeled = detail::read_csv(target_labeled_path, true, schema);
  data.target_labeled_x = std::move(labeled.features);
  data.target_labeled_y = std::move(labeled.labels);
  auto unlabeled = detail::read_csv(target_unlabeled_path, false, schema);
  data.target_unlabeled_x = std::move(unlabeled.features);
  data.validate();
  return data;
}

/// Synthetic heterogeneous-domain task: class-conditional Gaussian latents
/// pushed through two fixed random affine observation maps (one per domain)
/// plus isotropic noise. A domain-invariant subspace exists by construction.
struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t latent_dim = 3;
  std::size_t source_dim = 20;
  std::size_t target_dim = 15;
  double class_separation = 4.0;  // scale of the latent class means
  double noise = 1.0;             // observation noise level
  std::size_t source_per_class = 100;
  std::size_t labeled_per_class = 3;  // mirrors the 3-labeled-samples protocol
  std::size_t unlabeled_per_class = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 1 || latent_dim < 1 || source_dim < 1 || target_dim < 1) {
      throw ConfigError("SynthSpec: all dimensions must be >= 1");
    }
    if (latent_dim > source_dim || latent_dim > target_dim) {
      throw ConfigError("SynthSpec: latent_dim must not exceed either observed dimension");
    }
    if (source_per_class < 1 || labeled_per_class < 1 || unlabeled_per_class < 1) {
      throw ConfigError("SynthSpec: all per-class counts must be >= 1");
    }
  }
};

/// Source samples plus the pooled target samples (labels retained); the
/// labeled/unlabeled split is drawn separately so trial runners can resample
/// it without regenerating the task.
struct SynthPool {
  Matrix source_x;
  std::vector<int> source_y;
  Matrix target_x;
  std::vector<int> target_y;
  std::size_t num_classes = 0;
};

namespace detail {

inline Matrix observation_map(SeededRng& rng, std::size_t latent_dim, std::size_t observed_dim) {
  Matrix map = rng_normal(rng, latent_dim, observed_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  map *= scale;
  return map;
}

inline void emit_class_samples(Matrix& out, std::vector<int>& ys, std::size_t& row, SeededRng& rng,
                               const Matrix& mean, const Matrix& map, double noise, std::size_t count,
                               int label) {
  const std::size_t latent_dim = map.rows();
  const std::size_t observed_dim = map.cols();
  for (std::size_t s = 0; s < count; ++s) {
    Matrix latent(1, latent_dim);
    for (std::size_t j = 0; j < latent_dim; ++j) latent(0, j) = mean(0, j) + rng.normal();
    const Matrix observed = matmul(latent, map);
    for (std::size_t j = 0; j < observed_dim; ++j) out(row, j) = observed(0, j) + noise * rng.normal();
    ys[row] = label;
    ++row;
  }
}

}  // namespace detail

inline SynthPool gen_synthetic_pool(const SynthSpec& spec) {
  spec.validate();
  SeededRng rng(SeededRng::derive(spec.seed, 0x7461736b));  // task stream

  std::vector<Matrix> class_means;
  class_means.reserve(spec.num_classes);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    Matrix mean = rng_normal(rng, 1, spec.latent_dim);
    mean *= spec.class_separation;
    class_means.push_back(std::move(mean));
  }
  const Matrix source_map = detail::observation_map(rng, spec.latent_dim, spec.source_dim);
  const Matrix target_map = detail::observation_map(rng, spec.latent_dim, spec.target_dim);

  SynthPool pool;
  pool.num_classes = spec.num_classes;
  pool.source_x = Matrix(spec.num_classes * spec.source_per_class, spec.source_dim);
  pool.source_y.resize(pool.source_x.rows());
  const std::size_t target_per_class = spec.labeled_per_class + spec.unlabeled_per_class;
  pool.target_x = Matrix(spec.num_classes * target_per_class, spec.target_dim);
  pool.target_y.resize(pool.target_x.rows());

  std::size_t source_row = 0, target_row = 0;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    detail::emit_class_samples(pool.source_x, pool.source_y, source_row, rng, class_means[k], source_map,
                               spec.noise, spec.source_per_class, static_cast<int>(k));
    detail::emit_class_samples(pool.target_x, pool.target_y, target_row, rng, class_means[k], target_map,
                               spec.noise, target_per_class, static_cast<int>(k));
  }
  return pool;
}

struct SplitIndices {
  std::vector<std::size_t> selected;
  std::vector<std::size_t> complement;
};

/// Exactly k_per_class indices per class (sorted), remainder as the sorted
/// complement. Selection is a per-class partial Fisher-Yates draw.
inline SplitIndices stratified_sample(const std::vector<int>& labels, std::size_t num_classes,
                                      std::size_t k_per_class, SeededRng& rng) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ConfigError("stratified_sample: label out of range at row " + std::to_string(i));
    }
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  SplitIndices split;
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto& members = by_class[k];
    if (members.size() < k_per_class) {
      throw SamplingError("stratified_sample: class " + std::to_string(k) + " has only " +
                          std::to_string(members.size()) + " members, need " +
                          std::to_string(k_per_class));
    }
    for (std::size_t j = 0; j < k_per_class; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.next_below(members.size() - j));
      std::swap(members[j], members[pick]);
    }
    split.selected.insert(split.selected.end(), members.begin(), members.begin() + k_per_class);
    split.complement.insert(split.complement.end(), members.begin() + k_per_class, members.end());
  }
  std::sort(split.selected.begin(), split.selected.end());
  std::sort(split.complement.begin(), split.complement.end());
  return split;
}

/// Splits a pooled target set into labeled/unlabeled parts, keeping the
/// unlabeled ground truth for scoring.
inline HdaDataset split_target_pool(const SynthPool& pool, std::size_t labeled_per_class, SeededRng& rng) {
  const SplitIndices split = stratified_sample(pool.target_y, pool.num_classes, labeled_per_class, rng);
  HdaDataset data;
  data.num_classes = pool.num_classes;
  data.source_x = pool.source_x;
  data.source_y = pool.source_y;
  data.target_labeled_x = take_rows(pool.target_x, split.selected);
  data.target_unlabeled_x = take_rows(pool.target_x, split.complement);
  data.target_labeled_y.reserve(split.selected.size());
  for (std::size_t i : split.selected) data.target_labeled_y.push_back(pool.target_y[i]);
  std::vector<int> truth;
  truth.reserve(split.complement.size());
  for (std::size_t i : split.complement) truth.push_back(pool.target_y[i]);
  data.target_unlabeled_truth = std::move(truth);
  data.validate();
  return data;
}

inline HdaDataset gen_synthetic(const SynthSpec& spec) {
  const SynthPool pool = gen_synthetic_pool(spec);
  SeededRng split_rng(SeededRng::derive(spec.seed, 0x73706c69));  // split stream
  return split_target_pool(pool, spec.labeled_per_class, split_rng);
}

}  // namespace stn
