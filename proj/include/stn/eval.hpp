#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stn/data.hpp"
#include "stn/errors.hpp"
#include "stn/model.hpp"
#include "stn/trainer.hpp"

namespace stn {

/// Fraction of exact label matches.
inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("accuracy: prediction/truth lengths differ");
  }
  if (predicted.empty()) throw EmptyInputError("accuracy: empty label lists");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

struct TrialReport {
  std::uint64_t seed = 0;
  std::string variant;
  double accuracy = 0.0;
  std::int64_t wall_ms = 0;
  TrainTrace trace;
};

struct VariantSummary {
  std::string variant;
  std::vector<TrialReport> trials;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over the trials
};

using SuiteReport = std::vector<VariantSummary>;

/// A suite runs either on a synthetic task spec (the labeled/unlabeled target
/// split is resampled per trial) or on a fixed user dataset.
using TrialSource = std::variant<SynthSpec, HdaDataset>;

enum class TrainMode { stn, target_only };

namespace detail {

inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kSplitStream = 2;

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double population_stddev(const std::vector<double>& xs, double mean) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

/// Target pool shared by every trial of a suite; built once so all trials
/// face the same underlying task.
struct TrialPool {
  Matrix source_x;
  std::vector<int> source_y;
  Matrix target_x;
  std::vector<int> target_y;
  std::size_t num_classes = 0;
  std::size_t labeled_per_class = 0;  // 0: resampling unavailable, split is fixed
  const HdaDataset* fixed = nullptr;  // set when the source is a fixed dataset
};

inline TrialPool build_trial_pool(const TrialSource& source) {
  TrialPool pool;
  if (const SynthSpec* spec = std::get_if<SynthSpec>(&source)) {
    SynthPool sp = gen_synthetic_pool(*spec);
    pool.source_x = std::move(sp.source_x);
    pool.source_y = std::move(sp.source_y);
    pool.target_x = std::move(sp.target_x);
    pool.target_y = std::move(sp.target_y);
    pool.num_classes = sp.num_classes;
    pool.labeled_per_class = spec->labeled_per_class;
    return pool;
  }
  const HdaDataset& data = std::get<HdaDataset>(source);
  data.validate();
  pool.fixed = &data;
  pool.num_classes = data.num_classes;
  if (data.target_unlabeled_truth) {
    // Pool the whole target domain so the labeled subset can be resampled,
    // provided every class has the same labeled count.
    std::vector<std::size_t> counts(data.num_classes, 0);
    for (int y : data.target_labeled_y) ++counts[static_cast<std::size_t>(y)];
    const bool uniform = std::all_of(counts.begin(), counts.end(),
                                     [&](std::size_t c) { return c == counts[0]; });
    if (uniform && counts[0] > 0) {
      pool.target_x = vstack(data.target_labeled_x, data.target_unlabeled_x);
      pool.target_y = data.target_labeled_y;
      pool.target_y.insert(pool.target_y.end(), data.target_unlabeled_truth->begin(),
                           data.target_unlabeled_truth->end());
      pool.labeled_per_class = counts[0];
    }
  }
  return pool;
}

inline HdaDataset make_trial_dataset(const TrialPool& pool, std::uint64_t trial_seed) {
  if (pool.labeled_per_class == 0) return *pool.fixed;  // fixed split
  SeededRng split_rng(SeededRng::derive(trial_seed, kSplitStream));
  SynthPool sp;
  sp.source_x = pool.fixed ? pool.fixed->source_x : pool.source_x;
  sp.source_y = pool.fixed ? pool.fixed->source_y : pool.source_y;
  sp.target_x = pool.target_x;
  sp.target_y = pool.target_y;
  sp.num_classes = pool.num_classes;
  return split_target_pool(sp, pool.labeled_per_class, split_rng);
}

inline ModelConfig resolve_model_config(ModelConfig mcfg, const HdaDataset& data,
                                        std::uint64_t trial_seed) {
  mcfg.source_dim = data.source_x.cols();
  mcfg.target_dim = data.target_labeled_x.cols();
  mcfg.num_classes = data.num_classes;
  mcfg.init_seed = SeededRng::derive(trial_seed, kInitStream);
  return mcfg;
}

inline TrialReport run_one_trial(const HdaDataset& data, const ModelConfig& mcfg,
                                 const TrainConfig& tcfg, std::uint64_t trial_seed, TrainMode mode) {
  if (!data.target_unlabeled_truth) {
    throw ConfigError("run_trials: scoring requires ground-truth labels for the unlabeled split");
  }
  const auto start = std::chrono::steady_clock::now();
  TrainTrace trace =
      mode == TrainMode::stn ? train(data, mcfg, tcfg) : train_target_only(data, mcfg, tcfg);
  const auto stop = std::chrono::steady_clock::now();

  TrialReport report;
  report.seed = trial_seed;
  report.variant = mode == TrainMode::stn ? to_string(tcfg.variant) : "target_only";
  report.accuracy = accuracy(predict(trace.final_params, data.target_unlabeled_x),
                             *data.target_unlabeled_truth);
  report.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(stop - start).count();
  report.trace = std::move(trace);
  return report;
}

inline void summarize(VariantSummary& summary) {
  std::vector<double> accs;
  accs.reserve(summary.trials.size());
  for (const TrialReport& t : summary.trials) accs.push_back(t.accuracy);
  summary.mean = mean_of(accs);
  summary.stddev = population_stddev(accs, summary.mean);
}

/// Runs `worker(i)` for i in [0, n) with at most `jobs` concurrent tasks,
/// storing results by index so the output order never depends on timing.
template <typename Worker>
inline auto run_indexed(std::size_t n, std::size_t jobs, Worker&& worker) {
  using Result = decltype(worker(std::size_t{0}));
  std::vector<Result> results(n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = worker(i);
    return results;
  }
  std::size_t next = 0;
  while (next < n) {
    const std::size_t batch = std::min(jobs, n - next);
    std::vector<std::future<Result>> futures;
    futures.reserve(batch);
    for (std::size_t j = 0; j < batch; ++j) {
      futures.push_back(std::async(std::launch::async, [&worker, i = next + j] { return worker(i); }));
    }
    for (std::size_t j = 0; j < batch; ++j) results[next + j] = futures[j].get();
    next += batch;
  }
  return results;
}

}  // namespace detail

/// Trains and scores n_trials runs; trial i derives its split and its weight
/// initialization from base_seed + i, so a rerun with the same arguments
/// reproduces the report bit for bit.
inline SuiteReport run_trials(const TrialSource& source, const ModelConfig& mcfg,
                              const TrainConfig& tcfg, std::size_t n_trials, std::uint64_t base_seed,
                              std::size_t jobs = 1, TrainMode mode = TrainMode::stn) {
  if (n_trials < 1) throw ConfigError("run_trials: n_trials must be >= 1");
  const detail::TrialPool pool = detail::build_trial_pool(source);

  auto trials = detail::run_indexed(n_trials, jobs, [&](std::size_t i) {
    const std::uint64_t trial_seed = base_seed + i;
    const HdaDataset data = detail::make_trial_dataset(pool, trial_seed);
    const ModelConfig trial_mcfg = detail::resolve_model_config(mcfg, data, trial_seed);
    return detail::run_one_trial(data, trial_mcfg, tcfg, trial_seed, mode);
  });

  VariantSummary summary;
  summary.variant = mode == TrainMode::stn ? to_string(tcfg.variant) : "target_only";
  summary.trials = std::move(trials);
  detail::summarize(summary);
  return {std::move(summary)};
}

/// Runs every ablation variant over the same per-trial splits and
/// initialization seeds, so per-variant differences isolate the variant.
inline SuiteReport run_ablations(const TrialSource& source, const ModelConfig& mcfg,
                                 const TrainConfig& tcfg, std::size_t n_trials, std::uint64_t base_seed,
                                 std::size_t jobs = 1) {
  if (n_trials < 1) throw ConfigError("run_ablations: n_trials must be >= 1");
  const detail::TrialPool pool = detail::build_trial_pool(source);

  auto per_trial = detail::run_indexed(n_trials, jobs, [&](std::size_t i) {
    const std::uint64_t trial_seed = base_seed + i;
    const HdaDataset data = detail::make_trial_dataset(pool, trial_seed);
    const ModelConfig trial_mcfg = detail::resolve_model_config(mcfg, data, trial_seed);
    std::vector<TrialReport> reports;
    reports.reserve(kAllVariants.size());
    for (Variant v : kAllVariants) {
      TrainConfig variant_cfg = tcfg;
      variant_cfg.variant = v;
      reports.push_back(detail::run_one_trial(data, trial_mcfg, variant_cfg, trial_seed, TrainMode::stn));
    }
    return reports;
  });

  SuiteReport suite;
  suite.reserve(kAllVariants.size());
  for (std::size_t v = 0; v < kAllVariants.size(); ++v) {
    VariantSummary summary;
    summary.variant = to_string(kAllVariants[v]);
    summary.trials.reserve(n_trials);
    for (std::size_t i = 0; i < n_trials; ++i) summary.trials.push_back(std::move(per_trial[i][v]));
    detail::summarize(summary);
    suite.push_back(std::move(summary));
  }
  return suite;
}

inline nlohmann::ordered_json suite_to_json(const SuiteReport& suite) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const VariantSummary& vs : suite) {
    nlohmann::ordered_json trials = nlohmann::ordered_json::array();
    for (const TrialReport& t : vs.trials) {
      trials.push_back({{"seed", t.seed}, {"accuracy", t.accuracy}, {"wall_ms", t.wall_ms}});
    }
    out.push_back({{"variant", vs.variant},
                   {"trials", std::move(trials)},
                   {"mean", vs.mean},
                   {"std", vs.stddev}});
  }
  return out;
}

inline void write_suite_json(const std::string& path, const SuiteReport& suite) {
  std::ofstream os(path);
  if (!os) throw FileError("write_suite_json: cannot open " + path);
  os << suite_to_json(suite).dump(2) << '\n';
  if (!os) throw FileError("write_suite_json: write failed for " + path);
}

/// Human-readable summary table; the spread column is the population
/// standard deviation of the per-trial accuracies.
inline void print_suite_summary(const SuiteReport& suite, std::ostream& os) {
  os << "variant       trials   mean_acc    std\n";
  for (const VariantSummary& vs : suite) {
    os << std::left << std::setw(14) << vs.variant << std::right << std::setw(6) << vs.trials.size()
       << std::fixed << std::setprecision(4) << std::setw(10) << vs.mean << std::setw(9) << vs.stddev
       << '\n';
  }
}

/// Writes projected source and target rows (in that order) with domain and
/// label tag columns; unlabeled rows carry their ground-truth label when
/// available and -1 otherwise.
inline void export_embeddings(const StnParams& params, const HdaDataset& data, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FileError("export_embeddings: cannot open " + path);
  const Matrix z_source = project_source(params, data.source_x);
  const Matrix z_labeled = project_target(params, data.target_labeled_x);
  const Matrix z_unlabeled = project_target(params, data.target_unlabeled_x);

  os << "domain,label";
  for (std::size_t j = 0; j < z_source.cols(); ++j) os << ",e" << j;
  os << '\n';
  char buf[64];
  const auto emit = [&](const char* domain, int label, const Matrix& z, std::size_t row) {
    os << domain << ',' << label;
    for (std::size_t j = 0; j < z.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", z(row, j));
      os << ',' << buf;
    }
    os << '\n';
  };
  for (std::size_t i = 0; i < z_source.rows(); ++i) emit("source", data.source_y[i], z_source, i);
  for (std::size_t i = 0; i < z_labeled.rows(); ++i) {
    emit("target", data.target_labeled_y[i], z_labeled, i);
  }
  for (std::size_t i = 0; i < z_unlabeled.rows(); ++i) {
    const int label = data.target_unlabeled_truth ? (*data.target_unlabeled_truth)[i] : -1;
    emit("target", label, z_unlabeled, i);
  }
  if (!os) throw FileError("export_embeddings: write failed for " + path);
}

}  // namespace stn
