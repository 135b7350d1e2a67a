// Command-line driver for Soft Transfer Network experiments: synthetic data
// generation, training, the ablation suite, gradient checking, and embedding
// export. Exit codes: 0 success, 2 usage error, 3 data/config error,
// 4 numerical divergence.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stn/stn.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CliConfig {
  // model
  std::size_t dim = 256;
  std::size_t hidden = 0;  // 0: same as dim
  double slope = 0.2;
  // training
  double beta = 0.001;
  double tau = 0.001;
  double lr = 0.001;
  std::size_t iters = 300;
  std::string variant = "full";
  // synthetic task
  std::size_t classes = 4;
  std::size_t latent = 3;
  std::size_t ds = 20;
  std::size_t dt = 15;
  double sep = 4.0;
  double noise = 1.0;
  std::size_t source_per_class = 100;
  std::size_t labeled_per_class = 3;
  std::size_t unlabeled_per_class = 50;
  // run control
  std::uint64_t seed = 0;
  std::size_t trials = 20;
  std::size_t jobs = 1;
  std::string data_dir;
  std::string out = "stn-out";
  std::string checkpoint;
  // gradient check
  double gc_tol = 1e-5;
  double gc_step = 1e-6;
  std::size_t gc_coords = 150;
};

void apply_config_file(CliConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw stn::FileError("config file not found: " + path);
  ordered_json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw stn::ParseError("config file " + path + ": " + e.what());
  }
  const auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("dim", cfg.dim);
  get("hidden", cfg.hidden);
  get("slope", cfg.slope);
  get("beta", cfg.beta);
  get("tau", cfg.tau);
  get("lr", cfg.lr);
  get("iters", cfg.iters);
  get("variant", cfg.variant);
  get("classes", cfg.classes);
  get("latent", cfg.latent);
  get("ds", cfg.ds);
  get("dt", cfg.dt);
  get("sep", cfg.sep);
  get("noise", cfg.noise);
  get("source_per_class", cfg.source_per_class);
  get("labeled_per_class", cfg.labeled_per_class);
  get("unlabeled_per_class", cfg.unlabeled_per_class);
  get("seed", cfg.seed);
  get("trials", cfg.trials);
  get("jobs", cfg.jobs);
  get("data_dir", cfg.data_dir);
  get("out", cfg.out);
  get("checkpoint", cfg.checkpoint);
  get("gc_tol", cfg.gc_tol);
  get("gc_step", cfg.gc_step);
  get("gc_coords", cfg.gc_coords);
}

ordered_json config_to_json(const CliConfig& cfg, const std::string& command) {
  return ordered_json{{"command", command},
                      {"dim", cfg.dim},
                      {"hidden", cfg.hidden},
                      {"slope", cfg.slope},
                      {"beta", cfg.beta},
                      {"tau", cfg.tau},
                      {"lr", cfg.lr},
                      {"iters", cfg.iters},
                      {"variant", cfg.variant},
                      {"classes", cfg.classes},
                      {"latent", cfg.latent},
                      {"ds", cfg.ds},
                      {"dt", cfg.dt},
                      {"sep", cfg.sep},
                      {"noise", cfg.noise},
                      {"source_per_class", cfg.source_per_class},
                      {"labeled_per_class", cfg.labeled_per_class},
                      {"unlabeled_per_class", cfg.unlabeled_per_class},
                      {"seed", cfg.seed},
                      {"trials", cfg.trials},
                      {"jobs", cfg.jobs},
                      {"data_dir", cfg.data_dir},
                      {"out", cfg.out},
                      {"checkpoint", cfg.checkpoint},
                      {"gc_tol", cfg.gc_tol},
                      {"gc_step", cfg.gc_step},
                      {"gc_coords", cfg.gc_coords}};
}

void echo_resolved_config(const CliConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out);
  std::ofstream os(fs::path(cfg.out) / "resolved_config.json");
  if (!os) throw stn::FileError("cannot write resolved_config.json under " + cfg.out);
  os << config_to_json(cfg, command).dump(2) << '\n';
}

stn::SynthSpec synth_spec(const CliConfig& cfg) {
  stn::SynthSpec spec;
  spec.num_classes = cfg.classes;
  spec.latent_dim = cfg.latent;
  spec.source_dim = cfg.ds;
  spec.target_dim = cfg.dt;
  spec.class_separation = cfg.sep;
  spec.noise = cfg.noise;
  spec.source_per_class = cfg.source_per_class;
  spec.labeled_per_class = cfg.labeled_per_class;
  spec.unlabeled_per_class = cfg.unlabeled_per_class;
  spec.seed = cfg.seed;
  return spec;
}

stn::ModelConfig model_config(const CliConfig& cfg) {
  stn::ModelConfig mcfg;
  mcfg.subspace_dim = cfg.dim;
  mcfg.hidden_dim = cfg.hidden;
  mcfg.leaky_slope = cfg.slope;
  return mcfg;
}

stn::TrainConfig train_config(const CliConfig& cfg) {
  stn::TrainConfig tcfg;
  tcfg.beta = cfg.beta;
  tcfg.tau = cfg.tau;
  tcfg.learning_rate = cfg.lr;
  tcfg.iterations = cfg.iters;
  tcfg.variant = stn::variant_from_string(cfg.variant);
  return tcfg;
}

/// Loads the dataset from --data-dir (the file layout cmd_gen emits) or
/// generates it from the synthetic-task flags.
stn::HdaDataset resolve_dataset(const CliConfig& cfg) {
  if (cfg.data_dir.empty()) return stn::gen_synthetic(synth_spec(cfg));
  const fs::path dir(cfg.data_dir);
  stn::HdaDataset data = stn::load_csv((dir / "source.csv").string(),
                                       (dir / "target_labeled.csv").string(),
                                       (dir / "target_unlabeled.csv").string(),
                                       {.num_classes = cfg.classes});
  const fs::path truth = dir / "target_unlabeled_truth.csv";
  if (fs::exists(truth)) {
    data.target_unlabeled_truth = stn::load_labels(truth.string(), cfg.classes);
    data.validate();
  }
  return data;
}

int cmd_gen(const CliConfig& cfg) {
  const stn::HdaDataset data = stn::gen_synthetic(synth_spec(cfg));
  fs::create_directories(cfg.out);
  const fs::path dir(cfg.out);
  stn::write_csv((dir / "source.csv").string(), data.source_x, &data.source_y);
  stn::write_csv((dir / "target_labeled.csv").string(), data.target_labeled_x,
                 &data.target_labeled_y);
  stn::write_csv((dir / "target_unlabeled.csv").string(), data.target_unlabeled_x, nullptr);
  stn::write_labels((dir / "target_unlabeled_truth.csv").string(), *data.target_unlabeled_truth);
  echo_resolved_config(cfg, "gen");
  std::cout << "wrote " << data.source_x.rows() << " source, " << data.target_labeled_x.rows()
            << " labeled target, " << data.target_unlabeled_x.rows()
            << " unlabeled target samples to " << cfg.out << '\n';
  return 0;
}

int cmd_train(const CliConfig& cfg) {
  const stn::HdaDataset data = resolve_dataset(cfg);
  stn::ModelConfig mcfg = model_config(cfg);
  mcfg.source_dim = data.source_x.cols();
  mcfg.target_dim = data.target_labeled_x.cols();
  mcfg.num_classes = data.num_classes;
  mcfg.init_seed = stn::SeededRng::derive(cfg.seed, 1);
  const stn::TrainConfig tcfg = train_config(cfg);

  const stn::TrainTrace trace = stn::train(data, mcfg, tcfg);
  fs::create_directories(cfg.out);
  const fs::path dir(cfg.out);
  stn::write_trace_csv(trace, (dir / "trace.csv").string());
  stn::save_checkpoint((dir / "checkpoint.stn").string(), mcfg, trace.final_params);

  ordered_json summary{{"variant", cfg.variant},
                       {"seed", cfg.seed},
                       {"iterations", trace.iterations.size()},
                       {"initial_total", trace.iterations.front().total},
                       {"final_total", trace.iterations.back().total}};
  if (data.target_unlabeled_truth) {
    const double acc = stn::accuracy(stn::predict(trace.final_params, data.target_unlabeled_x),
                                     *data.target_unlabeled_truth);
    summary["accuracy"] = acc;
  }
  std::ofstream os(dir / "summary.json");
  if (!os) throw stn::FileError("cannot write summary.json under " + cfg.out);
  os << summary.dump(2) << '\n';
  echo_resolved_config(cfg, "train");
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_ablate(const CliConfig& cfg) {
  stn::TrialSource source = cfg.data_dir.empty() ? stn::TrialSource(synth_spec(cfg))
                                                 : stn::TrialSource(resolve_dataset(cfg));
  const stn::SuiteReport suite = stn::run_ablations(source, model_config(cfg), train_config(cfg),
                                                    cfg.trials, cfg.seed, cfg.jobs);
  fs::create_directories(cfg.out);
  stn::write_suite_json((fs::path(cfg.out) / "suite_report.json").string(), suite);
  echo_resolved_config(cfg, "ablate");
  stn::print_suite_summary(suite, std::cout);
  return 0;
}

int cmd_export(const CliConfig& cfg) {
  if (cfg.checkpoint.empty()) throw stn::ConfigError("export requires --checkpoint");
  const auto [mcfg, params] = stn::load_checkpoint(cfg.checkpoint);
  const stn::HdaDataset data = resolve_dataset(cfg);
  if (data.source_x.cols() != mcfg.source_dim || data.target_labeled_x.cols() != mcfg.target_dim) {
    throw stn::ConfigError("export: dataset dimensions do not match the checkpoint");
  }
  fs::create_directories(cfg.out);
  const std::string path = (fs::path(cfg.out) / "embeddings.csv").string();
  stn::export_embeddings(params, data, path);
  echo_resolved_config(cfg, "export");
  std::cout << "wrote " << path << '\n';
  return 0;
}

/// Fixed toy instance for auditing the full objective gradient: small
/// dimensions keep the finite-difference sweep fast while exercising every
/// parameter matrix.
stn::HdaDataset gradcheck_dataset(std::uint64_t seed) {
  stn::SeededRng rng(seed);
  stn::HdaDataset data;
  data.num_classes = 3;
  data.source_x = stn::rng_uniform(rng, 12, 7, -1.0, 1.0);
  data.target_labeled_x = stn::rng_uniform(rng, 6, 5, -1.0, 1.0);
  data.target_unlabeled_x = stn::rng_uniform(rng, 10, 5, -1.0, 1.0);
  data.source_y.resize(12);
  data.target_labeled_y.resize(6);
  for (std::size_t i = 0; i < 12; ++i) data.source_y[i] = static_cast<int>(i % 3);
  for (std::size_t i = 0; i < 6; ++i) data.target_labeled_y[i] = static_cast<int>(i % 3);
  return data;
}

int cmd_gradcheck(const CliConfig& cfg) {
  const stn::HdaDataset data = gradcheck_dataset(cfg.seed + 17);
  stn::ModelConfig mcfg;
  mcfg.source_dim = 7;
  mcfg.target_dim = 5;
  mcfg.subspace_dim = 4;
  mcfg.hidden_dim = 6;
  mcfg.num_classes = 3;
  mcfg.leaky_slope = cfg.slope;
  mcfg.init_seed = stn::SeededRng::derive(cfg.seed, 1);
  const auto idx = stn::ClassIndex::build(data.source_y, data.target_labeled_y, data.num_classes);

  stn::TrainConfig base = train_config(cfg);
  bool all_pass = true;
  for (stn::Variant variant : stn::kAllVariants) {
    stn::TrainConfig tcfg = base;
    tcfg.variant = variant;
    for (std::size_t r : {std::size_t{0}, tcfg.iterations / 2, tcfg.iterations}) {
      stn::StnParams params = stn::init_params(mcfg);
      const stn::SoftLabelMatrix soft =
          stn::prepare_soft_labels(params, data.target_unlabeled_x, r, tcfg.iterations, tcfg.variant);
      const auto eval = stn::evaluate_objective(params, data, idx, soft, tcfg);
      auto param_list = params.matrices();
      const auto value = [&] {
        return stn::evaluate_objective(params, data, idx, soft, tcfg).breakdown.total;
      };
      const auto report = stn::grad_check(
          std::span<stn::Matrix* const>(param_list), value, eval.grads,
          {.step = cfg.gc_step, .tol = cfg.gc_tol, .max_coords = cfg.gc_coords, .seed = cfg.seed});
      all_pass = all_pass && report.pass;
      std::printf("gradcheck variant=%-8s r=%-4zu coords=%zu max_rel_err=%.3e %s\n",
                  stn::to_string(variant), r, report.coords_checked, report.max_rel_err,
                  report.pass ? "PASS" : "FAIL");
    }
  }
  if (!cfg.out.empty()) echo_resolved_config(cfg, "gradcheck");
  return all_pass ? 0 : 1;
}

void add_model_options(CLI::App* app, CliConfig& cfg) {
  app->add_option("--dim", cfg.dim, "common subspace dimension");
  app->add_option("--hidden", cfg.hidden, "hidden width (0: same as --dim)");
  app->add_option("--slope", cfg.slope, "Leaky ReLU negative slope");
}

void add_train_options(CLI::App* app, CliConfig& cfg) {
  app->add_option("--beta", cfg.beta, "distribution-matching tradeoff");
  app->add_option("--tau", cfg.tau, "weight regularization");
  app->add_option("--lr", cfg.lr, "Adam learning rate");
  app->add_option("--iters", cfg.iters, "training iterations R");
  app->add_option("--variant", cfg.variant,
                  "training variant: full, r_eq_R, r_eq_0, beta_0, hard, qm_only");
}

void add_synth_options(CLI::App* app, CliConfig& cfg) {
  app->add_option("--classes", cfg.classes, "number of classes");
  app->add_option("--latent", cfg.latent, "latent dimension of the synthetic task");
  app->add_option("--ds", cfg.ds, "source feature dimension");
  app->add_option("--dt", cfg.dt, "target feature dimension");
  app->add_option("--sep", cfg.sep, "class separation scale");
  app->add_option("--noise", cfg.noise, "observation noise level");
  app->add_option("--source-per-class", cfg.source_per_class, "source samples per class");
  app->add_option("--labeled-per-class", cfg.labeled_per_class, "labeled target samples per class");
  app->add_option("--unlabeled-per-class", cfg.unlabeled_per_class,
                  "unlabeled target samples per class");
}

void add_data_options(CLI::App* app, CliConfig& cfg) {
  app->add_option("--data-dir", cfg.data_dir,
                  "directory with source.csv / target_labeled.csv / target_unlabeled.csv");
}

void add_config_option(CLI::App* app, CliConfig& cfg) {
  app->add_option("--config", "JSON config file; flags override file values")
      ->each([&cfg](const std::string& path) { apply_config_file(cfg, path); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft Transfer Network: heterogeneous domain adaptation experiments"};
  app.require_subcommand(1);

  CliConfig cfg;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset as CSV files");
  add_config_option(gen, cfg);
  add_synth_options(gen, cfg);
  gen->add_option("--seed", cfg.seed, "task seed");
  gen->add_option("--out", cfg.out, "output directory");

  auto* train = app.add_subcommand("train", "train one model and export trace + checkpoint");
  add_config_option(train, cfg);
  add_model_options(train, cfg);
  add_train_options(train, cfg);
  add_synth_options(train, cfg);
  add_data_options(train, cfg);
  train->add_option("--seed", cfg.seed, "initialization seed");
  train->add_option("--out", cfg.out, "output directory");

  auto* ablate = app.add_subcommand("ablate", "run the ablation suite over paired trials");
  add_config_option(ablate, cfg);
  add_model_options(ablate, cfg);
  add_train_options(ablate, cfg);
  add_synth_options(ablate, cfg);
  add_data_options(ablate, cfg);
  ablate->add_option("--seed", cfg.seed, "base seed; trial i uses seed+i");
  ablate->add_option("--trials", cfg.trials, "number of paired trials");
  ablate->add_option("--jobs", cfg.jobs, "concurrent trials");
  ablate->add_option("--out", cfg.out, "output directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of the full gradient");
  add_config_option(gradcheck, cfg);
  add_train_options(gradcheck, cfg);
  gradcheck->add_option("--slope", cfg.slope, "Leaky ReLU negative slope");
  gradcheck->add_option("--seed", cfg.seed, "toy instance seed");
  gradcheck->add_option("--tol", cfg.gc_tol, "max allowed relative error");
  gradcheck->add_option("--step", cfg.gc_step, "central-difference half step");
  gradcheck->add_option("--coords", cfg.gc_coords, "sampled coordinates per check");
  gradcheck->add_option("--out", cfg.out, "output directory for the config echo");

  auto* exp = app.add_subcommand("export", "project a dataset through a checkpoint");
  add_config_option(exp, cfg);
  add_synth_options(exp, cfg);
  add_data_options(exp, cfg);
  exp->add_option("--checkpoint", cfg.checkpoint, "checkpoint file from train")->required();
  exp->add_option("--seed", cfg.seed, "synthetic task seed (when no --data-dir)");
  exp->add_option("--out", cfg.out, "output directory");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 2;
    }
    if (gen->parsed()) return cmd_gen(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (ablate->parsed()) return cmd_ablate(cfg);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg);
    if (exp->parsed()) return cmd_export(cfg);
  } catch (const stn::DivergenceError& e) {
    std::cerr << "divergence error: " << e.what() << '\n';
    return 4;
  } catch (const stn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
