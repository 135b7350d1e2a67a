#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "stn/gradcheck.hpp"
#include "stn/losses.hpp"
#include "stn/model.hpp"
#include "stn/rng.hpp"

using stn::Matrix;

namespace {

stn::ModelConfig toy_config() {
  stn::ModelConfig cfg;
  cfg.source_dim = 7;
  cfg.target_dim = 5;
  cfg.subspace_dim = 4;
  cfg.hidden_dim = 6;
  cfg.num_classes = 3;
  cfg.init_seed = 99;
  return cfg;
}

std::vector<int> cycle_labels(std::size_t n, std::size_t num_classes) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % num_classes);
  return y;
}

}  // namespace

TEST_CASE("classification loss at the optimum and at uniformity") {
  const auto cfg = toy_config();
  stn::StnParams p = stn::init_params(cfg);

  // Saturated logits: scaled one-hot features through a scaled identity
  // classifier yield near-perfect predictions.
  p.classifier.weight = Matrix(cfg.subspace_dim, cfg.num_classes, 0.0);
  for (std::size_t k = 0; k < cfg.num_classes; ++k) p.classifier.weight(k, k) = 10.0;
  p.classifier.bias = Matrix(1, cfg.num_classes, 0.0);

  stn::LabeledProjectedBatch batch;
  batch.features = Matrix(6, cfg.subspace_dim, 0.0);
  const std::vector<int> ys = cycle_labels(6, cfg.num_classes);
  for (std::size_t i = 0; i < 6; ++i) batch.features(i, static_cast<std::size_t>(ys[i])) = 10.0;
  batch.labels = stn::one_hot(ys, cfg.num_classes);

  const auto perfect = stn::classification_loss(batch, p, 0.0);
  REQUIRE(perfect.value <= 1e-10);
  REQUIRE(perfect.reg_part == 0.0);

  stn::StnParams uniform = p;
  uniform.classifier.weight = Matrix(cfg.subspace_dim, cfg.num_classes, 0.0);
  const auto at_uniform = stn::classification_loss(batch, uniform, 0.0);
  REQUIRE(std::abs(at_uniform.value - std::log(3.0)) < 1e-10);
}

TEST_CASE("regularizer equals the hand sum of squares") {
  const auto cfg = toy_config();
  const stn::StnParams p = stn::init_params(cfg);
  stn::SeededRng rng(12);
  stn::LabeledProjectedBatch batch;
  batch.features = stn::rng_uniform(rng, 9, cfg.subspace_dim, -1.0, 1.0);
  batch.labels = stn::one_hot(cycle_labels(9, cfg.num_classes), cfg.num_classes);

  const double tau = 0.001;
  double hand = 0.0;
  for (const Matrix* w : {&p.source_hidden.weight, &p.source_out.weight, &p.target_hidden.weight,
                          &p.target_out.weight, &p.classifier.weight}) {
    for (double v : w->data()) hand += v * v;
  }
  const auto loss = stn::classification_loss(batch, p, tau);
  REQUIRE(std::abs(loss.reg_part - tau * hand) < 1e-12);
  REQUIRE(std::abs(loss.value - (loss.cls_part + loss.reg_part)) < 1e-15);

  REQUIRE_THROWS_AS(stn::classification_loss(stn::LabeledProjectedBatch{}, p, tau),
                    stn::EmptyInputError);
}

TEST_CASE("classification loss gradients match finite differences") {
  const auto cfg = toy_config();
  stn::StnParams p = stn::init_params(cfg);
  stn::SeededRng rng(13);
  stn::LabeledProjectedBatch batch;
  batch.features = stn::rng_uniform(rng, 8, cfg.subspace_dim, -1.0, 1.0);
  batch.labels = stn::one_hot(cycle_labels(8, cfg.num_classes), cfg.num_classes);
  const double tau = 0.001;

  const auto analytic = stn::classification_loss(batch, p, tau);
  const auto value = [&] { return stn::classification_loss(batch, p, tau).value; };

  auto param_list = p.matrices();
  const auto report = stn::grad_check(std::span<Matrix* const>(param_list), value,
                                      analytic.param_grads, {.tol = 1e-5, .max_coords = 150});
  INFO("param max rel err " << report.max_rel_err);
  REQUIRE(report.pass);

  stn::GradBuffer feature_grads;
  feature_grads.grads.push_back(analytic.grad_features);
  Matrix* feature_slot = &batch.features;
  const auto feature_report = stn::grad_check(std::span<Matrix* const>(&feature_slot, 1), value,
                                              feature_grads, {.tol = 1e-5, .max_coords = 64});
  INFO("feature max rel err " << feature_report.max_rel_err);
  REQUIRE(feature_report.pass);
}

TEST_CASE("marginal MMD identities") {
  stn::SeededRng rng(21);
  const Matrix a = stn::rng_uniform(rng, 6, 4, -2.0, 2.0);
  REQUIRE(stn::marginal_mmd(a, a).value == 0.0);

  const Matrix zs = Matrix::from_rows({{0, 0}, {2, 0}});
  const Matrix zt = Matrix::from_rows({{1, 1}});
  REQUIRE(std::abs(stn::marginal_mmd(zs, zt).value - 1.0) < 1e-12);

  // Permuting rows of either side changes nothing.
  const Matrix zs_flipped = Matrix::from_rows({{2, 0}, {0, 0}});
  REQUIRE(stn::marginal_mmd(zs_flipped, zt).value == stn::marginal_mmd(zs, zt).value);

  REQUIRE_THROWS_AS(stn::marginal_mmd(Matrix(), zt), stn::EmptyInputError);
  REQUIRE(stn::marginal_mmd(a, stn::rng_uniform(rng, 3, 4, -9.0, -5.0)).value >= 0.0);
}

TEST_CASE("marginal MMD gradients match finite differences") {
  stn::SeededRng rng(22);
  Matrix zs = stn::rng_uniform(rng, 5, 3, -2.0, 2.0);
  Matrix zt = stn::rng_uniform(rng, 7, 3, -2.0, 2.0);
  const auto analytic = stn::marginal_mmd(zs, zt);
  stn::GradBuffer grads;
  grads.grads = {analytic.grad_source, analytic.grad_target};
  std::array<Matrix*, 2> slots = {&zs, &zt};
  const auto value = [&] { return stn::marginal_mmd(zs, zt).value; };
  const auto report = stn::grad_check(std::span<Matrix* const>(slots), value, grads,
                                      {.tol = 1e-6, .max_coords = 60});
  REQUIRE(report.pass);
}

TEST_CASE("class index construction names the missing class") {
  const std::vector<int> source_y = {0, 1, 2, 0};
  const std::vector<int> labeled_missing = {0, 0, 1};
  REQUIRE_THROWS_WITH(stn::ClassIndex::build(source_y, labeled_missing, 3),
                      Catch::Matchers::ContainsSubstring("class 2"));
  const std::vector<int> source_missing = {0, 1, 1};
  REQUIRE_THROWS_AS(stn::ClassIndex::build(source_missing, source_y, 3), stn::ConfigError);
}

namespace {

struct CondInstance {
  Matrix z_source, z_labeled, z_unlabeled;
  std::vector<int> source_y, labeled_y;
  stn::ClassIndex idx;
};

CondInstance random_instance(stn::SeededRng& rng, std::size_t num_classes, std::size_t d) {
  CondInstance inst;
  const std::size_t n_s = num_classes * 4;
  const std::size_t n_l = num_classes * 2;
  const std::size_t n_u = 11;
  inst.z_source = stn::rng_uniform(rng, n_s, d, -2.0, 2.0);
  inst.z_labeled = stn::rng_uniform(rng, n_l, d, -2.0, 2.0);
  inst.z_unlabeled = stn::rng_uniform(rng, n_u, d, -2.0, 2.0);
  inst.source_y = cycle_labels(n_s, num_classes);
  inst.labeled_y = cycle_labels(n_l, num_classes);
  inst.idx = stn::ClassIndex::build(inst.source_y, inst.labeled_y, num_classes);
  return inst;
}

Matrix random_simplex_rows(stn::SeededRng& rng, std::size_t rows, std::size_t cols) {
  Matrix m = stn::rng_uniform(rng, rows, cols, 0.05, 1.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < cols; ++k) sum += m(i, k);
    for (std::size_t k = 0; k < cols; ++k) m(i, k) /= sum;
  }
  return m;
}

}  // namespace

TEST_CASE("conditional MMD at r=0 ignores unlabeled data") {
  stn::SeededRng rng(31);
  auto inst = random_instance(rng, 3, 4);
  const stn::SoftLabelMatrix soft{random_simplex_rows(rng, inst.z_unlabeled.rows(), 3), 0, 300};
  const double base = stn::conditional_mmd(inst.z_source, inst.z_labeled, inst.z_unlabeled, inst.idx,
                                           soft).value;
  const Matrix perturbed = stn::rng_uniform(rng, inst.z_unlabeled.rows(), 4, -50.0, 50.0);
  const double after =
      stn::conditional_mmd(inst.z_source, inst.z_labeled, perturbed, inst.idx, soft).value;
  REQUIRE(std::abs(base - after) < 1e-12);
}

TEST_CASE("conditional MMD with one-hot labels matches the hard-partition oracle") {
  stn::SeededRng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 3, 4);
    Matrix probs(inst.z_unlabeled.rows(), 3, 0.0);
    for (std::size_t i = 0; i < probs.rows(); ++i) probs(i, rng.next_below(3)) = 1.0;
    const stn::SoftLabelMatrix soft{probs, 300, 300};  // r = R
    const double lib =
        stn::conditional_mmd(inst.z_source, inst.z_labeled, inst.z_unlabeled, inst.idx, soft).value;
    const double oracle = oracles::hard_partition_conditional_mmd(
        inst.z_source, inst.source_y, inst.z_labeled, inst.labeled_y, inst.z_unlabeled, probs, 3,
        stn::kConditionalDenomGuard);
    REQUIRE(std::abs(lib - oracle) < 1e-10);
  }
}

TEST_CASE("conditional MMD vanishes when per-class projections coincide") {
  const std::size_t d = 3;
  Matrix prototypes = Matrix::from_rows({{1, 0, 2}, {-1, 3, 0}});
  Matrix z_source(4, d), z_labeled(4, d);
  const std::vector<int> ys = {0, 1, 0, 1};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      z_source(i, j) = prototypes(static_cast<std::size_t>(ys[i]), j);
      z_labeled(i, j) = prototypes(static_cast<std::size_t>(ys[i]), j);
    }
  const auto idx = stn::ClassIndex::build(ys, ys, 2);
  const stn::SoftLabelMatrix soft{Matrix(5, 2, 0.5), 0, 300};  // r = 0, weights vanish
  const double value = stn::conditional_mmd(z_source, z_labeled, Matrix(5, d, 9.0), idx, soft).value;
  REQUIRE(value < 1e-15);
}

TEST_CASE("conditional MMD is invariant to within-class and paired permutations") {
  stn::SeededRng rng(33);
  auto inst = random_instance(rng, 3, 4);
  const Matrix probs = random_simplex_rows(rng, inst.z_unlabeled.rows(), 3);
  const stn::SoftLabelMatrix soft{probs, 150, 300};
  const double base =
      stn::conditional_mmd(inst.z_source, inst.z_labeled, inst.z_unlabeled, inst.idx, soft).value;

  // Swap two labeled rows of the same class (rows 0 and 3 share class 0).
  auto swapped = inst;
  for (std::size_t j = 0; j < 4; ++j) std::swap(swapped.z_labeled(0, j), swapped.z_labeled(3, j));
  const double after_label_swap =
      stn::conditional_mmd(swapped.z_source, swapped.z_labeled, swapped.z_unlabeled, swapped.idx, soft)
          .value;
  REQUIRE(std::abs(base - after_label_swap) < 1e-12);

  // Reverse the unlabeled rows together with their soft-label rows.
  Matrix z_rev(inst.z_unlabeled.rows(), 4);
  Matrix probs_rev(probs.rows(), 3);
  for (std::size_t i = 0; i < z_rev.rows(); ++i) {
    const std::size_t src = z_rev.rows() - 1 - i;
    for (std::size_t j = 0; j < 4; ++j) z_rev(i, j) = inst.z_unlabeled(src, j);
    for (std::size_t k = 0; k < 3; ++k) probs_rev(i, k) = probs(src, k);
  }
  const double after_paired = stn::conditional_mmd(inst.z_source, inst.z_labeled, z_rev, inst.idx,
                                                   {probs_rev, 150, 300})
                                  .value;
  REQUIRE(std::abs(base - after_paired) < 1e-12);
}

TEST_CASE("soft MMD is the sum of its parts with matching gradients") {
  stn::SeededRng rng(34);
  auto inst = random_instance(rng, 3, 4);
  const Matrix probs = random_simplex_rows(rng, inst.z_unlabeled.rows(), 3);
  const stn::SoftLabelMatrix soft{probs, 200, 300};
  Matrix z_target = stn::vstack(inst.z_labeled, inst.z_unlabeled);

  const auto combined =
      stn::soft_mmd(inst.z_source, z_target, inst.z_labeled, inst.z_unlabeled, inst.idx, soft);
  const auto m = stn::marginal_mmd(inst.z_source, z_target);
  const auto c = stn::conditional_mmd(inst.z_source, inst.z_labeled, inst.z_unlabeled, inst.idx, soft);
  REQUIRE(std::abs(combined.value - (m.value + c.value)) < 1e-12);
  REQUIRE(combined.marginal == m.value);
  REQUIRE(combined.conditional == c.value);

  // Gradient check over all three projected matrices; z_target is rebuilt
  // from the labeled/unlabeled parts inside the objective.
  stn::GradBuffer grads;
  grads.grads = {combined.grad_source, combined.grad_labeled, combined.grad_unlabeled};
  std::array<Matrix*, 3> slots = {&inst.z_source, &inst.z_labeled, &inst.z_unlabeled};
  const auto value = [&] {
    const Matrix zt = stn::vstack(inst.z_labeled, inst.z_unlabeled);
    return stn::soft_mmd(inst.z_source, zt, inst.z_labeled, inst.z_unlabeled, inst.idx, soft).value;
  };
  const auto report =
      stn::grad_check(std::span<Matrix* const>(slots), value, grads, {.tol = 1e-5, .max_coords = 120});
  INFO("max rel err " << report.max_rel_err);
  REQUIRE(report.pass);
}

TEST_CASE("soft MMD vanishes when both components do") {
  const Matrix prototypes = Matrix::from_rows({{1, 0, 2}, {-1, 3, 0}});
  const std::vector<int> ys = {0, 1, 0, 1};
  Matrix z_source(4, 3), z_labeled(4, 3), z_unlabeled(2, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      z_source(i, j) = prototypes(static_cast<std::size_t>(ys[i]), j);
      z_labeled(i, j) = prototypes(static_cast<std::size_t>(ys[i]), j);
    }
  for (std::size_t j = 0; j < 3; ++j) {
    z_unlabeled(0, j) = prototypes(0, j);
    z_unlabeled(1, j) = prototypes(1, j);
  }
  const auto idx = stn::ClassIndex::build(ys, ys, 2);
  const stn::SoftLabelMatrix soft{Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}), 300, 300};
  const Matrix z_target = stn::vstack(z_labeled, z_unlabeled);
  const auto result = stn::soft_mmd(z_source, z_target, z_labeled, z_unlabeled, idx, soft);
  REQUIRE(std::abs(result.value) < 1e-15);
}
