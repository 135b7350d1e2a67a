#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "stn/matrix.hpp"
#include "stn/rng.hpp"

using stn::Matrix;

TEST_CASE("matmul identity and hand cases") {
  stn::SeededRng rng(11);
  const Matrix a = stn::rng_uniform(rng, 3, 3, -2.0, 2.0);
  const Matrix ia = stn::matmul(Matrix::identity(3), a);
  REQUIRE(stn::max_abs_diff(ia, a) == 0.0);

  const Matrix left = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix right = Matrix::from_rows({{0}, {1}});
  const Matrix prod = stn::matmul(left, right);
  REQUIRE(prod.rows() == 2);
  REQUIRE(prod.cols() == 1);
  REQUIRE(prod(0, 0) == 2.0);
  REQUIRE(prod(1, 0) == 4.0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  stn::SeededRng rng(42);
  const Matrix a = stn::rng_uniform(rng, 5, 7, -3.0, 3.0);
  const Matrix b = stn::rng_uniform(rng, 7, 3, -3.0, 3.0);
  REQUIRE(stn::max_abs_diff(stn::matmul(a, b), oracles::matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes") {
  REQUIRE_THROWS_AS(stn::matmul(Matrix(2, 3), Matrix(2, 3)), stn::ShapeError);
}

TEST_CASE("matmul is associative within tolerance") {
  stn::SeededRng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = stn::rng_uniform(rng, 4, 5, -10.0, 10.0);
    const Matrix b = stn::rng_uniform(rng, 5, 6, -10.0, 10.0);
    const Matrix c = stn::rng_uniform(rng, 6, 3, -10.0, 10.0);
    const Matrix lhs = stn::matmul(stn::matmul(a, b), c);
    const Matrix rhs = stn::matmul(a, stn::matmul(b, c));
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double x = lhs.data()[i];
      const double y = rhs.data()[i];
      REQUIRE(std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}) < 1e-9);
    }
  }
}

TEST_CASE("rowwise_mean basics") {
  const Matrix single = Matrix::from_rows({{1.5, -2.0, 0.25}});
  REQUIRE(stn::max_abs_diff(stn::rowwise_mean(single), single) == 0.0);

  const Matrix sym = Matrix::from_rows({{0, 0}, {2, 2}});
  const Matrix mean = stn::rowwise_mean(sym);
  REQUIRE(mean(0, 0) == 1.0);
  REQUIRE(mean(0, 1) == 1.0);

  REQUIRE_THROWS_AS(stn::rowwise_mean(Matrix()), stn::EmptyInputError);
}

TEST_CASE("rowwise_mean matches the summation oracle") {
  stn::SeededRng rng(99);
  const Matrix a = stn::rng_uniform(rng, 10, 4, -5.0, 5.0);
  REQUIRE(stn::max_abs_diff(stn::rowwise_mean(a), oracles::column_mean(a)) < 1e-12);
}

TEST_CASE("rowwise_mean of identical rows is exact") {
  stn::SeededRng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix row = stn::rng_uniform(rng, 1, 6, -1.0, 1.0);
    const std::size_t n = 3 + static_cast<std::size_t>(rng.next_below(9));
    Matrix repeated(n, row.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < row.cols(); ++j) repeated(i, j) = row(0, j);
    REQUIRE(stn::max_abs_diff(stn::rowwise_mean(repeated), row) == 0.0);
  }
}

TEST_CASE("rng determinism and bounds") {
  stn::SeededRng a(7), b(7);
  const Matrix ma = stn::rng_uniform(a, 4, 5, -1.0, 1.0);
  const Matrix mb = stn::rng_uniform(b, 4, 5, -1.0, 1.0);
  REQUIRE(stn::max_abs_diff(ma, mb) == 0.0);

  stn::SeededRng c(7);
  const Matrix bounded = stn::rng_uniform(c, 50, 20, 0.0, 1.0);
  for (double v : bounded.data()) {
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }

  stn::SeededRng d(8);
  const Matrix other = stn::rng_uniform(d, 4, 5, -1.0, 1.0);
  REQUIRE(stn::max_abs_diff(ma, other) > 0.0);

  stn::SeededRng e(1);
  REQUIRE_THROWS_AS(stn::rng_uniform(e, 2, 2, 1.0, 1.0), stn::RangeError);
}

TEST_CASE("derived stream seeds differ from the base stream") {
  const std::uint64_t base = 1234;
  REQUIRE(stn::SeededRng::derive(base, 1) != stn::SeededRng::derive(base, 2));
  REQUIRE(stn::SeededRng::derive(base, 1) != base);
}

TEST_CASE("vstack and slice_rows round-trip") {
  stn::SeededRng rng(3);
  const Matrix top = stn::rng_uniform(rng, 3, 4, -1.0, 1.0);
  const Matrix bottom = stn::rng_uniform(rng, 2, 4, -1.0, 1.0);
  const Matrix stacked = stn::vstack(top, bottom);
  REQUIRE(stacked.rows() == 5);
  REQUIRE(stn::max_abs_diff(stn::slice_rows(stacked, 0, 3), top) == 0.0);
  REQUIRE(stn::max_abs_diff(stn::slice_rows(stacked, 3, 5), bottom) == 0.0);
}
