#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lesita/metrics.hpp"
#include "lesita/rng.hpp"

using namespace lesita;

TEST_CASE("nmse in decibels matches hand computation", "[metrics]") {
  Vector ref(2);
  ref << 3.0, 4.0;  // energy 25
  Vector est(2);
  est << 3.0, 3.0;  // error energy 1
  // 10 log10(1/25) = -10 log10(25)
  CHECK(nmse_db(est, ref) == Catch::Approx(-10.0 * std::log10(25.0)).epsilon(1e-12));

  // Exact reconstruction hits the floor.
  CHECK(nmse_db(ref, ref) == -200.0);

  // Estimating zero gives ratio 1 -> 0 dB.
  Vector zero = Vector::Zero(2);
  CHECK(nmse_db(zero, ref) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("nmse is invariant to common scaling", "[metrics]") {
  Rng rng(8);
  Vector ref = rng.normal_vector(64);
  Vector est = ref + 0.1 * rng.normal_vector(64);
  double base = nmse_db(est, ref);
  for (double c : {0.5, 2.0, 100.0}) {
    CHECK(nmse_db(Vector(c * est), Vector(c * ref)) == Catch::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("nmse rejects a zero-energy reference", "[metrics]") {
  Vector zero = Vector::Zero(4);
  Vector est = Vector::Ones(4);
  CHECK_THROWS_AS(nmse_db(est, zero), InvalidParameterError);
}

TEST_CASE("nmse rejects mismatched lengths", "[metrics]") {
  Vector a = Vector::Ones(4);
  Vector b = Vector::Ones(5);
  CHECK_THROWS_AS(nmse_db(a, b), DimensionError);
}

TEST_CASE("nmse aggregate reports both averaging conventions", "[metrics]") {
  // Two samples with per-sample ratios 0.01 (-20 dB) and 0.0001 (-40 dB).
  Vector ref1(1), ref2(1), est1(1), est2(1);
  ref1 << 1.0;
  est1 << 1.1;  // ratio 0.01
  ref2 << 1.0;
  est2 << 1.01;  // ratio 0.0001
  Matrix ref(1, 2), est(1, 2);
  ref << ref1(0), ref2(0);
  est << est1(0), est2(0);
  NmseAggregate agg = nmse_db_aggregate(est, ref);
  CHECK(agg.count == 2);
  double mean_db = 0.5 * (10.0 * std::log10(0.01) + 10.0 * std::log10(0.0001));
  CHECK(agg.mean_db == Catch::Approx(mean_db).epsilon(1e-9));
  // Ratio-of-means convention: total error energy over total reference energy.
  double pooled = 10.0 * std::log10((0.01 + 0.0001) / 2.0);
  CHECK(agg.db_of_mean_ratio == Catch::Approx(pooled).epsilon(1e-9));
  // The two conventions genuinely differ here.
  CHECK(std::abs(agg.mean_db - agg.db_of_mean_ratio) > 1.0);
}

TEST_CASE("psnr in decibels matches hand computation", "[metrics]") {
  // Constant error of 0.1 against peak 1.0: MSE = 0.01, PSNR = 20 dB.
  Matrix ref = Matrix::Zero(4, 4);
  Matrix est = Matrix::Constant(4, 4, 0.1);
  CHECK(psnr_db(est, ref) == Catch::Approx(20.0).epsilon(1e-12));

  // Perfect reconstruction saturates at the ceiling.
  CHECK(psnr_db(ref, ref) == 200.0);

  // Custom peak value.
  CHECK(psnr_db(est, ref, 2.0) == Catch::Approx(10.0 * std::log10(4.0 / 0.01)).epsilon(1e-12));
}

TEST_CASE("psnr validates arguments", "[metrics]") {
  Matrix a = Matrix::Zero(2, 2);
  Matrix b = Matrix::Zero(3, 2);
  CHECK_THROWS_AS(psnr_db(a, b), DimensionError);
  CHECK_THROWS_AS(psnr_db(a, a, 0.0), InvalidParameterError);
}
