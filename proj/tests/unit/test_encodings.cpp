#include <cmath>
#include <numbers>

#include "doctest.h"
#include "loglab/encodings.hpp"
#include "loglab/error.hpp"

using namespace loglab;
using namespace loglab::encodings;
using loglab::nn::Matrix;

TEST_CASE("sinusoid at 0: even coordinates 0, odd coordinates 1") {
  const double v[] = {0.0};
  const Matrix m = sinusoidal_encode(v, 8);
  for (Eigen::Index j = 0; j < 8; ++j) CHECK(m(0, j) == (j % 2 ? 1.0 : 0.0));
}

TEST_CASE("sinusoid at 1, d_model 4") {
  const double v[] = {1.0};
  const Matrix m = sinusoidal_encode(v, 4);
  CHECK(m(0, 0) == doctest::Approx(0.8414709848078965).epsilon(1e-15));
  CHECK(m(0, 1) == doctest::Approx(0.5403023058681398).epsilon(1e-15));
  CHECK(m(0, 2) == doctest::Approx(std::sin(0.01)).epsilon(1e-15));
  CHECK(m(0, 3) == doctest::Approx(std::cos(0.01)).epsilon(1e-15));
}

TEST_CASE("sinusoid rejects odd or zero width") {
  const double v[] = {1.0};
  CHECK_THROWS_AS(sinusoidal_encode(v, 5), ConfigError);
  CHECK_THROWS_AS(sinusoidal_encode(v, 0), ConfigError);
}

TEST_CASE("rtee: equal elapsed values give identical rows; -1 is the special value") {
  const double elapsed[] = {0, 1, 1, 2, 4, 5, 6, -1};
  const Matrix m = rtee_encode(elapsed, 16);
  CHECK(m.row(1) == m.row(2));
  CHECK(m.row(1) != m.row(3));
  const double minus_one[] = {-1.0};
  CHECK(m.row(7) == sinusoidal_encode(minus_one, 16).row(0));
  CHECK(m(7, 0) == doctest::Approx(-0.8414709848078965));
}

TEST_CASE("rtee on an index sequence equals the positional encoding") {
  std::vector<double> idx{0, 1, 2, 3, 4, 5};
  CHECK(rtee_encode(idx, 8) == sinusoidal_encode(idx, 8));
}

TEST_CASE("time2vec closed forms") {
  Time2VecParams p{Matrix(1, 3), Matrix(1, 3)};
  p.omega << 1.0, 2.0 * std::numbers::pi, 0.5;
  p.phi << 0.0, 0.0, 0.25;
  const double tau[] = {5.0, 1.0};
  const Matrix m = time2vec_encode(tau, p);
  CHECK(m(0, 0) == 5.0);
  CHECK(std::abs(m(1, 1)) < 1e-12);
  CHECK(m(0, 2) == doctest::Approx(std::sin(2.75)));
  const Time2VecParams zero{Matrix::Zero(1, 4), Matrix::Zero(1, 4)};
  CHECK(time2vec_encode(tau, zero).isZero(0.0));
}

TEST_CASE("time2vec init scales frequencies by the median gap") {
  Rng rng(1);
  const auto p = init_time2vec(64, 100.0, rng);
  CHECK(p.omega.cwiseAbs().maxCoeff() <= 0.01);
  CHECK(p.phi.cwiseAbs().maxCoeff() <= std::numbers::pi);
  const std::int64_t el[] = {0, 0, 3, 1, 7};
  CHECK(median_positive(el) == 3.0);
  const std::int64_t none[] = {0, 0};
  CHECK(median_positive(none) == 1.0);
}
