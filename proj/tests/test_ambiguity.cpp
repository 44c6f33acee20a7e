#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "giocal/ambiguity.hpp"
#include "oracles.hpp"

using namespace giocal;

namespace {

MatX random_spd(int n, double correlation = 0.8) {
  MatX a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = test::randu(-correlation, correlation);
  }
  MatX q = a * a.transpose();
  q.diagonal().array() += 0.05;
  return q;
}

}  // namespace

TEST_CASE("sd_to_dd differencing arithmetic") {
  VecX a(2);
  a << 5.2, 3.1;
  MatX q = MatX::Zero(2, 2);
  q(0, 0) = 0.04;
  q(1, 1) = 0.09;
  const auto dd = sd_to_dd(a, q, {1, 2}, {0, 0}, {{0, 1}});
  REQUIRE(dd.size() == 1);
  CHECK(dd.values(0) == doctest::Approx(-2.1).epsilon(1e-12));
  CHECK(dd.cov(0, 0) == doctest::Approx(0.13).epsilon(1e-12));
  CHECK(dd.sat_ref[0] == 1);
  CHECK(dd.sat_other[0] == 2);
}

TEST_CASE("sd_to_dd edge cases") {
  VecX a(1);
  a << 4.0;
  MatX q = MatX::Identity(1, 1);
  CHECK(sd_to_dd(a, q, {3}, {0}, {{0, 3}}).size() == 0);

  VecX a2(2);
  a2 << 1.0, 2.0;
  CHECK_THROWS_AS(sd_to_dd(a2, MatX::Identity(2, 2), {3, 3}, {0, 0}, {{0, 3}}),
                  std::invalid_argument);
}

TEST_CASE("sd_to_dd with six satellites: PSD rank 5") {
  const int n = 6;
  VecX a(n);
  for (int i = 0; i < n; ++i) a(i) = test::randu(-100, 100);
  const MatX q = random_spd(n, 0.3);
  std::vector<int> sats = {1, 2, 3, 4, 5, 6}, bands(n, 0);
  const auto dd = sd_to_dd(a, q, sats, bands, {{0, 1}});
  REQUIRE(dd.size() == 5);
  Eigen::SelfAdjointEigenSolver<MatX> es(dd.cov);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK(Eigen::FullPivLU<MatX>(dd.cov).rank() == 5);
}

TEST_CASE("reduction produces a unimodular integer transform") {
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 5;
    const MatX q = random_spd(n);
    MatX z, z_inv;
    ils_reduce(q, &z, &z_inv);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        CHECK(z(i, j) == doctest::Approx(std::round(z(i, j))).epsilon(1e-12));
        CHECK(z_inv(i, j) == doctest::Approx(std::round(z_inv(i, j))).epsilon(1e-12));
      }
    }
    CHECK(std::abs(std::abs((z * z_inv - MatX::Identity(n, n)).cwiseAbs().maxCoeff())) <
          1e-9);
    CHECK(std::abs(std::abs(z.determinant()) - 1.0) < 1e-6);
  }
}

TEST_CASE("ils_fix on easy diagonal problems") {
  FloatAmbiguitySet amb;
  amb.values = VecX(2);
  amb.values << 1.2, 3.8;
  amb.cov = MatX::Identity(2, 2) * 0.01;
  amb.sat_other = {2, 3};
  amb.sat_ref = {1, 1};
  amb.bands = {0, 0};
  const FixResult fix = ils_fix(amb, 3.0);
  CHECK(fix.best(0) == doctest::Approx(1.0));
  CHECK(fix.best(1) == doctest::Approx(4.0));
  CHECK(fix.q1 <= fix.q2);

  // float values already integer with a tiny covariance: huge ratio, accepted
  FloatAmbiguitySet exact = amb;
  exact.values << 2.0, -5.0;
  exact.cov = MatX::Identity(2, 2) * 1e-8;
  const FixResult fx = ils_fix(exact, 3.0);
  CHECK(fx.accepted);
  CHECK(fx.best(0) == doctest::Approx(2.0));
  CHECK(fx.best(1) == doctest::Approx(-5.0));
  CHECK(fx.ratio > 100.0);
}

TEST_CASE("ils_fix matches exhaustive search on random problems") {
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 6;
    FloatAmbiguitySet amb;
    amb.values = VecX(n);
    for (int i = 0; i < n; ++i) amb.values(i) = test::randu(-20, 20);
    amb.cov = random_spd(n);
    for (int i = 0; i < n; ++i) {
      amb.sat_other.push_back(i + 2);
      amb.sat_ref.push_back(1);
      amb.bands.push_back(0);
    }
    const FixResult fix = ils_fix(amb, 2.0);
    if (!fix.diagnostic.empty()) continue;

    VecX best, second;
    double q1, q2;
    test::brute_force_ils(amb.values, amb.cov, 4, &best, &second, &q1, &q2);
    CHECK((fix.best - best).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(fix.q1 == doctest::Approx(q1).epsilon(1e-6));
    CHECK(fix.q2 == doctest::Approx(q2).epsilon(1e-6));
    ++checked;
  }
  CHECK(checked > 250);
}

TEST_CASE("ratio test monotonicity in the threshold") {
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 4;
    FloatAmbiguitySet amb;
    amb.values = VecX(n);
    for (int i = 0; i < n; ++i) amb.values(i) = test::randu(-5, 5);
    amb.cov = random_spd(n);
    for (int i = 0; i < n; ++i) {
      amb.sat_other.push_back(i + 2);
      amb.sat_ref.push_back(1);
      amb.bands.push_back(0);
    }
    const FixResult lo = ils_fix(amb, 1.5);
    const FixResult hi = ils_fix(amb, 4.0);
    if (hi.accepted) CHECK(lo.accepted);  // raising never converts reject->accept
  }
}

TEST_CASE("ill-conditioned covariance is rejected with a diagnostic") {
  FloatAmbiguitySet amb;
  amb.values = VecX(2);
  amb.values << 0.4, 0.6;
  amb.cov = MatX(2, 2);
  amb.cov << 1.0, 1.0 - 1e-14, 1.0 - 1e-14, 1.0;
  amb.sat_other = {2, 3};
  amb.sat_ref = {1, 1};
  amb.bands = {0, 0};
  const FixResult fix = ils_fix(amb, 3.0);
  CHECK_FALSE(fix.accepted);
  CHECK_FALSE(fix.diagnostic.empty());
}

TEST_CASE("search in decorrelated space equals brute force in the original space") {
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 4;
    const MatX q = random_spd(n);
    VecX a(n);
    for (int i = 0; i < n; ++i) a(i) = test::randu(-8, 8);
    MatX z, z_inv;
    ils_reduce(q, &z, &z_inv);
    VecX zb, zs;
    double q1, q2;
    ils_search(z.transpose() * a, z.transpose() * q * z, &zb, &zs, &q1, &q2);
    const VecX back = z_inv.transpose() * zb;

    VecX best, second;
    double bq1, bq2;
    test::brute_force_ils(a, q, 4, &best, &second, &bq1, &bq2);
    CHECK((back - best).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(q1 == doctest::Approx(bq1).epsilon(1e-6));
  }
}
