#include <doctest.h>

#include "giocal/observability.hpp"
#include "oracles.hpp"

using namespace giocal;

namespace {

std::vector<Mat6> circle_blocks(const Mat3& r_mb, const Vec3& p_bm, int count) {
  // planar circling: omega along the mount z axis, forward speed varying
  std::vector<Mat6> blocks;
  const Mat3 r_bm = r_mb.transpose();
  for (int i = 0; i < count; ++i) {
    VirtualBodyRates r;
    r.t = i;
    const double w = 0.1;
    const double v = 0.25 + 0.05 * std::sin(0.2 * i);
    r.omega_b = r_bm * Vec3(0, 0, w);
    r.v_b = r_bm * Vec3(0, v, 0) - r.omega_b.cross(p_bm);
    blocks.push_back(obs_block(r, r_mb, p_bm));
  }
  return blocks;
}

}  // namespace

TEST_CASE("block structure at reference inputs") {
  VirtualBodyRates r;
  r.omega_b = Vec3(0, 0, 0.5);
  const Mat6 m = obs_block(r, Mat3::Identity(), Vec3::Zero());
  // third column of the top-left block vanishes for rotation about z
  CHECK(m.block<3, 1>(0, 2).norm() == 0.0);

  VirtualBodyRates stat;
  const Mat6 m0 = obs_block(stat, Mat3::Identity(), Vec3(0.2, 0.1, 0.3));
  CHECK(m0.block<3, 3>(0, 0).isZero(0.0));
  CHECK(m0.block<3, 3>(3, 3).isZero(0.0));
}

TEST_CASE("block entries match the independent expansion") {
  for (int i = 0; i < 50; ++i) {
    VirtualBodyRates r;
    r.v_b = test::rand_vec3(2.0);
    r.omega_b = test::rand_vec3(1.0);
    const Mat3 r_mb = quat_to_rot(test::rand_quat());
    const Vec3 p_bm = test::rand_vec3(0.5);
    const Mat6 m = obs_block(r, r_mb, p_bm);
    // independent evaluation from the residual definition, column by column
    const Vec3 u = r_mb * (r.v_b + r.omega_b.cross(p_bm));
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e(c) = 1.0;
      CHECK((m.block<3, 1>(0, c) - r_mb * r.omega_b.cross(e)).norm() < 1e-12);
      CHECK((m.block<3, 1>(0, 3 + c) - u.cross(Vec3(e)) * -1.0).norm() < 1e-12);
      CHECK((m.block<3, 1>(3, 3 + c) - (r_mb * r.omega_b).cross(e) * -1.0).norm() <
            1e-12);
      CHECK(m.block<3, 1>(3, c).norm() == 0.0);
    }
  }
}

TEST_CASE("planar circling: rank 5 with the null space on the z translation") {
  const Mat3 r_mb = rpy_to_rot(2.0 * kDegToRad, -1.0 * kDegToRad, 3.0 * kDegToRad)
                        .transpose();
  const Vec3 p_bm(0.2, -0.3, 0.1);
  const auto blocks = circle_blocks(r_mb, p_bm, 40);
  const ObservabilityReport rep = stack_and_rank(blocks);
  CHECK(rep.rank == 5);
  REQUIRE(rep.null_basis.cols() == 1);
  Eigen::Matrix<double, 6, 1> axis = Eigen::Matrix<double, 6, 1>::Zero();
  axis(2) = 1.0;
  CHECK(std::abs(rep.null_basis.col(0).dot(axis)) > 0.999);
  CHECK_FALSE(rep.identifiable[2]);
  for (int k : {0, 1, 3, 4, 5}) CHECK(rep.identifiable[k]);
  // sigma_6/sigma_1 far below tolerance for planar motion
  CHECK(rep.singular_values(5) / rep.singular_values(0) < 1e-10);
}

TEST_CASE("general 3D rotation restores full rank") {
  std::vector<Mat6> blocks;
  const Mat3 r_mb = quat_to_rot(test::rand_quat());
  const Vec3 p_bm(0.2, -0.3, 0.1);
  for (int i = 0; i < 30; ++i) {
    VirtualBodyRates r;
    r.t = i;
    r.omega_b = Vec3(std::sin(0.3 * i), std::cos(0.5 * i), 0.4 * std::sin(0.2 * i + 1));
    r.v_b = Vec3(0.1 * i % 3, 1.0, 0.2 * std::cos(0.4 * i));
    blocks.push_back(obs_block(r, r_mb, p_bm));
  }
  const ObservabilityReport rep = stack_and_rank(blocks);
  CHECK(rep.rank == 6);
  for (int k = 0; k < 6; ++k) CHECK(rep.identifiable[k]);
}

TEST_CASE("single stationary block has rank zero") {
  VirtualBodyRates r;
  const ObservabilityReport rep = stack_and_rank({obs_block(r, Mat3::Identity(),
                                                            Vec3(0.2, 0.1, 0.3))});
  CHECK(rep.rank == 0);
}

TEST_CASE("rank invariances") {
  const Mat3 r_mb = quat_to_rot(test::rand_quat());
  const Vec3 p_bm(0.15, -0.2, 0.25);
  auto blocks = circle_blocks(r_mb, p_bm, 25);
  const int rank0 = stack_and_rank(blocks).rank;

  // duplicate blocks never change the rank
  auto doubled = blocks;
  doubled.insert(doubled.end(), blocks.begin(), blocks.end());
  CHECK(stack_and_rank(doubled).rank == rank0);

  // a fixed rotation applied to every virtual rate keeps the rank
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 rot = quat_to_rot(test::rand_quat());
    std::vector<Mat6> rotated;
    const Mat3 r_bm = r_mb.transpose();
    for (int i = 0; i < 25; ++i) {
      VirtualBodyRates r;
      const double w = 0.1;
      const double v = 0.25 + 0.05 * std::sin(0.2 * i);
      r.omega_b = rot * (r_bm * Vec3(0, 0, w));
      r.v_b = rot * (r_bm * Vec3(0, v, 0) - (r_bm * Vec3(0, 0, w)).cross(p_bm));
      rotated.push_back(obs_block(r, r_mb, p_bm));
    }
    CHECK(stack_and_rank(rotated).rank == rank0);
  }
}

TEST_CASE("empirical crosscheck verdicts") {
  Eigen::Matrix<double, 8, 1> prior;
  prior << 0.5, 0.5, 0.5, 0.0873, 0.0873, 0.0873, 0.02, 0.02;
  std::vector<CalibSeriesPoint> series;
  for (int i = 0; i < 100; ++i) {
    CalibSeriesPoint p;
    p.t = i;
    p.std = prior;
    // x converges at t = 40, z never does
    if (i >= 40) p.std(0) = 0.05;
    series.push_back(p);
  }
  const auto verdicts = empirical_crosscheck(series, prior);
  REQUIRE(verdicts.size() == 8);
  CHECK(verdicts[0].observable);
  CHECK(verdicts[0].convergence_t == doctest::Approx(40.0));
  CHECK_FALSE(verdicts[2].observable);
  CHECK(verdicts[2].convergence_t == -1.0);
}
