#include <doctest.h>

#include "giocal/preintegration.hpp"
#include "oracles.hpp"

using namespace giocal;

namespace {

std::vector<ImuSample> constant_imu(double duration, double hz, const Vec3& accel,
                                    const Vec3& gyro) {
  std::vector<ImuSample> out;
  const double dt = 1.0 / hz;
  for (int i = 0;; ++i) {
    const double t = i * dt;
    if (t > duration + 1e-9) break;
    out.push_back({t, accel, gyro});
  }
  return out;
}

std::vector<OdoSample> constant_odo(double duration, double hz, double v, double w) {
  std::vector<OdoSample> out;
  const double dt = 1.0 / hz;
  for (int i = 0;; ++i) {
    const double t = i * dt;
    if (t > duration + 1e-9) break;
    out.push_back({t, v, w});
  }
  return out;
}

ImuNoise quiet_imu_noise() {
  ImuNoise n;
  n.accel_density = 1e-3;
  n.gyro_density = 1e-4;
  n.ba_rw = 1e-5;
  n.bg_rw = 1e-6;
  return n;
}

}  // namespace

TEST_CASE("imu preintegration of zero motion") {
  const auto samples = constant_imu(1.0, 100.0, Vec3::Zero(), Vec3::Zero());
  const auto pre = imu_preintegrate(samples, Vec3::Zero(), Vec3::Zero(), quiet_imu_noise());
  CHECK(pre.delta_p.norm() < 1e-12);
  CHECK(pre.delta_v.norm() < 1e-12);
  CHECK(quat_boxminus(pre.delta_q, Quat::Identity()).norm() < 1e-12);
  CHECK(pre.dt == doctest::Approx(1.0));
}

TEST_CASE("imu preintegration of a pure yaw rate") {
  const auto samples = constant_imu(1.0, 100.0, Vec3::Zero(), Vec3(0, 0, M_PI / 2));
  const auto pre = imu_preintegrate(samples, Vec3::Zero(), Vec3::Zero(), quiet_imu_noise());
  const Vec3 err = quat_boxminus(pre.delta_q, quat_exp(Vec3(0, 0, M_PI / 2)));
  CHECK(err.norm() < 1e-6);
}

TEST_CASE("imu preintegration input validation") {
  CHECK_THROWS_AS(imu_preintegrate(std::span<const ImuSample>{}, Vec3::Zero(),
                                   Vec3::Zero(), quiet_imu_noise()),
                  std::invalid_argument);
  std::vector<ImuSample> bad = {{0.0, Vec3::Zero(), Vec3::Zero()},
                                {0.0, Vec3::Zero(), Vec3::Zero()}};
  CHECK_THROWS_AS(imu_preintegrate(bad, Vec3::Zero(), Vec3::Zero(), quiet_imu_noise()),
                  std::invalid_argument);
  std::vector<ImuSample> gap = {{0.0, Vec3::Zero(), Vec3::Zero()},
                                {0.5, Vec3::Zero(), Vec3::Zero()}};
  CHECK_THROWS_AS(imu_preintegrate(gap, Vec3::Zero(), Vec3::Zero(), quiet_imu_noise()),
                  std::invalid_argument);
}

TEST_CASE("imu bias Jacobians match finite-difference re-integration") {
  std::vector<ImuSample> samples;
  for (int i = 0; i <= 100; ++i) {
    const double t = i * 0.01;
    samples.push_back({t, Vec3(1.5 * std::sin(3 * t), -0.8, 9.8 + 0.5 * std::cos(2 * t)),
                       Vec3(0.3 * std::cos(t), 0.2, -0.4 * std::sin(2 * t))});
  }
  const Vec3 ba(0.02, -0.01, 0.03);
  const Vec3 bg(0.004, -0.002, 0.006);
  const auto pre = imu_preintegrate(samples, ba, bg, quiet_imu_noise());

  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    Vec3 dba = Vec3::Zero();
    dba(k) = h;
    const auto plus = imu_preintegrate(samples, ba + dba, bg, quiet_imu_noise());
    const auto minus = imu_preintegrate(samples, ba - dba, bg, quiet_imu_noise());
    const Vec3 dp_fd = (plus.delta_p - minus.delta_p) / (2 * h);
    const Vec3 dv_fd = (plus.delta_v - minus.delta_v) / (2 * h);
    CHECK(test::max_rel_error(dp_fd, pre.dp_dba.col(k)) < 1e-4);
    CHECK(test::max_rel_error(dv_fd, pre.dv_dba.col(k)) < 1e-4);

    Vec3 dbg = Vec3::Zero();
    dbg(k) = h;
    const auto plus_g = imu_preintegrate(samples, ba, bg + dbg, quiet_imu_noise());
    const auto minus_g = imu_preintegrate(samples, ba, bg - dbg, quiet_imu_noise());
    CHECK(test::max_rel_error((plus_g.delta_p - minus_g.delta_p) / (2 * h),
                              pre.dp_dbg.col(k)) < 1e-4);
    CHECK(test::max_rel_error((plus_g.delta_v - minus_g.delta_v) / (2 * h),
                              pre.dv_dbg.col(k)) < 1e-4);
    const Vec3 dq_fd = quat_boxminus(plus_g.delta_q, minus_g.delta_q) / (2 * h);
    CHECK(test::max_rel_error(dq_fd, pre.dq_dbg.col(k)) < 1e-4);
  }
}

TEST_CASE("imu first-order bias correction tracks re-integration") {
  std::vector<ImuSample> samples;
  for (int i = 0; i <= 100; ++i) {
    const double t = i * 0.01;
    samples.push_back({t, Vec3(0.5 * std::sin(t), 0.2, 9.81), Vec3(0.1, -0.05, 0.2)});
  }
  const auto pre = imu_preintegrate(samples, Vec3::Zero(), Vec3::Zero(), quiet_imu_noise());
  const Vec3 dbg(1e-3, -5e-4, 8e-4);
  const auto re = imu_preintegrate(samples, Vec3::Zero(), dbg, quiet_imu_noise());
  CHECK((pre.delta_p_corrected(Vec3::Zero(), dbg) - re.delta_p).norm() < 2e-5);
  CHECK(quat_boxminus(pre.delta_q_corrected(dbg), re.delta_q).norm() < 2e-5);
}

TEST_CASE("imu covariance is symmetric PSD and grows") {
  std::vector<ImuSample> samples;
  for (int i = 0; i <= 200; ++i) {
    const double t = i * 0.01;
    samples.push_back({t, Vec3(0.3, 0.1, 9.8), Vec3(0.05, 0.02, 0.4)});
  }
  ImuNoise n;
  const auto pre_short = imu_preintegrate(
      std::span<const ImuSample>(samples.data(), 101), Vec3::Zero(), Vec3::Zero(), n);
  const auto pre_long = imu_preintegrate(samples, Vec3::Zero(), Vec3::Zero(), n);
  CHECK((pre_long.cov - pre_long.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 15, 15>> es(pre_long.cov);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
  CHECK(pre_long.cov.trace() > pre_short.cov.trace());
}

TEST_CASE("odometer projection") {
  Vec3 v_m, w_m;
  odo_project(2.0, 0.5, &v_m, &w_m);
  CHECK((v_m - Vec3(0, 2, 0)).norm() == 0.0);
  CHECK((w_m - Vec3(0, 0, 0.5)).norm() == 0.0);
  odo_project(0.0, 0.0, &v_m, &w_m);
  CHECK(v_m.norm() == 0.0);
  CHECK(w_m.norm() == 0.0);
  // the projection matrix has rank 2 with columns e2 and e6 of R^6
  Eigen::Matrix<double, 6, 2> p = Eigen::Matrix<double, 6, 2>::Zero();
  odo_project(1.0, 0.0, &v_m, &w_m);
  p.col(0) << v_m, w_m;
  odo_project(0.0, 1.0, &v_m, &w_m);
  p.col(1) << v_m, w_m;
  CHECK(p(1, 0) == 1.0);
  CHECK(p(5, 1) == 1.0);
  CHECK(Eigen::FullPivLU<MatX>(p).rank() == 2);
}

TEST_CASE("odometer body-rate transfer") {
  Vec3 v_b, w_b;
  odo_body_rates(Vec3(0, 1, 0), Vec3::Zero(), Mat3::Identity(), Vec3(0.5, 0, 0),
                 Vec3(0, 0, 1), &v_b, &w_b);
  CHECK((v_b - Vec3(0, 0.5, 0)).norm() < 1e-15);  // (0,1,0) - (0,0,1)x(0.5,0,0)
  odo_body_rates(Vec3(0, 1, 0), Vec3(0, 0, 0.3), Mat3::Identity(), Vec3::Zero(),
                 Vec3(0.2, 0.1, -0.3), &v_b, &w_b);
  CHECK((v_b - Vec3(0, 1, 0)).norm() < 1e-15);
  CHECK((w_b - Vec3(0, 0, 0.3)).norm() < 1e-15);
  for (int i = 0; i < 50; ++i) {
    const Mat3 r = quat_to_rot(test::rand_quat());
    const Vec3 v_m = test::rand_vec3(2.0);
    const Vec3 w_m = test::rand_vec3(1.0);
    const Vec3 p = test::rand_vec3(0.5);
    const Vec3 w_imu = test::rand_vec3(1.0);
    odo_body_rates(v_m, w_m, r, p, w_imu, &v_b, &w_b);
    // independent expansion, component by component
    Vec3 expect_v;
    for (int c = 0; c < 3; ++c) {
      expect_v(c) = r(c, 0) * v_m(0) + r(c, 1) * v_m(1) + r(c, 2) * v_m(2);
    }
    expect_v -= Vec3(w_imu.y() * p.z() - w_imu.z() * p.y(),
                     w_imu.z() * p.x() - w_imu.x() * p.z(),
                     w_imu.x() * p.y() - w_imu.y() * p.x());
    CHECK((v_b - expect_v).norm() < 1e-12);
    CHECK((w_b - r * w_m).norm() < 1e-12);
  }
}

TEST_CASE("odometer preintegration of straight and turning motion") {
  OdometerIntrinsics intr;
  OdoNoise noise;
  const auto gyro = constant_imu(1.0, 100.0, Vec3::Zero(), Vec3::Zero());
  {
    const auto odo = constant_odo(1.0, 25.0, 1.0, 0.0);
    const auto pre = odo_preintegrate(odo, gyro, intr, Vec3::Zero(), Quat::Identity(),
                                      Vec3::Zero(), noise);
    CHECK((pre.delta_p - Vec3(0, 1, 0)).norm() < 1e-9);
    CHECK(quat_boxminus(pre.delta_q, Quat::Identity()).norm() < 1e-9);
  }
  {
    const auto odo = constant_odo(1.0, 25.0, 0.0, M_PI / 2);
    const auto pre = odo_preintegrate(odo, gyro, intr, Vec3::Zero(), Quat::Identity(),
                                      Vec3::Zero(), noise);
    CHECK(pre.delta_p.norm() < 1e-9);
    CHECK(quat_boxminus(pre.delta_q, quat_exp(Vec3(0, 0, M_PI / 2))).norm() < 1e-9);
  }
}

TEST_CASE("odometer error model F/G matches finite differences of the exact rates") {
  for (int trial = 0; trial < 100; ++trial) {
    const Mat3 r = quat_to_rot(test::rand_quat());
    const Mat3 r_bm = quat_to_rot(test::rand_quat());
    const Vec3 p_bm = test::rand_vec3(0.5);
    const double sv = test::randu(-0.05, 0.05);
    const double sw = test::randu(-0.05, 0.05);
    const double v_meas = test::randu(-2.0, 2.0);
    const double w_meas = test::randu(-1.0, 1.0);
    const Vec3 gyro = test::rand_vec3(1.0);

    Eigen::Matrix<double, 8, 8> f;
    Eigen::Matrix<double, 8, 4> g;
    odo_error_model(r, r_bm, p_bm, sv, sw, v_meas, w_meas, gyro, &f, &g);

    // exact nonlinear error rates as a function of the error state and noise
    auto rates = [&](const Eigen::Matrix<double, 8, 1>& dx,
                     const Eigen::Matrix<double, 4, 1>& eps) {
      const Vec3 dth = dx.segment<3>(3);
      const double dsv = dx(6), dsw = dx(7);
      const Vec3 v_b_nom = r_bm.col(1) * (1.0 + sv) * v_meas - gyro.cross(p_bm);
      const Vec3 v_b_pert =
          r_bm.col(1) * (1.0 + sv + dsv) * (v_meas - eps(0)) - gyro.cross(p_bm);
      const Vec3 w_nom = r_bm.col(2) * (1.0 + sw) * w_meas;
      const Vec3 w_pert = r_bm.col(2) * (1.0 + sw + dsw) * (w_meas - eps(1));
      Eigen::Matrix<double, 8, 1> out;
      out.segment<3>(0) =
          r * (quat_to_rot(quat_exp(dth)) * v_b_pert) - r * v_b_nom;
      out.segment<3>(3) = so3_right_jacobian_inv(dth) *
                          (w_pert - quat_to_rot(quat_exp(-dth)) * w_nom);
      out(6) = eps(2);
      out(7) = eps(3);
      return out;
    };

    const double h = 1e-6;
    Eigen::Matrix<double, 8, 8> f_fd;
    for (int k = 0; k < 8; ++k) {
      Eigen::Matrix<double, 8, 1> dp = Eigen::Matrix<double, 8, 1>::Zero();
      dp(k) = h;
      f_fd.col(k) = (rates(dp, Eigen::Matrix<double, 4, 1>::Zero()) -
                     rates(-dp, Eigen::Matrix<double, 4, 1>::Zero())) /
                    (2 * h);
    }
    Eigen::Matrix<double, 8, 4> g_fd;
    for (int k = 0; k < 4; ++k) {
      Eigen::Matrix<double, 4, 1> ep = Eigen::Matrix<double, 4, 1>::Zero();
      ep(k) = h;
      g_fd.col(k) = (rates(Eigen::Matrix<double, 8, 1>::Zero(), ep) -
                     rates(Eigen::Matrix<double, 8, 1>::Zero(), -ep)) /
                    (2 * h);
    }
    CHECK(test::max_rel_error(f_fd, f) < 1e-4);
    CHECK(test::max_rel_error(g_fd, g) < 1e-4);
  }
}

TEST_CASE("odometer calibration Jacobians track re-integration to first order") {
  std::vector<OdoSample> odo;
  std::vector<ImuSample> gyro;
  for (int i = 0; i <= 25; ++i) {
    const double t = i * 0.04;
    odo.push_back({t, 1.0 + 0.3 * std::sin(2 * t), 0.4 + 0.2 * std::cos(3 * t)});
  }
  for (int i = 0; i <= 100; ++i) {
    const double t = i * 0.01;
    gyro.push_back({t, Vec3::Zero(), Vec3(0.05, -0.02, 0.4 + 0.2 * std::cos(3 * t))});
  }
  OdometerIntrinsics intr;
  intr.s_v = 0.01;
  intr.s_omega = -0.02;
  const Vec3 p_bm(0.2, -0.3, 0.1);
  const Quat q_bm = rot_to_quat(rpy_to_rot(0.03, -0.02, 0.05));
  OdoNoise noise;
  const auto pre = odo_preintegrate(odo, gyro, intr, p_bm, q_bm, Vec3::Zero(), noise);

  // s_v perturbation: corrected delta vs full re-integration, O(d^2)
  {
    const double d = 1e-3;
    OdometerIntrinsics intr2 = intr;
    intr2.s_v += d;
    const auto re = odo_preintegrate(odo, gyro, intr2, p_bm, q_bm, Vec3::Zero(), noise);
    const Vec3 corrected = pre.delta_p_corrected(intr2.s_v, intr.s_omega, p_bm, q_bm);
    CHECK((corrected - re.delta_p).norm() < 1e-5);
  }
  // full finite-difference check of all calibration Jacobian columns
  const double h = 1e-6;
  auto reintegrate = [&](double sv, double sw, const Vec3& p, const Quat& q) {
    OdometerIntrinsics i2 = intr;
    i2.s_v = sv;
    i2.s_omega = sw;
    return odo_preintegrate(odo, gyro, i2, p, q, Vec3::Zero(), noise);
  };
  Eigen::Matrix<double, 6, 8> j_fd;
  for (int k = 0; k < 8; ++k) {
    double sv = intr.s_v, sw = intr.s_omega;
    Vec3 p_p = p_bm, p_m = p_bm;
    Quat q_p = q_bm, q_m = q_bm;
    double sv_m = sv, sw_m = sw;
    if (k == 0) { sv += h; sv_m -= h; }
    if (k == 1) { sw += h; sw_m -= h; }
    if (k >= 2 && k < 5) {
      p_p(k - 2) += h;
      p_m(k - 2) -= h;
    }
    if (k >= 5) {
      Vec3 d = Vec3::Zero();
      d(k - 5) = h;
      q_p = quat_boxplus(q_bm, d);
      q_m = quat_boxplus(q_bm, -d);
    }
    const auto plus = reintegrate(sv, sw, p_p, q_p);
    const auto minus = reintegrate(sv_m, sw_m, p_m, q_m);
    j_fd.block<3, 1>(0, k) = (plus.delta_p - minus.delta_p) / (2 * h);
    j_fd.block<3, 1>(3, k) = quat_boxminus(plus.delta_q, minus.delta_q) / (2 * h);
  }
  CHECK(test::max_rel_error(j_fd, pre.jac_calib) < 1e-4);
}

TEST_CASE("odometer covariance is PSD with monotone trace") {
  std::vector<OdoSample> odo = constant_odo(2.0, 25.0, 1.0, 0.2);
  std::vector<ImuSample> gyro = constant_imu(2.0, 100.0, Vec3::Zero(), Vec3(0, 0, 0.2));
  OdometerIntrinsics intr;
  intr.rw_s_v = 1e-4;
  intr.rw_s_omega = 1e-4;
  OdoNoise noise;
  const auto pre1 = odo_preintegrate(
      std::span<const OdoSample>(odo.data(), 26), gyro, intr, Vec3(0.2, -0.3, 0.1),
      Quat::Identity(), Vec3::Zero(), noise);
  const auto pre2 = odo_preintegrate(odo, gyro, intr, Vec3(0.2, -0.3, 0.1),
                                     Quat::Identity(), Vec3::Zero(), noise);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> es(pre2.cov);
  CHECK(es.eigenvalues().minCoeff() > -1e-15);
  CHECK(pre2.cov.trace() > pre1.cov.trace());
  CHECK((pre2.cov - pre2.cov.transpose()).cwiseAbs().maxCoeff() < 1e-15);

  // with zero inputs the preintegrated measurement is the identity
  const auto zero_odo = constant_odo(1.0, 25.0, 0.0, 0.0);
  const auto pre0 = odo_preintegrate(zero_odo, gyro, OdometerIntrinsics{}, Vec3::Zero(),
                                     Quat::Identity(), Vec3::Zero(), noise);
  CHECK(pre0.delta_p.norm() < 1e-12);
  CHECK(quat_boxminus(pre0.delta_q, Quat::Identity()).norm() < 1e-12);
}

TEST_CASE("odometer preintegration rejects gyro gaps") {
  auto odo = constant_odo(1.0, 25.0, 1.0, 0.1);
  std::vector<ImuSample> gyro;
  for (int i = 0; i <= 100; ++i) {
    const double t = i * 0.01;
    if (t > 0.4 && t < 0.6) continue;  // 0.2 s hole
    gyro.push_back({t, Vec3::Zero(), Vec3(0, 0, 0.1)});
  }
  CHECK_THROWS_AS(odo_preintegrate(odo, gyro, OdometerIntrinsics{}, Vec3(0.1, 0, 0),
                                   Quat::Identity(), Vec3::Zero(), OdoNoise{}),
                  std::invalid_argument);
}

TEST_CASE("motion detection gates") {
  MotionDetectionConfig cfg;
  // stationary: tiny bias-corrected gyro
  {
    auto imu = constant_imu(1.0, 100.0, Vec3(0, 0, 9.8), Vec3(1e-5, -2e-5, 1e-5));
    auto odo = constant_odo(1.0, 25.0, 0.0, 0.0);
    CHECK(detect_motion(imu, odo, cfg) == MotionType::Zupt);
  }
  // straight at 1.5 m/s with small gyro noise
  {
    auto imu = constant_imu(1.0, 100.0, Vec3(0, 0, 9.8), Vec3(1e-3, 0, 2e-3));
    auto odo = constant_odo(1.0, 25.0, 1.5, 0.0);
    CHECK(detect_motion(imu, odo, cfg) == MotionType::Nhc);
  }
  // circling above the NHC gate (0.1 rad/s = 5.7 deg/s)
  {
    auto imu = constant_imu(1.0, 100.0, Vec3(0, 0, 9.8), Vec3(0, 0, 0.1));
    auto odo = constant_odo(1.0, 25.0, 1.5, 0.1);
    CHECK(detect_motion(imu, odo, cfg) == MotionType::None);
  }
  // short window
  {
    auto imu = constant_imu(0.5, 100.0, Vec3(0, 0, 9.8), Vec3::Zero());
    auto odo = constant_odo(0.5, 25.0, 0.0, 0.0);
    CHECK(detect_motion(imu, odo, cfg) == MotionType::None);
  }
}
