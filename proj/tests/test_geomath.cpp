#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "giocal/geomath.hpp"
#include "oracles.hpp"

using namespace giocal;

TEST_CASE("skew matches the component layout") {
  Mat3 m = skew(Vec3(1, 2, 3));
  Mat3 expected;
  expected << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  CHECK((m - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK(skew(Vec3::Zero()).isZero(0.0));
  CHECK((skew(Vec3(1, 0, 0)) * Vec3(0, 1, 0) - Vec3(0, 0, 1)).norm() == 0.0);
}

TEST_CASE("skew antisymmetry and cross product, fuzzed") {
  for (int i = 0; i < 200; ++i) {
    const Vec3 a = test::rand_vec3(5.0);
    const Vec3 b = test::rand_vec3(5.0);
    CHECK((skew(a).transpose() + skew(a)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((skew(a) * b - a.cross(b)).norm() < 1e-14);
  }
}

TEST_CASE("quaternion/rotation round trips") {
  CHECK((quat_to_rot(Quat::Identity()) - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
  const Quat q90 = quat_exp(Vec3(0, 0, M_PI / 2));
  CHECK((quat_to_rot(q90) * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-12);
  for (int i = 0; i < 200; ++i) {
    const Quat q = test::rand_quat();
    const Quat back = rot_to_quat(quat_to_rot(q));
    CHECK(quat_boxminus(q, back).norm() < 1e-10);
    const Mat3 r = quat_to_rot(q);
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("composition consistency between quaternions and matrices") {
  for (int i = 0; i < 100; ++i) {
    const Quat q1 = test::rand_quat();
    const Quat q2 = test::rand_quat();
    const Mat3 lhs = quat_to_rot(q1 * q2);
    const Mat3 rhs = quat_to_rot(q1) * quat_to_rot(q2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("boxminus agrees with the matrix-log oracle") {
  CHECK(quat_boxminus(test::rand_quat(), Quat::Identity()).allFinite());
  for (int i = 0; i < 200; ++i) {
    const Quat a = test::rand_quat();
    const Quat b = test::rand_quat();
    const Vec3 mine = quat_boxminus(a, b);
    const Vec3 oracle = test::boxminus_matrix_log(a, b);
    CHECK((mine - oracle).norm() < 1e-9);
    CHECK(quat_boxminus(a, a).norm() < 1e-14);
  }
}

TEST_CASE("boxplus/boxminus inverse pair") {
  for (int i = 0; i < 100; ++i) {
    const Quat q = test::rand_quat();
    const Vec3 d = test::rand_vec3(0.5);
    CHECK((quat_boxminus(quat_boxplus(q, d), q) - d).norm() < 1e-10);
  }
}

TEST_CASE("non-unit quaternions are renormalized with a flag") {
  Quat q(2.0, 0.0, 0.0, 0.0);
  CHECK(ensure_unit(q));
  CHECK(q.norm() == doctest::Approx(1.0).epsilon(1e-14));
  Quat ok = test::rand_quat();
  CHECK_FALSE(ensure_unit(ok));
}

TEST_CASE("convention: yaw rotates the forward axis as a body-to-reference map") {
  // q^w_b with 30 deg yaw takes the body forward axis (e2) left of north
  const Quat q = quat_exp(Vec3(0, 0, 30.0 * kDegToRad));
  const Vec3 f = quat_to_rot(q) * Vec3(0, 1, 0);
  CHECK(f.x() == doctest::Approx(-std::sin(30.0 * kDegToRad)).epsilon(1e-12));
  CHECK(f.y() == doctest::Approx(std::cos(30.0 * kDegToRad)).epsilon(1e-12));
}

TEST_CASE("right Jacobian consistency: Exp(phi + d) vs Exp(phi) Exp(Jr d)") {
  for (int i = 0; i < 50; ++i) {
    const Vec3 phi = test::rand_vec3(1.5);
    const Vec3 d = test::rand_vec3(1e-5);
    const Quat lhs = quat_exp(phi + d);
    const Quat rhs = quat_boxplus(quat_exp(phi), so3_right_jacobian(phi) * d);
    CHECK(quat_boxminus(lhs, rhs).norm() < 1e-12);
    const Mat3 jr = so3_right_jacobian(phi);
    const Mat3 jri = so3_right_jacobian_inv(phi);
    CHECK((jr * jri - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("ENU rotation at reference points") {
  {
    const Mat3 r = ecef_enu_rotation({0.0, 0.0, 0.0});
    CHECK((r.col(2) - Vec3(1, 0, 0)).norm() < 1e-15);
  }
  {
    const Mat3 r = ecef_enu_rotation({M_PI / 2, 0.0, 0.0});
    CHECK((r.col(2) - Vec3(0, 0, 1)).norm() < 1e-12);
  }
  for (int i = 0; i < 20; ++i) {
    GeodeticOrigin g{test::randu(-1.4, 1.4), test::randu(-M_PI, M_PI), test::randu(0, 1000)};
    const Mat3 r = ecef_enu_rotation(g);
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("geodetic and ENU round trips") {
  for (int i = 0; i < 1000; ++i) {
    GeodeticOrigin g{test::randu(-1.45, 1.45), test::randu(-M_PI, M_PI),
                     test::randu(-100, 9000)};
    const Vec3 e = geodetic_to_ecef(g);
    const GeodeticOrigin back = ecef_to_geodetic(e);
    CHECK(std::abs(back.lat - g.lat) < 1e-9);
    CHECK(std::abs(back.lon - g.lon) < 1e-9);
    CHECK(std::abs(back.height - g.height) < 1e-4);

    GeodeticOrigin origin{test::randu(-1.4, 1.4), test::randu(-M_PI, M_PI), 50.0};
    const Vec3 p_enu = test::rand_vec3(5000.0);
    const Vec3 round = ecef_to_enu(enu_to_ecef(p_enu, origin), origin);
    CHECK((round - p_enu).norm() < 1e-4 * 1e-1);  // 0.1 mm
  }
}

TEST_CASE("mount-frame rpy encode/decode") {
  for (int i = 0; i < 100; ++i) {
    const double roll = test::randu(-0.4, 0.4);
    const double pitch = test::randu(-0.4, 0.4);
    const double yaw = test::randu(-3.0, 3.0);
    const Vec3 back = rot_to_rpy(rpy_to_rot(roll, pitch, yaw));
    CHECK(back.x() == doctest::Approx(roll).epsilon(1e-10));
    CHECK(back.y() == doctest::Approx(pitch).epsilon(1e-10));
    CHECK(back.z() == doctest::Approx(yaw).epsilon(1e-10));
  }
}
