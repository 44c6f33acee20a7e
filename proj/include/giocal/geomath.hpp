#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace giocal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Coordinate frames used throughout:
//   World (w): local frame fixed to the origin and orientation of the first
//              IMU pose.
//   Nav (n):   local east-north-up frame sharing the w origin.
//   Ecef (e):  earth-centered earth-fixed.
//   Body (b):  IMU body frame.
//   Mount (m): vehicle-mounted frame, right-forward-up (x right, y forward,
//              z up); the odometer reports forward speed along y_m and
//              bearing rate about z_m.
enum class FrameTag { World, Nav, Ecef, Body, Mount };

// Quaternions are Hamilton, scalar-first in constructors, and denote
// body-to-reference rotations: q^w_b rotates b-frame vectors into w.
// Attitude perturbations are applied on the right: q ⊞ δ = q ⊗ exp(δ).

Mat3 skew(const Vec3& a);

// Rotation-vector exponential/logarithm on the unit quaternion group.
Quat quat_exp(const Vec3& phi);
Vec3 quat_log(const Quat& q);

Mat3 quat_to_rot(const Quat& q);
Quat rot_to_quat(const Mat3& r);

// log(q2^-1 ⊗ q1): the rotation vector taking q2 to q1 (right difference).
Vec3 quat_boxminus(const Quat& q1, const Quat& q2);
Quat quat_boxplus(const Quat& q, const Vec3& phi);

// Renormalizes q in place; returns true when the input norm deviated from
// one by more than 1e-6 (callers may warn).
bool ensure_unit(Quat& q);

// SO(3) right Jacobian and its inverse: Exp(phi + d) ≈ Exp(phi) Exp(Jr d).
Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inv(const Vec3& phi);

// Mount-frame attitude boundary convention (angles in radians):
// R = Rz(yaw) * Rx(pitch) * Ry(roll), i.e. pitch about the right axis,
// roll about the forward axis, yaw about up.
Mat3 rpy_to_rot(double roll, double pitch, double yaw);
// Returns (roll, pitch, yaw); valid for |pitch| < pi/2.
Vec3 rot_to_rpy(const Mat3& r);

constexpr double kDegToRad = 0.017453292519943295;
constexpr double kRadToDeg = 57.29577951308232;
constexpr double kSpeedOfLight = 299792458.0;
constexpr double kGravity = 9.80665;

// WGS-84 ellipsoid.
constexpr double kWgs84A = 6378137.0;
constexpr double kWgs84F = 1.0 / 298.257223563;

struct GeodeticOrigin {
  double lat = 0.0;     // rad
  double lon = 0.0;     // rad
  double height = 0.0;  // m
};

Vec3 geodetic_to_ecef(const GeodeticOrigin& g);
GeodeticOrigin ecef_to_geodetic(const Vec3& p);

// R^e_n: columns are the unit east/north/up directions in ECEF at origin.
Mat3 ecef_enu_rotation(const GeodeticOrigin& origin);

Vec3 ecef_to_enu(const Vec3& p_ecef, const GeodeticOrigin& origin);
Vec3 enu_to_ecef(const Vec3& p_enu, const GeodeticOrigin& origin);

}  // namespace giocal
