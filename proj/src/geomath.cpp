#include "giocal/geomath.hpp"

#include <cmath>

namespace giocal {

Mat3 skew(const Vec3& a) {
  Mat3 m;
  m << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
      -a.y(), a.x(), 0.0;
  return m;
}

Quat quat_exp(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * angle;
  const double s = std::sin(half) / angle;
  return Quat(std::cos(half), s * phi.x(), s * phi.y(), s * phi.z());
}

Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v(q.x(), q.y(), q.z());
  const double vn = v.norm();
  if (vn < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(vn, q.w());
  return (angle / vn) * v;
}

Mat3 quat_to_rot(const Quat& q_in) {
  Quat q = q_in;
  ensure_unit(q);
  return q.toRotationMatrix();
}

Quat rot_to_quat(const Mat3& r) {
  Quat q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Vec3 quat_boxminus(const Quat& q1, const Quat& q2) {
  return quat_log(q2.conjugate() * q1);
}

Quat quat_boxplus(const Quat& q, const Vec3& phi) {
  Quat out = q * quat_exp(phi);
  out.normalize();
  return out;
}

bool ensure_unit(Quat& q) {
  const double n = q.norm();
  q.coeffs() /= n;
  return std::abs(n - 1.0) > 1e-6;
}

Mat3 so3_right_jacobian(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 w = skew(phi);
  if (angle < 1e-7) {
    return Mat3::Identity() - 0.5 * w + (1.0 / 6.0) * w * w;
  }
  const double a2 = angle * angle;
  return Mat3::Identity() - ((1.0 - std::cos(angle)) / a2) * w +
         ((angle - std::sin(angle)) / (a2 * angle)) * w * w;
}

Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 w = skew(phi);
  if (angle < 1e-7) {
    return Mat3::Identity() + 0.5 * w + (1.0 / 12.0) * w * w;
  }
  const double a2 = angle * angle;
  const double c = 1.0 / a2 - (1.0 + std::cos(angle)) / (2.0 * angle * std::sin(angle));
  return Mat3::Identity() + 0.5 * w + c * w * w;
}

Mat3 rpy_to_rot(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
          Eigen::AngleAxisd(pitch, Vec3::UnitX()) *
          Eigen::AngleAxisd(roll, Vec3::UnitY()))
      .toRotationMatrix();
}

Vec3 rot_to_rpy(const Mat3& r) {
  const double pitch = std::asin(std::clamp(r(2, 1), -1.0, 1.0));
  const double yaw = std::atan2(-r(0, 1), r(1, 1));
  const double roll = std::atan2(-r(2, 0), r(2, 2));
  return Vec3(roll, pitch, yaw);
}

Vec3 geodetic_to_ecef(const GeodeticOrigin& g) {
  const double e2 = kWgs84F * (2.0 - kWgs84F);
  const double sl = std::sin(g.lat);
  const double cl = std::cos(g.lat);
  const double n = kWgs84A / std::sqrt(1.0 - e2 * sl * sl);
  return Vec3((n + g.height) * cl * std::cos(g.lon),
              (n + g.height) * cl * std::sin(g.lon),
              (n * (1.0 - e2) + g.height) * sl);
}

GeodeticOrigin ecef_to_geodetic(const Vec3& p) {
  const double e2 = kWgs84F * (2.0 - kWgs84F);
  const double rho = std::hypot(p.x(), p.y());
  GeodeticOrigin g;
  g.lon = std::atan2(p.y(), p.x());
  g.lat = std::atan2(p.z(), rho * (1.0 - e2));
  for (int i = 0; i < 8; ++i) {
    const double sl = std::sin(g.lat);
    const double n = kWgs84A / std::sqrt(1.0 - e2 * sl * sl);
    g.height = rho / std::cos(g.lat) - n;
    g.lat = std::atan2(p.z(), rho * (1.0 - e2 * n / (n + g.height)));
  }
  const double sl = std::sin(g.lat);
  const double n = kWgs84A / std::sqrt(1.0 - e2 * sl * sl);
  g.height = rho / std::cos(g.lat) - n;
  return g;
}

Mat3 ecef_enu_rotation(const GeodeticOrigin& origin) {
  const double sl = std::sin(origin.lat);
  const double cl = std::cos(origin.lat);
  const double so = std::sin(origin.lon);
  const double co = std::cos(origin.lon);
  Mat3 r;
  // columns: east, north, up expressed in ECEF
  r << -so, -sl * co, cl * co,
        co, -sl * so, cl * so,
       0.0,       cl,      sl;
  return r;
}

Vec3 ecef_to_enu(const Vec3& p_ecef, const GeodeticOrigin& origin) {
  return ecef_enu_rotation(origin).transpose() * (p_ecef - geodetic_to_ecef(origin));
}

Vec3 enu_to_ecef(const Vec3& p_enu, const GeodeticOrigin& origin) {
  return geodetic_to_ecef(origin) + ecef_enu_rotation(origin) * p_enu;
}

}  // namespace giocal
