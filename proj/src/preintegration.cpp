#include "giocal/preintegration.hpp"

#include <cmath>
#include <stdexcept>

namespace giocal {

ImuPreintegrated imu_preintegrate(std::span<const ImuSample> samples, const Vec3& ba,
                                  const Vec3& bg, const ImuNoise& noise) {
  if (samples.size() < 2) throw std::invalid_argument("imu batch needs >= 2 samples");

  ImuPreintegrated out;
  out.t0 = samples.front().t;
  out.t1 = samples.back().t;
  out.ba_lin = ba;
  out.bg_lin = bg;

  Eigen::Matrix<double, 15, 15> a_total = Eigen::Matrix<double, 15, 15>::Identity();

  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const ImuSample& s0 = samples[i];
    const ImuSample& s1 = samples[i + 1];
    const double dt = s1.t - s0.t;
    if (dt <= 0.0) throw std::invalid_argument("imu timestamps not strictly increasing");
    if (dt > 0.1) throw std::invalid_argument("imu gap above 0.1 s");

    const Vec3 w_mid = 0.5 * (s0.gyro + s1.gyro) - bg;
    const Vec3 a0 = s0.accel - ba;
    const Vec3 a1 = s1.accel - ba;

    const Mat3 r0 = quat_to_rot(out.delta_q);
    const Quat q1 = quat_boxplus(out.delta_q, w_mid * dt);
    const Mat3 r1 = quat_to_rot(q1);
    const Vec3 acc_w = 0.5 * (r0 * a0 + r1 * a1);

    const Mat3 exp_neg = quat_to_rot(quat_exp(-w_mid * dt));
    const Mat3 jr = so3_right_jacobian(w_mid * dt);
    const Mat3 r_bar = 0.5 * (r0 + r1);

    // exact Jacobian of this discrete step, state order (dp,dv,dth,dba,dbg)
    const Mat3 dacc_dth = 0.5 * (-r0 * skew(a0) - r1 * skew(a1) * exp_neg);
    const Mat3 dacc_dba = -r_bar;
    const Mat3 dacc_dbg = 0.5 * r1 * skew(a1) * jr * dt;

    Eigen::Matrix<double, 15, 15> a = Eigen::Matrix<double, 15, 15>::Identity();
    a.block<3, 3>(0, 3) = Mat3::Identity() * dt;
    a.block<3, 3>(0, 6) = 0.5 * dacc_dth * dt * dt;
    a.block<3, 3>(0, 9) = 0.5 * dacc_dba * dt * dt;
    a.block<3, 3>(0, 12) = 0.5 * dacc_dbg * dt * dt;
    a.block<3, 3>(3, 6) = dacc_dth * dt;
    a.block<3, 3>(3, 9) = dacc_dba * dt;
    a.block<3, 3>(3, 12) = dacc_dbg * dt;
    a.block<3, 3>(6, 6) = exp_neg;
    a.block<3, 3>(6, 12) = -jr * dt;

    Eigen::Matrix<double, 15, 12> b = Eigen::Matrix<double, 15, 12>::Zero();
    b.block<3, 3>(0, 0) = 0.5 * r_bar * dt * dt;
    b.block<3, 3>(3, 0) = r_bar * dt;
    b.block<3, 3>(6, 3) = jr * dt;
    b.block<3, 3>(9, 6) = Mat3::Identity();
    b.block<3, 3>(12, 9) = Mat3::Identity();

    Eigen::Matrix<double, 12, 12> q_d = Eigen::Matrix<double, 12, 12>::Zero();
    const double sa2 = noise.accel_density * noise.accel_density / dt;
    const double sg2 = noise.gyro_density * noise.gyro_density / dt;
    q_d.block<3, 3>(0, 0) = Mat3::Identity() * sa2;
    q_d.block<3, 3>(3, 3) = Mat3::Identity() * sg2;
    q_d.block<3, 3>(6, 6) = Mat3::Identity() * noise.ba_rw * noise.ba_rw * dt;
    q_d.block<3, 3>(9, 9) = Mat3::Identity() * noise.bg_rw * noise.bg_rw * dt;

    out.cov = a * out.cov * a.transpose() + b * q_d * b.transpose();
    a_total = a * a_total;

    out.delta_p += out.delta_v * dt + 0.5 * acc_w * dt * dt;
    out.delta_v += acc_w * dt;
    out.delta_q = q1;
  }

  out.dt = out.t1 - out.t0;
  out.dp_dba = a_total.block<3, 3>(0, 9);
  out.dp_dbg = a_total.block<3, 3>(0, 12);
  out.dv_dba = a_total.block<3, 3>(3, 9);
  out.dv_dbg = a_total.block<3, 3>(3, 12);
  out.dq_dbg = a_total.block<3, 3>(6, 12);
  return out;
}

void odo_project(double v, double omega, Vec3* v_m, Vec3* omega_m) {
  if (v_m) *v_m = Vec3(0.0, v, 0.0);
  if (omega_m) *omega_m = Vec3(0.0, 0.0, omega);
}

void odo_body_rates(const Vec3& v_m, const Vec3& omega_m, const Mat3& r_bm,
                    const Vec3& p_bm, const Vec3& omega_b_ib, Vec3* v_b,
                    Vec3* omega_b) {
  if (v_b) *v_b = r_bm * v_m - omega_b_ib.cross(p_bm);
  if (omega_b) *omega_b = r_bm * omega_m;
}

void odo_error_model(const Mat3& r_bk_bt, const Mat3& r_bm, const Vec3& p_bm,
                     double s_v, double s_omega, double v_meas, double omega_meas,
                     const Vec3& gyro_corrected,
                     Eigen::Matrix<double, 8, 8>* f,
                     Eigen::Matrix<double, 8, 4>* g) {
  const Vec3 e2 = r_bm.col(1);
  const Vec3 e3 = r_bm.col(2);
  const Vec3 v_b = e2 * (1.0 + s_v) * v_meas - gyro_corrected.cross(p_bm);
  const Vec3 w_odo = e3 * (1.0 + s_omega) * omega_meas;
  if (f) {
    f->setZero();
    f->block<3, 3>(0, 3) = -r_bk_bt * skew(v_b);
    f->block<3, 1>(0, 6) = r_bk_bt * e2 * v_meas;
    f->block<3, 3>(3, 3) = -skew(w_odo);
    f->block<3, 1>(3, 7) = e3 * omega_meas;
  }
  if (g) {
    g->setZero();
    g->block<3, 1>(0, 0) = -r_bk_bt * e2 * (1.0 + s_v);
    g->block<3, 1>(3, 1) = -e3 * (1.0 + s_omega);
    (*g)(6, 2) = 1.0;
    (*g)(7, 3) = 1.0;
  }
}

namespace {

// Linear interpolation of the gyro stream at time t.
Vec3 gyro_at(std::span<const ImuSample> gyro, double t) {
  if (gyro.empty()) throw std::invalid_argument("empty gyro stream");
  if (t <= gyro.front().t) return gyro.front().gyro;
  if (t >= gyro.back().t) return gyro.back().gyro;
  size_t lo = 0, hi = gyro.size() - 1;
  while (hi - lo > 1) {
    const size_t mid = (lo + hi) / 2;
    if (gyro[mid].t <= t) lo = mid; else hi = mid;
  }
  const double span = gyro[hi].t - gyro[lo].t;
  if (span > 0.1) throw std::invalid_argument("gyro gap above 0.1 s inside interval");
  const double a = span > 0.0 ? (t - gyro[lo].t) / span : 0.0;
  return (1.0 - a) * gyro[lo].gyro + a * gyro[hi].gyro;
}

}  // namespace

Vec3 OdoPreintegrated::delta_p_corrected(double s_v, double s_omega, const Vec3& p_bm,
                                         const Quat& q_bm) const {
  Eigen::Matrix<double, 8, 1> d;
  d(0) = s_v - s_v_lin;
  d(1) = s_omega - s_omega_lin;
  d.segment<3>(2) = p_bm - p_bm_lin;
  d.segment<3>(5) = quat_boxminus(q_bm, q_bm_lin);
  return delta_p + jac_calib.topRows<3>() * d;
}

Quat OdoPreintegrated::delta_q_corrected(double s_v, double s_omega,
                                         const Quat& q_bm) const {
  Eigen::Matrix<double, 8, 1> d;
  d(0) = s_v - s_v_lin;
  d(1) = s_omega - s_omega_lin;
  d.segment<3>(2).setZero();
  d.segment<3>(5) = quat_boxminus(q_bm, q_bm_lin);
  return quat_boxplus(delta_q, jac_calib.bottomRows<3>() * d);
}

OdoPreintegrated odo_preintegrate(std::span<const OdoSample> samples,
                                  std::span<const ImuSample> gyro,
                                  const OdometerIntrinsics& intr, const Vec3& p_bm,
                                  const Quat& q_bm, const Vec3& bg,
                                  const OdoNoise& noise) {
  if (samples.size() < 2) throw std::invalid_argument("odometer batch needs >= 2 samples");
  if (gyro.empty() || gyro.front().t > samples.front().t + 1e-9 ||
      gyro.back().t < samples.back().t - 1e-9) {
    throw std::invalid_argument("gyro stream does not cover the odometer interval");
  }

  OdoPreintegrated out;
  out.t0 = samples.front().t;
  out.t1 = samples.back().t;
  out.s_v_lin = intr.s_v;
  out.s_omega_lin = intr.s_omega;
  out.p_bm_lin = p_bm;
  out.q_bm_lin = q_bm;
  out.bg_lin = bg;

  const Mat3 r_bm = quat_to_rot(q_bm);
  const Vec3 e2 = r_bm.col(1);
  const Vec3 e3 = r_bm.col(2);

  // d(omega_odo)/d(param), param columns (s_v, s_omega, p_bm, theta_bm)
  Eigen::Matrix<double, 3, 8> dw_dparam = Eigen::Matrix<double, 3, 8>::Zero();

  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const OdoSample& s0 = samples[i];
    const OdoSample& s1 = samples[i + 1];
    const double dt = s1.t - s0.t;
    if (dt <= 0.0) throw std::invalid_argument("odometer timestamps not strictly increasing");
    if (dt > 0.1) throw std::invalid_argument("odometer gap above 0.1 s");

    const double v_bar = 0.5 * (s0.v + s1.v);
    const double w_bar = 0.5 * (s0.omega + s1.omega);
    const Vec3 w_imu = gyro_at(gyro, 0.5 * (s0.t + s1.t)) - bg;

    const Vec3 w_odo = e3 * (1.0 + intr.s_omega) * w_bar;
    const Vec3 v_b = e2 * (1.0 + intr.s_v) * v_bar - w_imu.cross(p_bm);

    const Mat3 r_t = quat_to_rot(out.delta_q);
    const Quat q_mid = quat_boxplus(out.delta_q, w_odo * (0.5 * dt));
    const Mat3 r_mid = quat_to_rot(q_mid);

    // parameter sensitivities of the held rates
    dw_dparam.setZero();
    dw_dparam.col(1) = e3 * w_bar;
    dw_dparam.block<3, 3>(0, 5) = -(1.0 + intr.s_omega) * w_bar * r_bm * skew(Vec3::UnitZ());
    Eigen::Matrix<double, 3, 8> dv_dparam = Eigen::Matrix<double, 3, 8>::Zero();
    dv_dparam.col(0) = e2 * v_bar;
    dv_dparam.block<3, 3>(0, 2) = -skew(w_imu);
    dv_dparam.block<3, 3>(0, 5) = -(1.0 + intr.s_v) * v_bar * r_bm * skew(Vec3::UnitY());

    // exact derivative of the discrete step through the midpoint rotation
    const Mat3 exp_half = quat_to_rot(quat_exp(-w_odo * (0.5 * dt)));
    const Mat3 jr_half = so3_right_jacobian(w_odo * (0.5 * dt)) * (0.5 * dt);
    const Eigen::Matrix<double, 3, 8> jth_mid =
        exp_half * out.jac_calib.bottomRows<3>() + jr_half * dw_dparam;
    out.jac_calib.topRows<3>() +=
        (-r_mid * skew(v_b) * jth_mid + r_mid * dv_dparam) * dt;
    const Mat3 exp_full = quat_to_rot(quat_exp(-w_odo * dt));
    const Mat3 jr_full = so3_right_jacobian(w_odo * dt) * dt;
    out.jac_calib.bottomRows<3>() =
        exp_full * out.jac_calib.bottomRows<3>() + jr_full * dw_dparam;

    // covariance: Euler discretization of the continuous model
    Eigen::Matrix<double, 8, 8> f;
    Eigen::Matrix<double, 8, 4> g;
    odo_error_model(r_t, r_bm, p_bm, intr.s_v, intr.s_omega, v_bar, w_bar, w_imu, &f, &g);
    const Eigen::Matrix<double, 8, 8> a =
        Eigen::Matrix<double, 8, 8>::Identity() + f * dt;
    Eigen::Matrix<double, 4, 4> q_c = Eigen::Matrix<double, 4, 4>::Zero();
    q_c(0, 0) = noise.sigma_v * noise.sigma_v * dt;
    q_c(1, 1) = noise.sigma_omega * noise.sigma_omega * dt;
    q_c(2, 2) = intr.rw_s_v * intr.rw_s_v;
    q_c(3, 3) = intr.rw_s_omega * intr.rw_s_omega;
    out.cov = a * out.cov * a.transpose() + g * q_c * g.transpose() * dt;

    out.delta_p += r_mid * v_b * dt;
    out.delta_q = quat_boxplus(out.delta_q, w_odo * dt);
  }

  out.dt = out.t1 - out.t0;
  return out;
}

MotionType detect_motion(std::span<const ImuSample> imu, std::span<const OdoSample> odo,
                         const MotionDetectionConfig& config) {
  if (imu.size() < 2 || odo.empty()) return MotionType::None;
  if (imu.back().t - imu.front().t < config.window - 1e-6) return MotionType::None;

  Vec3 mean_gyro = Vec3::Zero();
  for (const auto& s : imu) mean_gyro += s.gyro;
  mean_gyro /= static_cast<double>(imu.size());
  const double gyro_dps = mean_gyro.norm() * kRadToDeg;

  double mean_v = 0.0;
  for (const auto& s : odo) mean_v += s.v;
  mean_v /= static_cast<double>(odo.size());

  if (gyro_dps < config.zupt_gate_dps) return MotionType::Zupt;
  if (gyro_dps < config.nhc_gate_dps && mean_v > config.nhc_min_speed)
    return MotionType::Nhc;
  return MotionType::None;
}

}  // namespace giocal
