#pragma once

#include <span>
#include <vector>

#include "giocal/geomath.hpp"

namespace giocal {

struct ImuSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();  // specific force, b-frame, m/s^2
  Vec3 gyro = Vec3::Zero();   // omega^b_ib, rad/s
};

struct OdoSample {
  double t = 0.0;
  double v = 0.0;      // forward speed measurement, m/s
  double omega = 0.0;  // bearing rate measurement, rad/s
};

struct OdometerIntrinsics {
  double s_v = 0.0;
  double s_omega = 0.0;
  double rw_s_v = 0.0;      // random-walk density, 1/sqrt(s)
  double rw_s_omega = 0.0;  // 1/sqrt(s)
};

struct ImuNoise {
  double accel_density = 1.7e-3;  // m/s^2/sqrt(Hz)
  double gyro_density = 5.8e-3;   // rad/s/sqrt(Hz)
  double ba_rw = 1e-4;            // m/s^2/sqrt(s)
  double bg_rw = 1e-5;            // rad/s/sqrt(s)
};

struct OdoNoise {
  double sigma_v = 0.01;            // per-sample, m/s
  double sigma_omega = 0.0174533;   // per-sample, rad/s
};

// Preintegrated IMU increment over [t0, t1] at a fixed bias linearization.
// Covariance state order: (dp, dv, dtheta, dba, dbg); attitude errors are
// right perturbations of delta_q.
struct ImuPreintegrated {
  double t0 = 0.0, t1 = 0.0;
  double dt = 0.0;
  Vec3 delta_p = Vec3::Zero();
  Vec3 delta_v = Vec3::Zero();
  Quat delta_q = Quat::Identity();
  Vec3 ba_lin = Vec3::Zero();
  Vec3 bg_lin = Vec3::Zero();
  Eigen::Matrix<double, 15, 15> cov = Eigen::Matrix<double, 15, 15>::Zero();

  Mat3 dp_dba = Mat3::Zero();
  Mat3 dp_dbg = Mat3::Zero();
  Mat3 dv_dba = Mat3::Zero();
  Mat3 dv_dbg = Mat3::Zero();
  Mat3 dq_dbg = Mat3::Zero();

  Vec3 delta_p_corrected(const Vec3& ba, const Vec3& bg) const {
    return delta_p + dp_dba * (ba - ba_lin) + dp_dbg * (bg - bg_lin);
  }
  Vec3 delta_v_corrected(const Vec3& ba, const Vec3& bg) const {
    return delta_v + dv_dba * (ba - ba_lin) + dv_dbg * (bg - bg_lin);
  }
  Quat delta_q_corrected(const Vec3& bg) const {
    return quat_boxplus(delta_q, dq_dbg * (bg - bg_lin));
  }
};

// Midpoint integration of bias-corrected samples. Throws
// std::invalid_argument on fewer than two samples, non-monotonic time, or an
// inter-sample gap above 0.1 s.
ImuPreintegrated imu_preintegrate(std::span<const ImuSample> samples, const Vec3& ba,
                                  const Vec3& bg, const ImuNoise& noise);

// Planar projection of the scalar odometer outputs: forward speed along the
// mount-frame y axis, bearing rate about its z axis.
void odo_project(double v, double omega, Vec3* v_m, Vec3* omega_m);

// Mount-to-body transfer of the projected rates.
void odo_body_rates(const Vec3& v_m, const Vec3& omega_m, const Mat3& r_bm,
                    const Vec3& p_bm, const Vec3& omega_b_ib, Vec3* v_b,
                    Vec3* omega_b);

// Preintegrated odometer increment over [t0, t1], linearized at a fixed
// calibration. The rotation trajectory inside both integrals is driven by
// the scaled odometer bearing rate; the gyro stream feeds only the lever
// term. Covariance order: (dp, dtheta, ds_v, ds_omega); jac_calib columns:
// (s_v, s_omega, p_bm, theta_bm) with theta_bm a right perturbation of q_bm.
struct OdoPreintegrated {
  double t0 = 0.0, t1 = 0.0;
  double dt = 0.0;
  Vec3 delta_p = Vec3::Zero();
  Quat delta_q = Quat::Identity();
  double s_v_lin = 0.0, s_omega_lin = 0.0;
  Vec3 p_bm_lin = Vec3::Zero();
  Quat q_bm_lin = Quat::Identity();
  Vec3 bg_lin = Vec3::Zero();
  Eigen::Matrix<double, 8, 8> cov = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 6, 8> jac_calib = Eigen::Matrix<double, 6, 8>::Zero();

  // First-order corrected measurement at a nearby calibration.
  Vec3 delta_p_corrected(double s_v, double s_omega, const Vec3& p_bm,
                         const Quat& q_bm) const;
  Quat delta_q_corrected(double s_v, double s_omega, const Quat& q_bm) const;
};

// Continuous-time error model of the odometer preintegration at one instant
// (the F/G pair of the covariance propagation). Inputs are the current
// integrated rotation, the calibration, the held measurement values and the
// bias-corrected gyro. Error state (dp, dtheta, ds_v, ds_omega); noise input
// (eps_v, eps_omega, eps_sv, eps_somega).
void odo_error_model(const Mat3& r_bk_bt, const Mat3& r_bm, const Vec3& p_bm,
                     double s_v, double s_omega, double v_meas, double omega_meas,
                     const Vec3& gyro_corrected,
                     Eigen::Matrix<double, 8, 8>* f,
                     Eigen::Matrix<double, 8, 4>* g);

// Throws std::invalid_argument when the gyro stream leaves a gap above
// 0.1 s inside the odometer interval or the batch is too short.
OdoPreintegrated odo_preintegrate(std::span<const OdoSample> samples,
                                  std::span<const ImuSample> gyro,
                                  const OdometerIntrinsics& intr, const Vec3& p_bm,
                                  const Quat& q_bm, const Vec3& bg,
                                  const OdoNoise& noise);

enum class MotionType { None, Zupt, Nhc };

struct MotionDetectionConfig {
  double zupt_gate_dps = 0.05;
  double nhc_gate_dps = 5.0;
  double nhc_min_speed = 1.0;  // m/s
  double window = 1.0;         // s
};

// Pure function of a one-second window; gyro samples are assumed
// bias-corrected by the caller. Windows shorter than the configured span
// yield None.
MotionType detect_motion(std::span<const ImuSample> imu, std::span<const OdoSample> odo,
                         const MotionDetectionConfig& config);

}  // namespace giocal
