#pragma once

#include <array>
#include <string>
#include <vector>

#include "giocal/geomath.hpp"

namespace giocal {

// Virtual linear/angular velocity of the IMU body frame, either from
// simulator truth (analysis mode) or from a state estimate (empirical mode).
struct VirtualBodyRates {
  double t = 0.0;
  Vec3 v_b = Vec3::Zero();      // m/s
  Vec3 omega_b = Vec3::Zero();  // rad/s
};

using Mat6 = Eigen::Matrix<double, 6, 6>;

// Per-epoch sensitivity block of the extrinsic parameters, columns ordered
// (p_bm, theta_bm):
//   [ R^m_b |w x|   |(R^m_b (v + |w x| p_bm)) x| ]
//   [ 0             |(R^m_b w) x|                ]
Mat6 obs_block(const VirtualBodyRates& rates, const Mat3& r_mb, const Vec3& p_bm);

struct ObservabilityReport {
  VecX singular_values;          // descending
  int rank = 0;
  MatX null_basis;               // 6 x (6 - rank), orthonormal columns
  std::array<bool, 6> identifiable{};  // per extrinsic DOF (px,py,pz,rx,ry,rz)
  double tol = 1e-8;
};

// Stacks the blocks, ranks by SVD with a relative tolerance, reports null
// space and per-axis identifiability (a DOF is identifiable when no null
// vector has a component above 1e-3 on its axis).
ObservabilityReport stack_and_rank(const std::vector<Mat6>& blocks, double tol = 1e-8);

// Calibration time series entry used by the empirical crosscheck.
struct CalibSeriesPoint {
  double t = 0.0;
  // parameter order: px,py,pz (m), roll,pitch,yaw (rad), s_v, s_omega
  Eigen::Matrix<double, 8, 1> value = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 1> std = Eigen::Matrix<double, 8, 1>::Zero();
};

struct ConvergenceVerdict {
  std::string parameter;
  bool observable = false;
  double prior_std = 0.0;
  double final_std = 0.0;
  double convergence_t = -1.0;  // first epoch with std < ratio * prior; -1 if never
};

// A parameter counts as unobservable when its posterior std never drops
// below ratio (default 0.8) times the prior std.
std::vector<ConvergenceVerdict> empirical_crosscheck(
    const std::vector<CalibSeriesPoint>& series,
    const Eigen::Matrix<double, 8, 1>& prior_std, double ratio = 0.8);

}  // namespace giocal
