#pragma once

#include <optional>

#include "giocal/gnss.hpp"
#include "giocal/preintegration.hpp"
#include "giocal/problem.hpp"

namespace giocal {

// Variable conventions shared by the factors below:
//   position/velocity are w-frame, attitude is q^w_b with right perturbation,
//   receiver clock drift is kept in meters/second (c * tdot_r),
//   SD ambiguities are in cycles,
//   the extrinsic pair is (p^b_m, q^b_m), the lever arm p^b_g.

// DD pseudo-range: vars = {p_wb, q_wb[, p_bg]}.
struct DdPseudorangeFactor : Factor {
  Vec3 sat_ref, sat_other;       // absolute ECEF
  double base_leg = 0.0;         // (rho_base,other - rho_base,ref), constant
  double measured = 0.0;         // P_DD, m
  double sigma = 1.0;
  Mat3 r_ew;                     // R^e_n R^n_w
  Vec3 origin_ecef;              // ECEF position of the w/n origin
  Vec3 lever;                    // used when the lever is not a variable
  bool lever_online = false;

  int dim() const override { return 1; }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

// DD carrier phase: vars = {p_wb, q_wb, N_other, N_ref[, p_bg]}.
struct DdCarrierFactor : Factor {
  Vec3 sat_ref, sat_other;
  double base_leg = 0.0;
  double measured = 0.0;  // L_DD, m
  double wavelength = 0.19;
  double sigma = 1.0;
  Mat3 r_ew;
  Vec3 origin_ecef;
  Vec3 lever;
  bool lever_online = false;

  int dim() const override { return 1; }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

// Doppler (undifferenced, rover): vars = {p_wb, v_wb, q_wb, bg, clk_drift[, p_bg]}.
struct DopplerFactor : Factor {
  Vec3 sat_pos, sat_vel;
  double sat_clk_drift_ms = 0.0;  // c * satellite drift, m/s
  double measured = 0.0;          // lambda * D, m/s
  double sigma = 1.0;
  Mat3 r_ew;
  Vec3 origin_ecef;
  Vec3 gyro;  // raw body rate at the epoch
  Vec3 lever;
  bool lever_online = false;

  int dim() const override { return 1; }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

// IMU preintegration between consecutive states, 15 residuals
// (p, v, theta, ba walk, bg walk).
// vars = {p0, v0, q0, ba0, bg0, p1, v1, q1, ba1, bg1}.
struct ImuFactor : Factor {
  ImuPreintegrated pre;
  Vec3 gravity_w;
  Eigen::Matrix<double, 15, 15> sqrt_info;

  int dim() const override { return 15; }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

// Odometer preintegration between consecutive states, 6 residuals (p, theta).
// vars = {p0, q0, p1, q1, scales0 (2-vec), ext_p, ext_q}.
struct OdoFactor : Factor {
  OdoPreintegrated pre;
  Eigen::Matrix<double, 6, 6> sqrt_info;  // from the (dp, dtheta) block

  int dim() const override { return 6; }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

// Zero velocity: vars = {v}.
struct ZuptFactor : Factor {
  double sigma = 0.01;
  int dim() const override { return 3; }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

// Lateral/vertical velocity in the mount frame: vars = {v, q_wb, ext_q}.
struct NhcFactor : Factor {
  double sigma = 0.05;
  int dim() const override { return 2; }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

// Fixed DD integer vs SD states: vars = {N_other, N_ref}.
struct ArFactor : Factor {
  double fixed_dd = 0.0;  // cycles
  double sigma = 1e-3;    // cycles (Sigma_AR = 1e-6)
  int dim() const override { return 1; }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

// Random walk between consecutive instances of a Euclidean variable.
struct RandomWalkFactor : Factor {
  VecX sigma;  // per component, already scaled with sqrt(dt)
  int dim() const override { return int(sigma.size()); }
  void evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const override;
};

}  // namespace giocal
