#pragma once

#include <string>
#include <vector>

#include "giocal/ambiguity.hpp"
#include "giocal/factors.hpp"
#include "giocal/gnss.hpp"
#include "giocal/preintegration.hpp"
#include "giocal/problem.hpp"
#include "giocal/simulator.hpp"

namespace giocal {

struct PipelineConfig {
  int window_size = 3;
  bool ambiguity_resolution = true;
  double ratio_threshold = 3.0;
  double ar_sigma_cycles = 1e-3;  // sqrt of Sigma_AR diagonal
  bool lever_online = false;
  double lever_prior = 0.1;  // m

  // measurement models
  double sigma_pr0 = 0.3;      // m
  double sigma_cp0 = 0.003;    // m
  double sigma_doppler = 0.1;  // m/s
  bool outlier_screening = true;
  Stage1Config stage1;
  Stage2Config stage2;

  ImuNoise imu_noise;
  OdoNoise odo_noise;
  double s_v_rw = 1e-4;       // estimator scale random walks, 1/sqrt(s)
  double s_omega_rw = 1e-4;
  double clock_drift_rw = 0.05;  // m/s/sqrt(s)

  MotionDetectionConfig motion;
  bool motion_constraints = true;
  double zupt_sigma = 0.01;  // m/s
  double nhc_sigma = 0.05;   // m/s

  // initial calibration guess and priors
  Vec3 init_p_bm = Vec3::Zero();
  Vec3 init_rpy_bm_deg = Vec3::Zero();
  double init_s_v = 0.0;
  double init_s_omega = 0.0;
  double prior_translation = 0.5;   // m
  double prior_rotation_deg = 5.0;  // deg
  double prior_scale = 0.02;

  bool lever_from_config = false;  // otherwise the dataset's assumed lever
  Vec3 lever = Vec3::Zero();

  // initial navigation priors (w frame is defined by the first IMU pose)
  double prior_pos = 1e-4;
  double prior_vel = 0.1;
  double prior_att = 1e-5;
  double prior_ba = 0.05;
  double prior_bg = 0.02;
  double prior_clock_drift = 10.0;  // m/s
  double amb_prior_cycles = 100.0;

  SolveOptions solver;
  int amb_drop_after_epochs = 3;
};

struct CalibRecord {
  double t = 0.0;
  Vec3 p_bm = Vec3::Zero();
  Vec3 rpy_bm = Vec3::Zero();  // rad
  double s_v = 0.0, s_omega = 0.0;
  Vec3 lever = Vec3::Zero();
  // order: px,py,pz,roll,pitch,yaw,s_v,s_omega
  Eigen::Matrix<double, 8, 1> std = Eigen::Matrix<double, 8, 1>::Zero();
  Vec3 lever_std = Vec3::Zero();
};

struct TrajRecord {
  double t = 0.0;
  Vec3 p_n = Vec3::Zero();
  Vec3 v_n = Vec3::Zero();
  Quat q_nb = Quat::Identity();
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  double clock_drift = 0.0;  // m/s
};

struct FixLogEntry {
  double t = 0.0;
  int dim = 0;
  double q1 = 0.0, q2 = 0.0, ratio = 0.0;
  bool accepted = false;
  std::vector<int> sat_ref, sat_other, bands;
  std::vector<long long> integers;
};

struct PipelineResult {
  std::vector<CalibRecord> calib;
  std::vector<TrajRecord> traj;
  std::vector<OutlierReport> outliers;
  std::vector<FixLogEntry> fixes;
  std::vector<std::string> warnings;
  double final_cost = 0.0;
  bool diverged = false;
  int epochs = 0;
};

// Algorithm-1 style end-to-end run: preprocess + screen, build the sliding
// window, optimize, attempt ambiguity resolution, emit calibration per epoch.
PipelineResult run_calibration(const SimulatedDataset& data, const PipelineConfig& config);

}  // namespace giocal
