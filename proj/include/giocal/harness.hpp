#pragma once

#include <cstdint>
#include <vector>

#include "giocal/pipeline.hpp"
#include "giocal/simulator.hpp"

namespace giocal {

struct DrConfig {
  MotionDetectionConfig motion;
  bool apply_zupt = true;
  double block = 1.0;  // s, odometer preintegration chunk
};

struct DrPoint {
  double t = 0.0;
  Vec3 p_n = Vec3::Zero();
};

// IMU/odometer-only dead reckoning from the given initial state: chained
// odometer preintegration (gyro feeds the lever term and motion detection),
// pose frozen during detected zero-velocity intervals. No GNSS.
std::vector<DrPoint> dead_reckon(const SimulatedDataset& data, const CalibRecord& calib,
                                 const TrajRecord& init, double outage_start,
                                 const DrConfig& config);

struct ErrorSummary {
  double max_horizontal = 0.0;
  double rmse_horizontal = 0.0;
  double max_vertical = 0.0;
  double rmse_vertical = 0.0;
  int count = 0;
};

// Horizontal MAX/RMSE against truth; vertical reported separately. Series
// within 0.1 s of a truth bracket are interpolated, anything worse throws.
ErrorSummary error_metrics(const std::vector<DrPoint>& est,
                           const std::vector<TruthEpoch>& truth);

struct InitPerturbation {
  double translation = 0.2;   // m, per axis
  double rotation_deg = 2.0;  // per axis
  double scale = 0.01;
  std::uint64_t salt = 0x9e3779b97f4a7c15ULL;
};

// Gaussian-perturbed initial calibration guess written into a config copy.
PipelineConfig perturb_initial_guess(const PipelineConfig& base,
                                     const TrueCalibration& truth, std::uint64_t seed,
                                     const InitPerturbation& pert);

struct CalibErrors {
  double t = 0.0;
  // order: px,py,pz (m), roll,pitch,yaw (rad), s_v, s_omega; absolute values
  Eigen::Matrix<double, 8, 1> abs_err = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 1> std = Eigen::Matrix<double, 8, 1>::Zero();
};

CalibErrors calib_errors_at(const std::vector<CalibRecord>& series,
                            const TrueCalibration& truth, double t);

struct MonteCarloOptions {
  Scenario scenario;
  PipelineConfig config;
  std::vector<std::uint64_t> seeds;
  InitPerturbation perturbation;
  std::vector<double> checkpoints = {0.0, 60.0, 120.0};
  int threads = 4;
};

struct MonteCarloRun {
  std::uint64_t seed = 0;
  bool diverged = false;
  std::vector<CalibErrors> at_checkpoints;
  CalibErrors final;
  double final_cost = 0.0;
};

struct MonteCarloSummary {
  std::vector<MonteCarloRun> runs;
  Eigen::Matrix<double, 8, 1> mean_abs_final = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 1> std_final = Eigen::Matrix<double, 8, 1>::Zero();
  int failures = 0;  // diverged or cost-outlier runs, excluded from the means
};

// Independent seeds run concurrently; each run simulates its own dataset,
// perturbs the initial guess, calibrates and scores against truth. Runs with
// NaNs or final cost above 10x the seed median count as failures.
MonteCarloSummary run_monte_carlo(const MonteCarloOptions& options);

}  // namespace giocal
