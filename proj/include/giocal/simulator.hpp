#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "giocal/gnss.hpp"
#include "giocal/preintegration.hpp"

namespace giocal {

struct PhaseSpec {
  enum class Type { Stationary, StraightAccel, StraightConst, Circle };
  Type type = Type::Stationary;
  double duration = 0.0;   // s (StraightAccel derives it from accel/v_target)
  double accel = 0.0;      // m/s^2
  double v_target = 0.0;   // m/s
  double radius = 0.0;     // m
  double omega = 0.0;      // rad/s, positive = left turn
};

struct TrajectorySpec {
  std::vector<PhaseSpec> phases;
  double start_heading = 0.0;  // rad, 0 = forward axis pointing north
};

struct SensorNoiseSpec {
  double pr_sigma0 = 0.3;          // m, elevation model base
  double cp_sigma0 = 0.003;        // m
  double doppler_sigma = 0.1;      // m/s (on lambda*D)
  double gyro_bias_dph = 900.0;    // deg/h, per-axis std of the constant bias
  double accel_bias_mgal = 5.0;    // mGal, per-axis std (1 mGal = 1e-5 m/s^2)
  double arw_dps_sqrth = 20.0;     // deg/sqrt(h)
  double vrw_ms_sqrth = 0.1;       // m/s/sqrt(h)
  double odo_v_sigma = 0.01;       // m/s per sample
  double odo_w_sigma_dps = 1.0;    // deg/s per sample
  double s_v_rw = 0.0;             // random-walk density of the true scale, 1/sqrt(s)
  double s_omega_rw = 0.0;
  double gnss_hz = 1.0;
  double imu_hz = 100.0;
  double odo_hz = 25.0;
};

struct TrueCalibration {
  Vec3 p_bm = Vec3(0.2, -0.3, 0.1);       // m
  Vec3 rpy_bm_deg = Vec3(2.0, -1.0, 3.0); // roll, pitch, yaw of R^b_m
  double s_v = 0.0;
  double s_omega = 0.0;
  Vec3 lever = Vec3(0.3, 0.1, 0.8);       // p^b_g, m
  Quat q_bm() const {
    return rot_to_quat(rpy_to_rot(rpy_bm_deg.x() * kDegToRad,
                                  rpy_bm_deg.y() * kDegToRad,
                                  rpy_bm_deg.z() * kDegToRad));
  }
};

struct FaultSpec {
  struct PrOutlier {
    double t = 0.0;
    int sat = -1;  // -1: pick by position in the visible list
    double magnitude = 0.0;  // m, added to the rover pseudo-range (all bands)
  };
  struct CycleSlip {
    double t = 0.0;
    int sat = 0;
    int band = 0;
    int cycles = 0;
  };
  std::vector<PrOutlier> pr_outliers;
  std::vector<CycleSlip> cycle_slips;
  Vec3 lever_error = Vec3::Zero();  // offset of the *assumed* lever arm
};

struct Scenario {
  std::uint64_t seed = 1;
  double duration = 180.0;
  GeodeticOrigin origin{22.3 * kDegToRad, 114.18 * kDegToRad, 10.0};
  Vec3 base_offset_enu = Vec3(3800.0, 1200.0, 4.0);
  TrajectorySpec trajectory;
  SensorNoiseSpec noise;
  int n_sats = 20;
  double elevation_mask_deg = 10.0;
  std::vector<int> bands = {0, 1};
  TrueCalibration truth;
  FaultSpec faults;
  std::string name = "default";
};

// Fig.-3-style profile: 20 s stationary, quick ramp to 0.25 m/s, constant
// until 45 s, circling afterwards.
Scenario default_scenario();
// Faster, longer profile with a calibration phase and an extended loop for
// dead-reckoning evaluation (field-grade MEMS/odometer noise).
Scenario dr_scenario();

// Closed-form planar vehicle kinematics of the mount-frame origin.
struct VehicleState {
  double t = 0.0;
  Vec3 p_n = Vec3::Zero();   // m-origin position, n-frame
  Vec3 v_n = Vec3::Zero();
  Vec3 a_n = Vec3::Zero();
  double heading = 0.0;      // rad
  double speed = 0.0;        // forward, m/s
  double omega = 0.0;        // rad/s
};

class Trajectory {
 public:
  Trajectory(const TrajectorySpec& spec, double duration);
  VehicleState at(double t) const;
  double duration() const { return duration_; }

 private:
  struct Segment {
    PhaseSpec phase;
    double t0 = 0.0, t1 = 0.0;
    Vec2 p0 = Vec2::Zero();
    double heading0 = 0.0;
    double v0 = 0.0;
  };
  std::vector<Segment> segments_;
  double duration_ = 0.0;
};

struct SatTrack {
  int id = 0;
  Vec3 p0 = Vec3::Zero();   // ECEF at t = 0
  Vec3 axis = Vec3::UnitZ();
  double rate = 0.0;        // rad/s
  double clk = 0.0;         // s
  double clk_drift = 0.0;   // s/s
  double code_bias = 0.0;   // b^s, m
  double phase_bias = 0.0;  // B^s, cycles
  double iono_zenith = 0.0; // m
  double iono_phase = 0.0;

  Vec3 pos(double t) const;
  Vec3 vel(double t) const;
};

// Circular-arc satellite tracks with an azimuth/elevation layout tuned so
// the visible-set PDOP lands in [1.2, 1.5]. Emits a warning string (unused
// return ok) when n < 6 makes the DOP target infeasible.
std::vector<SatTrack> synthesize_constellation(int n_sats, const GeodeticOrigin& origin,
                                               std::uint64_t seed, double* pdop,
                                               std::string* warning = nullptr);

struct TruthEpoch {
  double t = 0.0;
  Vec3 p_n_b = Vec3::Zero();  // IMU position, n-frame
  Vec3 v_n_b = Vec3::Zero();
  Quat q_nb = Quat::Identity();
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  double heading = 0.0, speed = 0.0, omega = 0.0;
  double s_v = 0.0, s_omega = 0.0;
};

struct SimulatedDataset {
  Scenario scenario;
  std::vector<EpochObservations> rover;  // per GNSS epoch
  std::vector<EpochObservations> base;
  std::vector<ImuSample> imu;
  std::vector<OdoSample> odo;
  std::vector<TruthEpoch> truth;
  std::map<std::pair<int, int>, long long> true_n_sd;  // (sat, band) -> cycles
  Vec3 base_pos_ecef = Vec3::Zero();
  Quat q_nw = Quat::Identity();  // attitude of w (first IMU pose) in n
  Vec3 assumed_lever = Vec3::Zero();  // truth.lever + faults.lever_error
  double pdop = 0.0;
  std::string constellation_warning;
  std::vector<FaultSpec::PrOutlier> applied_outliers;
  std::vector<FaultSpec::CycleSlip> applied_slips;
};

// Deterministic synthesis of the full dataset (trajectory, IMU, odometer,
// rover/base GNSS, truth records); faults from the scenario are applied.
SimulatedDataset synthesize_measurements(const Scenario& scenario);

// Applies additional faults to an existing dataset, updating truth records.
void inject_faults(SimulatedDataset* data, const FaultSpec& faults);

}  // namespace giocal
