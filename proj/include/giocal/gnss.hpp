#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "giocal/geomath.hpp"

namespace giocal {

// GPS L1/L2 carrier wavelengths.
double band_wavelength(int band);

struct GnssRawMeasurement {
  double t = 0.0;          // s
  int sat = 0;             // satellite id
  int band = 0;            // 0 = L1, 1 = L2
  double wavelength = 0.0; // m
  double pseudorange = 0.0;    // P, m
  double carrier_cycles = 0.0; // L, cycles
  double doppler = 0.0;        // D, Hz; lambda*D = range rate + c*(clk drifts)
  Vec3 sat_pos = Vec3::Zero();  // ECEF, m
  Vec3 sat_vel = Vec3::Zero();  // ECEF, m/s
  double sat_clk = 0.0;         // t^s, s
  double sat_clk_drift = 0.0;   // dt^s/dt, s/s
  double elevation = 0.0;       // rad, w.r.t. the receiver
  double azimuth = 0.0;         // rad

  double carrier_m() const { return carrier_cycles * wavelength; }
};

struct DdMeasurement {
  double t = 0.0;
  int sat_ref = 0;   // reference satellite i (highest elevation)
  int sat_other = 0; // satellite j
  int band = 0;
  double p_dd = 0.0;      // DD pseudo-range, m
  double l_dd = 0.0;      // DD carrier, m
  double wavelength = 0.0;
  double var_p = 0.0;     // m^2, sum of the four legs
  double var_l = 0.0;     // m^2
  Vec3 los_ref = Vec3::Zero();   // unit receiver->satellite, ECEF, rover side
  Vec3 los_other = Vec3::Zero();
};

struct LeverArm {
  Vec3 p_bg = Vec3::Zero();  // IMU -> antenna offset in b, m
  bool estimate_online = false;
};

struct OutlierReport {
  double t = 0.0;
  int sat = 0;
  int band = 0;
  int stage = 0;  // 1 = Doppler screen, 2 = preintegration-residual screen
  double statistic = 0.0;
  double threshold = 0.0;
  bool rejected = false;
};

// Per-band observation set of one receiver at one epoch.
using EpochObservations = std::vector<GnssRawMeasurement>;

// Forms between-receiver, between-satellite double differences per band.
// The reference satellite is the common satellite with the highest rover
// elevation. Bands with fewer than two common satellites yield nothing.
std::vector<DdMeasurement> form_double_differences(const EpochObservations& rover,
                                                   const EpochObservations& base,
                                                   double sigma_pr0, double sigma_cp0);

// Elevation-based variance: (sigma0 * sqrt(1 + 1/sin(el)))^2. Throws
// std::invalid_argument for el <= 0 (satellite below horizon).
double elevation_variance(double elevation, double sigma0);

// GNSS antenna position/velocity from the IMU-centric state (lever arm
// transform). Returns origin-relative ECEF coordinates: the caller adds the
// ECEF position of the w/n origin when absolute coordinates are needed.
// The velocity carries the full rigid-body term R^w_b (omega x p_bg), which
// is what differentiating the position line yields.
void antenna_position_velocity(const Vec3& p_wb, const Vec3& v_wb, const Quat& q_wb,
                               const LeverArm& lever, const Vec3& omega_b_ib,
                               const Mat3& r_en, const Mat3& r_nw,
                               Vec3* p_eg, Vec3* v_eg);

// Predicted lambda*D in m/s: range rate plus receiver/satellite clock drift
// terms (drifts in m/s). Throws std::invalid_argument when the range is zero.
double doppler_predicted(const Vec3& sat_pos, const Vec3& sat_vel,
                         const Vec3& ant_pos, const Vec3& ant_vel,
                         double rcv_clk_drift_ms, double sat_clk_drift_ms);

struct Stage1Config {
  double gate = 4.0;          // k1
  double sigma_pr = 0.3;      // per-measurement budget, m
  double sigma_doppler = 0.3; // m/s
};

// Stage 1: Doppler-consistency screen on consecutive-epoch pseudo-ranges of
// one receiver. Satellites without a previous epoch are skipped (not
// flagged). Input epochs must be in time order.
std::vector<OutlierReport> screen_outliers_stage1(
    const std::vector<EpochObservations>& epochs, const Stage1Config& config);

struct Stage2Config {
  double gate = 3.0;  // k2, whitened residual
};

// Stage 2: whitened DD pseudo-range residual against a predicted antenna
// position (from IMU/odometer preintegration). pred_var is the scalar
// per-axis variance of the prediction. base_pos is the known base antenna
// position (absolute ECEF), ant_pred the predicted rover antenna (absolute
// ECEF). Satellite positions ride along in each DdMeasurement's line of
// sight via sat positions passed here.
std::vector<OutlierReport> screen_outliers_stage2(
    const std::vector<DdMeasurement>& dds,
    const std::map<std::pair<int, int>, Vec3>& sat_pos_by_id_band,
    const Vec3& ant_pred, double pred_var, const Vec3& base_pos,
    const Stage2Config& config);

// DD geometric range for an absolute rover antenna position.
double dd_range(const Vec3& sat_ref, const Vec3& sat_other, const Vec3& rover,
                const Vec3& base);

}  // namespace giocal
