#include "giocal/gnss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace giocal {

double band_wavelength(int band) {
  switch (band) {
    case 0: return kSpeedOfLight / 1575.42e6;  // L1
    case 1: return kSpeedOfLight / 1227.60e6;  // L2
    default: throw std::invalid_argument("unknown band id " + std::to_string(band));
  }
}

double elevation_variance(double elevation, double sigma0) {
  if (elevation <= 0.0) {
    throw std::invalid_argument("satellite below horizon (el <= 0)");
  }
  const double s = sigma0 * std::sqrt(1.0 + 1.0 / std::sin(elevation));
  return s * s;
}

std::vector<DdMeasurement> form_double_differences(const EpochObservations& rover,
                                                   const EpochObservations& base,
                                                   double sigma_pr0, double sigma_cp0) {
  std::vector<DdMeasurement> out;
  // index base observations by (band, sat)
  std::map<std::pair<int, int>, const GnssRawMeasurement*> base_idx;
  for (const auto& m : base) base_idx[{m.band, m.sat}] = &m;

  std::map<int, std::vector<std::pair<const GnssRawMeasurement*, const GnssRawMeasurement*>>>
      common_by_band;
  for (const auto& m : rover) {
    auto it = base_idx.find({m.band, m.sat});
    if (it != base_idx.end()) common_by_band[m.band].push_back({&m, it->second});
  }

  for (auto& [band, pairs] : common_by_band) {
    if (pairs.size() < 2) continue;  // diagnostic case: nothing to difference
    // reference: highest rover elevation
    auto ref_it = std::max_element(pairs.begin(), pairs.end(),
                                   [](const auto& a, const auto& b) {
                                     return a.first->elevation < b.first->elevation;
                                   });
    const GnssRawMeasurement* rov_i = ref_it->first;
    const GnssRawMeasurement* base_i = ref_it->second;
    const double sd_p_i = rov_i->pseudorange - base_i->pseudorange;
    const double sd_l_i = rov_i->carrier_m() - base_i->carrier_m();
    const double var_p_i = elevation_variance(rov_i->elevation, sigma_pr0) +
                           elevation_variance(base_i->elevation, sigma_pr0);
    const double var_l_i = elevation_variance(rov_i->elevation, sigma_cp0) +
                           elevation_variance(base_i->elevation, sigma_cp0);

    for (const auto& [rov_j, base_j] : pairs) {
      if (rov_j->sat == rov_i->sat) continue;
      DdMeasurement dd;
      dd.t = rov_j->t;
      dd.sat_ref = rov_i->sat;
      dd.sat_other = rov_j->sat;
      dd.band = band;
      dd.wavelength = rov_j->wavelength;
      dd.p_dd = (rov_j->pseudorange - base_j->pseudorange) - sd_p_i;
      dd.l_dd = (rov_j->carrier_m() - base_j->carrier_m()) - sd_l_i;
      dd.var_p = var_p_i + elevation_variance(rov_j->elevation, sigma_pr0) +
                 elevation_variance(base_j->elevation, sigma_pr0);
      dd.var_l = var_l_i + elevation_variance(rov_j->elevation, sigma_cp0) +
                 elevation_variance(base_j->elevation, sigma_cp0);
      out.push_back(dd);
    }
  }
  return out;
}

void antenna_position_velocity(const Vec3& p_wb, const Vec3& v_wb, const Quat& q_wb,
                               const LeverArm& lever, const Vec3& omega_b_ib,
                               const Mat3& r_en, const Mat3& r_nw,
                               Vec3* p_eg, Vec3* v_eg) {
  const Mat3 r_wb = quat_to_rot(q_wb);
  const Mat3 r_ew = r_en * r_nw;
  if (p_eg) *p_eg = r_ew * (p_wb + r_wb * lever.p_bg);
  if (v_eg) *v_eg = r_ew * (v_wb + r_wb * (omega_b_ib.cross(lever.p_bg)));
}

double doppler_predicted(const Vec3& sat_pos, const Vec3& sat_vel,
                         const Vec3& ant_pos, const Vec3& ant_vel,
                         double rcv_clk_drift_ms, double sat_clk_drift_ms) {
  const Vec3 dp = sat_pos - ant_pos;
  const double rho = dp.norm();
  if (rho <= 0.0) throw std::invalid_argument("zero satellite-receiver range");
  const Vec3 dv = sat_vel - ant_vel;
  return dp.dot(dv) / rho + rcv_clk_drift_ms - sat_clk_drift_ms;
}

std::vector<OutlierReport> screen_outliers_stage1(
    const std::vector<EpochObservations>& epochs, const Stage1Config& config) {
  std::vector<OutlierReport> out;
  for (size_t k = 1; k < epochs.size(); ++k) {
    std::map<std::pair<int, int>, const GnssRawMeasurement*> prev;
    for (const auto& m : epochs[k - 1]) prev[{m.band, m.sat}] = &m;
    for (const auto& m : epochs[k]) {
      auto it = prev.find({m.band, m.sat});
      if (it == prev.end()) continue;  // no prior epoch: skipped, not flagged
      const GnssRawMeasurement& m0 = *it->second;
      const double dt = m.t - m0.t;
      if (dt <= 0.0) continue;
      const double range_rate_mid =
          0.5 * (m.doppler * m.wavelength + m0.doppler * m0.wavelength);
      const double innovation = (m.pseudorange - m0.pseudorange) - range_rate_mid * dt;
      const double sigma_gate =
          std::sqrt(elevation_variance(m.elevation, config.sigma_pr) +
                    elevation_variance(m0.elevation, config.sigma_pr) +
                    0.5 * config.sigma_doppler * config.sigma_doppler * dt * dt);
      OutlierReport rep;
      rep.t = m.t;
      rep.sat = m.sat;
      rep.band = m.band;
      rep.stage = 1;
      rep.statistic = std::abs(innovation);
      rep.threshold = config.gate * sigma_gate;
      rep.rejected = rep.statistic > rep.threshold;
      if (rep.rejected) out.push_back(rep);
    }
  }
  return out;
}

double dd_range(const Vec3& sat_ref, const Vec3& sat_other, const Vec3& rover,
                const Vec3& base) {
  return ((sat_other - rover).norm() - (sat_other - base).norm()) -
         ((sat_ref - rover).norm() - (sat_ref - base).norm());
}

std::vector<OutlierReport> screen_outliers_stage2(
    const std::vector<DdMeasurement>& dds,
    const std::map<std::pair<int, int>, Vec3>& sat_pos_by_id_band,
    const Vec3& ant_pred, double pred_var, const Vec3& base_pos,
    const Stage2Config& config) {
  std::vector<OutlierReport> out;
  for (const auto& dd : dds) {
    auto it_i = sat_pos_by_id_band.find({dd.sat_ref, dd.band});
    auto it_j = sat_pos_by_id_band.find({dd.sat_other, dd.band});
    if (it_i == sat_pos_by_id_band.end() || it_j == sat_pos_by_id_band.end()) continue;
    const double predicted = dd_range(it_i->second, it_j->second, ant_pred, base_pos);
    const Vec3 u_i = (it_i->second - ant_pred).normalized();
    const Vec3 u_j = (it_j->second - ant_pred).normalized();
    const Vec3 h = u_j - u_i;  // -d(rho_dd)/dp
    const double var = dd.var_p + pred_var * h.squaredNorm();
    OutlierReport rep;
    rep.t = dd.t;
    rep.sat = dd.sat_other;
    rep.band = dd.band;
    rep.stage = 2;
    rep.statistic = std::abs(dd.p_dd - predicted) / std::sqrt(var);
    rep.threshold = config.gate;
    rep.rejected = rep.statistic > rep.threshold;
    if (rep.rejected) out.push_back(rep);
  }
  return out;
}

}  // namespace giocal
