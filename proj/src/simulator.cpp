#include "giocal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace giocal {

namespace {

Vec2 forward_dir(double heading) {
  return Vec2(-std::sin(heading), std::cos(heading));
}

Vec2 left_dir(double heading) {
  return Vec2(-std::cos(heading), -std::sin(heading));
}

constexpr double kEarthMu = 3.986004418e14;
constexpr double kOrbitRadius = 2.656e7;

}  // namespace

Scenario default_scenario() {
  Scenario sc;
  sc.name = "default";
  sc.duration = 180.0;
  sc.trajectory.start_heading = 0.5;
  PhaseSpec stat;
  stat.type = PhaseSpec::Type::Stationary;
  stat.duration = 20.0;
  PhaseSpec acc;
  acc.type = PhaseSpec::Type::StraightAccel;
  acc.accel = 0.25;
  acc.v_target = 0.25;
  PhaseSpec run;
  run.type = PhaseSpec::Type::StraightConst;
  run.duration = 24.0;
  PhaseSpec circ;
  circ.type = PhaseSpec::Type::Circle;
  circ.radius = 2.5;
  circ.omega = 0.1;
  circ.duration = 135.0;
  sc.trajectory.phases = {stat, acc, run, circ};
  return sc;
}

Scenario dr_scenario() {
  Scenario sc;
  sc.name = "dr";
  sc.duration = 430.0;
  sc.trajectory.start_heading = 0.3;
  // field-grade sensors: MEMS MTi-30-class IMU, mobile-base odometer
  sc.noise.gyro_bias_dph = 18.0;
  sc.noise.accel_bias_mgal = 5.0;
  sc.noise.arw_dps_sqrth = 1.8;
  sc.noise.vrw_ms_sqrth = 0.35;
  sc.noise.odo_v_sigma = 0.01;
  sc.noise.odo_w_sigma_dps = 0.1;
  sc.noise.doppler_sigma = 0.3;

  PhaseSpec stat;
  stat.type = PhaseSpec::Type::Stationary;
  stat.duration = 10.0;
  PhaseSpec acc;
  acc.type = PhaseSpec::Type::StraightAccel;
  acc.accel = 0.5;
  acc.v_target = 1.5;
  PhaseSpec run;
  run.type = PhaseSpec::Type::StraightConst;
  run.duration = 17.0;
  PhaseSpec circ;
  circ.type = PhaseSpec::Type::Circle;
  circ.radius = 15.0;
  circ.omega = 0.1;
  circ.duration = 90.0;
  sc.trajectory.phases = {stat, acc, run, circ};
  // extended loop: straights and turns alternating
  for (int leg = 0; leg < 6; ++leg) {
    PhaseSpec straight;
    straight.type = PhaseSpec::Type::StraightConst;
    straight.duration = 30.0;
    PhaseSpec turn;
    turn.type = PhaseSpec::Type::Circle;
    turn.radius = 15.0;
    turn.omega = (leg % 2 == 0) ? -0.1 : 0.1;
    turn.duration = 22.0;
    sc.trajectory.phases.push_back(straight);
    sc.trajectory.phases.push_back(turn);
  }
  return sc;
}

Trajectory::Trajectory(const TrajectorySpec& spec, double duration) : duration_(duration) {
  double t = 0.0;
  Vec2 p = Vec2::Zero();
  double heading = spec.start_heading;
  double v = 0.0;
  for (const auto& ph : spec.phases) {
    Segment s;
    s.phase = ph;
    s.t0 = t;
    s.p0 = p;
    s.heading0 = heading;
    s.v0 = v;
    double dur = ph.duration;
    switch (ph.type) {
      case PhaseSpec::Type::Stationary:
        v = 0.0;
        break;
      case PhaseSpec::Type::StraightAccel: {
        if (ph.accel == 0.0) throw std::invalid_argument("accel phase with zero accel");
        dur = (ph.v_target - v) / ph.accel;
        if (dur < 0.0) throw std::invalid_argument("accel phase cannot reach target");
        p += forward_dir(heading) * (v * dur + 0.5 * ph.accel * dur * dur);
        v = ph.v_target;
        break;
      }
      case PhaseSpec::Type::StraightConst:
        p += forward_dir(heading) * (v * dur);
        break;
      case PhaseSpec::Type::Circle: {
        v = ph.radius * std::abs(ph.omega);
        const double sgn = ph.omega >= 0.0 ? 1.0 : -1.0;
        const Vec2 c = s.p0 + sgn * ph.radius * left_dir(heading);
        const double h1 = heading + ph.omega * dur;
        p = c - sgn * ph.radius * left_dir(h1);
        heading = h1;
        break;
      }
    }
    s.t1 = t + dur;
    t = s.t1;
    segments_.push_back(s);
    if (t >= duration) break;
  }
  if (segments_.empty()) throw std::invalid_argument("empty trajectory spec");
  // keep the last phase running to the end of the dataset
  segments_.back().t1 = std::max(segments_.back().t1, duration + 1.0);
}

VehicleState Trajectory::at(double t) const {
  const Segment* seg = &segments_.back();
  for (const auto& s : segments_) {
    if (t < s.t1) {
      seg = &s;
      break;
    }
  }
  const double tau = t - seg->t0;
  VehicleState out;
  out.t = t;
  const auto& ph = seg->phase;
  switch (ph.type) {
    case PhaseSpec::Type::Stationary: {
      out.p_n.head<2>() = seg->p0;
      out.heading = seg->heading0;
      break;
    }
    case PhaseSpec::Type::StraightAccel: {
      const Vec2 f = forward_dir(seg->heading0);
      out.speed = seg->v0 + ph.accel * tau;
      out.p_n.head<2>() = seg->p0 + f * (seg->v0 * tau + 0.5 * ph.accel * tau * tau);
      out.v_n.head<2>() = f * out.speed;
      out.a_n.head<2>() = f * ph.accel;
      out.heading = seg->heading0;
      break;
    }
    case PhaseSpec::Type::StraightConst: {
      const Vec2 f = forward_dir(seg->heading0);
      out.speed = seg->v0;
      out.p_n.head<2>() = seg->p0 + f * (seg->v0 * tau);
      out.v_n.head<2>() = f * out.speed;
      out.heading = seg->heading0;
      break;
    }
    case PhaseSpec::Type::Circle: {
      const double sgn = ph.omega >= 0.0 ? 1.0 : -1.0;
      const Vec2 c = seg->p0 + sgn * ph.radius * left_dir(seg->heading0);
      out.heading = seg->heading0 + ph.omega * tau;
      out.omega = ph.omega;
      out.speed = ph.radius * std::abs(ph.omega);
      out.p_n.head<2>() = c - sgn * ph.radius * left_dir(out.heading);
      out.v_n.head<2>() = forward_dir(out.heading) * out.speed;
      out.a_n.head<2>() = left_dir(out.heading) * (ph.radius * ph.omega * ph.omega * sgn);
      break;
    }
  }
  return out;
}

Vec3 SatTrack::pos(double t) const {
  return Eigen::AngleAxisd(rate * t, axis).toRotationMatrix() * p0;
}

Vec3 SatTrack::vel(double t) const {
  return rate * axis.cross(pos(t));
}

namespace {

double pdop_of(const std::vector<Vec3>& sat_positions, const Vec3& rcv) {
  MatX g(sat_positions.size(), 4);
  for (size_t i = 0; i < sat_positions.size(); ++i) {
    const Vec3 u = (sat_positions[i] - rcv).normalized();
    g.row(i) << -u.transpose(), 1.0;
  }
  const Eigen::Matrix4d h = (g.transpose() * g).inverse();
  return std::sqrt(h(0, 0) + h(1, 1) + h(2, 2));
}

}  // namespace

std::vector<SatTrack> synthesize_constellation(int n_sats, const GeodeticOrigin& origin,
                                               std::uint64_t seed, double* pdop,
                                               std::string* warning) {
  if (n_sats < 4) throw std::invalid_argument("need at least 4 satellites");
  std::mt19937_64 rng(seed ^ 0x5eedc0deULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Vec3 origin_e = geodetic_to_ecef(origin);
  const Mat3 r_en = ecef_enu_rotation(origin);

  const double jitter = unit(rng) * 0.2;
  std::vector<double> az(n_sats), frac(n_sats);
  for (int i = 0; i < n_sats; ++i) {
    az[i] = std::fmod(i * 2.39996322972865 + jitter, 2.0 * M_PI);
    frac[i] = std::fmod(i * 0.6180339887498949 + 0.17, 1.0);
  }

  std::vector<double> clk(n_sats), drift(n_sats), cbias(n_sats), pbias(n_sats),
      iono(n_sats), iono_ph(n_sats), zeta(n_sats);
  for (int i = 0; i < n_sats; ++i) clk[i] = (unit(rng) * 2.0 - 1.0) * 8e-4;
  for (int i = 0; i < n_sats; ++i) drift[i] = (unit(rng) * 2.0 - 1.0) * 5e-10;
  for (int i = 0; i < n_sats; ++i) cbias[i] = (unit(rng) * 2.0 - 1.0) * 3.0;
  for (int i = 0; i < n_sats; ++i) pbias[i] = (unit(rng) * 2.0 - 1.0) * 0.25;
  for (int i = 0; i < n_sats; ++i) iono[i] = 1.5 + unit(rng) * 2.5;
  for (int i = 0; i < n_sats; ++i) iono_ph[i] = unit(rng) * 2.0 * M_PI;
  for (int i = 0; i < n_sats; ++i) zeta[i] = unit(rng) * 2.0 * M_PI;

  auto build = [&](double exponent) {
    std::vector<SatTrack> tracks;
    for (int i = 0; i < n_sats; ++i) {
      const double el = (14.0 + 71.0 * std::pow(frac[i], exponent)) * kDegToRad;
      const Vec3 d_enu(std::sin(az[i]) * std::cos(el), std::cos(az[i]) * std::cos(el),
                       std::sin(el));
      const Vec3 d = r_en * d_enu;
      const double b = origin_e.dot(d);
      const double rho = -b + std::sqrt(b * b + kOrbitRadius * kOrbitRadius -
                                        origin_e.squaredNorm());
      SatTrack s;
      s.id = i + 1;
      s.p0 = origin_e + rho * d;
      const Vec3 p_hat = s.p0.normalized();
      Vec3 ref = std::abs(p_hat.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
      const Vec3 ea = (ref - ref.dot(p_hat) * p_hat).normalized();
      const Vec3 eb = p_hat.cross(ea);
      const Vec3 tangent = std::cos(zeta[i]) * ea + std::sin(zeta[i]) * eb;
      s.axis = p_hat.cross(tangent);
      s.rate = std::sqrt(kEarthMu / (kOrbitRadius * kOrbitRadius * kOrbitRadius));
      s.clk = clk[i];
      s.clk_drift = drift[i];
      s.code_bias = cbias[i];
      s.phase_bias = pbias[i];
      s.iono_zenith = iono[i];
      s.iono_phase = iono_ph[i];
      tracks.push_back(s);
    }
    return tracks;
  };

  std::vector<SatTrack> best;
  double best_pdop = 0.0, best_score = 1e9;
  for (double exponent : {1.0, 0.85, 1.2, 0.7, 1.4, 0.55, 1.7, 2.0, 0.45}) {
    auto tracks = build(exponent);
    std::vector<Vec3> ps;
    for (const auto& s : tracks) ps.push_back(s.p0);
    const double p = pdop_of(ps, origin_e);
    const double score = std::abs(p - 1.35);
    if (score < best_score) {
      best_score = score;
      best_pdop = p;
      best = std::move(tracks);
    }
    if (p >= 1.25 && p <= 1.45) break;
  }
  if (pdop) *pdop = best_pdop;
  if (warning) {
    *warning = (n_sats < 6 && (best_pdop < 1.25 || best_pdop > 1.45))
                   ? "DOP target infeasible with fewer than 6 satellites"
                   : "";
  }
  return best;
}

SimulatedDataset synthesize_measurements(const Scenario& scenario) {
  SimulatedDataset data;
  data.scenario = scenario;

  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto randn = [&]() { return gauss(rng); };

  const auto& noise = scenario.noise;
  const Trajectory traj(scenario.trajectory, scenario.duration);

  const Vec3 origin_e = geodetic_to_ecef(scenario.origin);
  const Mat3 r_en = ecef_enu_rotation(scenario.origin);
  data.base_pos_ecef = origin_e + r_en * scenario.base_offset_enu;

  const Mat3 r_bm = quat_to_rot(scenario.truth.q_bm());
  const Vec3 p_bm = scenario.truth.p_bm;
  const Vec3 lever = scenario.truth.lever;
  data.assumed_lever = lever + scenario.faults.lever_error;
  const Vec3 g_n(0.0, 0.0, -kGravity);

  // constant sensor biases
  const double bg_std = noise.gyro_bias_dph * kDegToRad / 3600.0;
  const double ba_std = noise.accel_bias_mgal * 1e-5;
  const Vec3 bg(bg_std * randn(), bg_std * randn(), bg_std * randn());
  const Vec3 ba(ba_std * randn(), ba_std * randn(), ba_std * randn());

  // receiver clocks, hardware biases, ambiguities
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<long long> amb_draw(-30000, 30000);
  struct ReceiverClock {
    double clk0, drift0;
  };
  ReceiverClock rov_clk{(unit(rng) * 2.0 - 1.0) * 8e-4, (unit(rng) * 2.0 - 1.0) * 3e-10};
  ReceiverClock base_clk{(unit(rng) * 2.0 - 1.0) * 8e-4, (unit(rng) * 2.0 - 1.0) * 3e-10};
  double rov_cbias[2], rov_pbias[2], base_cbias[2], base_pbias[2];
  for (int b = 0; b < 2; ++b) {
    rov_cbias[b] = (unit(rng) * 2.0 - 1.0) * 3.0;
    base_cbias[b] = (unit(rng) * 2.0 - 1.0) * 3.0;
    rov_pbias[b] = (unit(rng) * 2.0 - 1.0) * 0.25;
    base_pbias[b] = (unit(rng) * 2.0 - 1.0) * 0.25;
  }

  auto tracks = synthesize_constellation(scenario.n_sats, scenario.origin,
                                         scenario.seed, &data.pdop,
                                         &data.constellation_warning);

  std::map<std::pair<int, int>, long long> n_rov, n_base;
  for (const auto& s : tracks) {
    for (int band : scenario.bands) {
      n_rov[{s.id, band}] = amb_draw(rng);
      n_base[{s.id, band}] = amb_draw(rng);
      data.true_n_sd[{s.id, band}] = n_rov[{s.id, band}] - n_base[{s.id, band}];
    }
  }

  // body kinematics of the IMU from the vehicle trajectory
  auto imu_truth = [&](double t, Vec3* p_nb, Vec3* v_nb, Mat3* r_nb, Vec3* w_b,
                       Vec3* f_b, VehicleState* veh_out) {
    const VehicleState veh = traj.at(t);
    const Mat3 r_nm = Eigen::AngleAxisd(veh.heading, Vec3::UnitZ()).toRotationMatrix();
    const Mat3 r_nb_l = r_nm * r_bm.transpose();
    const Vec3 w = r_bm * Vec3(0.0, 0.0, veh.omega);
    if (p_nb) *p_nb = veh.p_n - r_nb_l * p_bm;
    if (v_nb) *v_nb = veh.v_n - r_nb_l * w.cross(p_bm);
    if (w_b) *w_b = w;
    if (r_nb) *r_nb = r_nb_l;
    if (f_b) {
      const Vec3 a_nb = veh.a_n - r_nb_l * w.cross(w.cross(p_bm));
      *f_b = r_nb_l.transpose() * (a_nb - g_n);
    }
    if (veh_out) *veh_out = veh;
  };

  {
    Mat3 r_nb0;
    imu_truth(0.0, nullptr, nullptr, &r_nb0, nullptr, nullptr, nullptr);
    data.q_nw = rot_to_quat(r_nb0);
  }

  // IMU stream
  const double imu_dt = 1.0 / noise.imu_hz;
  const int n_imu = int(std::llround(scenario.duration * noise.imu_hz)) + 1;
  const double sg = noise.arw_dps_sqrth * kDegToRad / 60.0 / std::sqrt(imu_dt);
  const double sa = noise.vrw_ms_sqrth / 60.0 / std::sqrt(imu_dt);
  data.imu.reserve(n_imu);
  for (int i = 0; i < n_imu; ++i) {
    const double t = i * imu_dt;
    Vec3 w_b, f_b;
    imu_truth(t, nullptr, nullptr, nullptr, &w_b, &f_b, nullptr);
    ImuSample s;
    s.t = t;
    s.gyro = w_b + bg + Vec3(sg * randn(), sg * randn(), sg * randn());
    s.accel = f_b + ba + Vec3(sa * randn(), sa * randn(), sa * randn());
    data.imu.push_back(s);
  }

  // odometer stream with (optionally) random-walking true scales
  const double odo_dt = 1.0 / noise.odo_hz;
  const int n_odo = int(std::llround(scenario.duration * noise.odo_hz)) + 1;
  const double sw = noise.odo_w_sigma_dps * kDegToRad;
  double s_v_true = scenario.truth.s_v;
  double s_w_true = scenario.truth.s_omega;
  std::vector<double> s_v_series(n_odo), s_w_series(n_odo);
  data.odo.reserve(n_odo);
  for (int i = 0; i < n_odo; ++i) {
    const double t = i * odo_dt;
    if (i > 0) {
      s_v_true += noise.s_v_rw * std::sqrt(odo_dt) * randn();
      s_w_true += noise.s_omega_rw * std::sqrt(odo_dt) * randn();
    }
    s_v_series[i] = s_v_true;
    s_w_series[i] = s_w_true;
    const VehicleState veh = traj.at(t);
    OdoSample s;
    s.t = t;
    s.v = veh.speed / (1.0 + s_v_true) + noise.odo_v_sigma * randn();
    s.omega = veh.omega / (1.0 + s_w_true) + sw * randn();
    data.odo.push_back(s);
  }

  // GNSS epochs
  const double gnss_dt = 1.0 / noise.gnss_hz;
  const int n_epochs = int(std::llround(scenario.duration * noise.gnss_hz)) + 1;
  const double mask = scenario.elevation_mask_deg * kDegToRad;

  // receiver clock time series (drift random-walks slowly; offsets integrate
  // the drift so Doppler and pseudo-range stay consistent)
  std::vector<double> rov_drift(n_epochs), base_drift(n_epochs);
  std::vector<double> rov_offset(n_epochs), base_offset(n_epochs);
  double rd = rov_clk.drift0, bd = base_clk.drift0;
  double ro = rov_clk.clk0, bo = base_clk.clk0;
  for (int k = 0; k < n_epochs; ++k) {
    if (k > 0) {
      const double rd_new = rd + 0.002 / kSpeedOfLight * randn();
      const double bd_new = bd + 0.002 / kSpeedOfLight * randn();
      ro += 0.5 * (rd + rd_new) * gnss_dt;
      bo += 0.5 * (bd + bd_new) * gnss_dt;
      rd = rd_new;
      bd = bd_new;
    }
    rov_drift[k] = rd;
    base_drift[k] = bd;
    rov_offset[k] = ro;
    base_offset[k] = bo;
  }

  data.rover.resize(n_epochs);
  data.base.resize(n_epochs);
  data.truth.reserve(n_epochs);

  for (int k = 0; k < n_epochs; ++k) {
    const double t = k * gnss_dt;
    Vec3 p_nb, v_nb, w_b;
    Mat3 r_nb;
    VehicleState veh;
    imu_truth(t, &p_nb, &v_nb, &r_nb, &w_b, nullptr, &veh);

    TruthEpoch te;
    te.t = t;
    te.p_n_b = p_nb;
    te.v_n_b = v_nb;
    te.q_nb = rot_to_quat(r_nb);
    te.ba = ba;
    te.bg = bg;
    te.heading = veh.heading;
    te.speed = veh.speed;
    te.omega = veh.omega;
    const int odo_idx = std::min(int(std::llround(t * noise.odo_hz)), n_odo - 1);
    te.s_v = s_v_series[odo_idx];
    te.s_omega = s_w_series[odo_idx];
    data.truth.push_back(te);

    const Vec3 p_ant_e = origin_e + r_en * (p_nb + r_nb * lever);
    const Vec3 v_ant_e = r_en * (v_nb + r_nb * (w_b.cross(lever)));

    for (const auto& sat : tracks) {
      const Vec3 sp = sat.pos(t);
      const Vec3 sv = sat.vel(t);
      // shared atmosphere evaluated at the origin
      const Vec3 u_origin_enu = (r_en.transpose() * (sp - origin_e)).normalized();
      const double el_origin = std::asin(std::clamp(u_origin_enu.z(), -1.0, 1.0));
      if (el_origin <= 0.02) continue;
      const double iono_t =
          (sat.iono_zenith + 0.3 * std::sin(2.0 * M_PI * t / 300.0 + sat.iono_phase)) /
          std::sin(el_origin);
      const double tropo_t = 2.3 / std::sin(el_origin);

      struct Side {
        const Vec3& pos;
        const Vec3& vel;
        double clk_off, clk_drift;
        double* cbias;
        double* pbias;
        std::map<std::pair<int, int>, long long>* amb;
        std::vector<GnssRawMeasurement>* out;
      };
      const Vec3 base_vel = Vec3::Zero();
      Side sides[2] = {
          {p_ant_e, v_ant_e, rov_offset[k], rov_drift[k], rov_cbias, rov_pbias,
           &n_rov, &data.rover[k]},
          {data.base_pos_ecef, base_vel, base_offset[k], base_drift[k], base_cbias,
           base_pbias, &n_base, &data.base[k]}};

      // common visibility so rover and base share satellite sets
      bool visible = true;
      double el_side[2], az_side[2];
      for (int s = 0; s < 2; ++s) {
        const Vec3 u_enu = (r_en.transpose() * (sp - sides[s].pos)).normalized();
        el_side[s] = std::asin(std::clamp(u_enu.z(), -1.0, 1.0));
        az_side[s] = std::atan2(u_enu.x(), u_enu.y());
        if (el_side[s] <= mask) visible = false;
      }
      if (!visible) continue;

      for (int s = 0; s < 2; ++s) {
        const Vec3 dp = sp - sides[s].pos;
        const double rho = dp.norm();
        const double rho_dot = dp.dot(sv - sides[s].vel) / rho;
        const double clock_m =
            kSpeedOfLight * (sides[s].clk_off - (sat.clk + sat.clk_drift * t));
        for (int band : scenario.bands) {
          const double lambda = band_wavelength(band);
          const double sig_p = std::sqrt(elevation_variance(el_side[s], noise.pr_sigma0));
          const double sig_l = std::sqrt(elevation_variance(el_side[s], noise.cp_sigma0));
          GnssRawMeasurement m;
          m.t = t;
          m.sat = sat.id;
          m.band = band;
          m.wavelength = lambda;
          m.sat_pos = sp;
          m.sat_vel = sv;
          m.sat_clk = sat.clk + sat.clk_drift * t;
          m.sat_clk_drift = sat.clk_drift;
          m.elevation = el_side[s];
          m.azimuth = az_side[s];
          m.pseudorange = rho + iono_t + tropo_t + clock_m +
                          (sides[s].cbias[band] - sat.code_bias) + sig_p * randn();
          const double l_m = rho - iono_t + tropo_t + clock_m +
                             lambda * (sides[s].pbias[band] - sat.phase_bias) +
                             lambda * double((*sides[s].amb)[{sat.id, band}]) +
                             sig_l * randn();
          m.carrier_cycles = l_m / lambda;
          const double lam_d = rho_dot +
                               kSpeedOfLight * (sides[s].clk_drift - sat.clk_drift) +
                               noise.doppler_sigma * randn();
          m.doppler = lam_d / lambda;
          sides[s].out->push_back(m);
        }
      }
    }
  }

  inject_faults(&data, scenario.faults);
  return data;
}

void inject_faults(SimulatedDataset* data, const FaultSpec& faults) {
  const double hz = data->scenario.noise.gnss_hz;
  int pick = 0;
  for (const auto& f : faults.pr_outliers) {
    const int k = int(std::llround(f.t * hz));
    if (k < 0 || k >= int(data->rover.size())) continue;
    auto& epoch = data->rover[k];
    if (epoch.empty()) continue;
    int sat = f.sat;
    if (sat < 0) {
      std::vector<int> sats;
      for (const auto& m : epoch) {
        if (sats.empty() || sats.back() != m.sat) sats.push_back(m.sat);
      }
      sat = sats[pick % sats.size()];
      pick += 7;
    }
    bool touched = false;
    for (auto& m : epoch) {
      if (m.sat == sat) {
        m.pseudorange += f.magnitude;
        touched = true;
      }
    }
    if (touched) {
      FaultSpec::PrOutlier applied = f;
      applied.sat = sat;
      data->applied_outliers.push_back(applied);
    }
  }
  for (const auto& f : faults.cycle_slips) {
    const int k0 = int(std::llround(f.t * hz));
    for (int k = k0; k < int(data->rover.size()); ++k) {
      auto& epoch = data->rover[k];
      if (k == k0) {
        // loss of lock: the slip epoch drops the satellite entirely
        epoch.erase(std::remove_if(epoch.begin(), epoch.end(),
                                   [&](const GnssRawMeasurement& m) {
                                     return m.sat == f.sat;
                                   }),
                    epoch.end());
        continue;
      }
      for (auto& m : epoch) {
        if (m.sat == f.sat && m.band == f.band) m.carrier_cycles += double(f.cycles);
      }
    }
    data->applied_slips.push_back(f);
  }
  data->assumed_lever = data->scenario.truth.lever + faults.lever_error;
}

}  // namespace giocal
