#include "giocal/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace giocal {

using nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& file, int line) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(file + ":" + std::to_string(line) +
                             ": malformed numeric field '" + s + "'");
  }
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from(const json& j) { return Vec3(j.at(0), j.at(1), j.at(2)); }

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

std::string scenario_to_json(const Scenario& sc) {
  json j;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["duration_s"] = sc.duration;
  j["origin_geodetic"] = {sc.origin.lat * kRadToDeg, sc.origin.lon * kRadToDeg,
                          sc.origin.height};
  j["base_offset_enu_m"] = vec3_json(sc.base_offset_enu);
  j["n_sats"] = sc.n_sats;
  j["elevation_mask_deg"] = sc.elevation_mask_deg;
  j["bands"] = sc.bands;
  json phases = json::array();
  for (const auto& ph : sc.trajectory.phases) {
    json p;
    switch (ph.type) {
      case PhaseSpec::Type::Stationary:
        p["type"] = "stationary";
        p["duration_s"] = ph.duration;
        break;
      case PhaseSpec::Type::StraightAccel:
        p["type"] = "straight_accel";
        p["accel_mps2"] = ph.accel;
        p["v_target_mps"] = ph.v_target;
        break;
      case PhaseSpec::Type::StraightConst:
        p["type"] = "straight_const";
        p["duration_s"] = ph.duration;
        break;
      case PhaseSpec::Type::Circle:
        p["type"] = "circle";
        p["radius_m"] = ph.radius;
        p["omega_rps"] = ph.omega;
        p["duration_s"] = ph.duration;
        break;
    }
    phases.push_back(p);
  }
  j["trajectory"] = {{"start_heading_deg", sc.trajectory.start_heading * kRadToDeg},
                     {"phases", phases}};
  j["noise"] = {{"pr_sigma0_m", sc.noise.pr_sigma0},
                {"cp_sigma0_m", sc.noise.cp_sigma0},
                {"doppler_sigma_ms", sc.noise.doppler_sigma},
                {"gyro_bias_dph", sc.noise.gyro_bias_dph},
                {"accel_bias_mgal", sc.noise.accel_bias_mgal},
                {"arw_dps_sqrth", sc.noise.arw_dps_sqrth},
                {"vrw_ms_sqrth", sc.noise.vrw_ms_sqrth},
                {"odo_v_sigma_ms", sc.noise.odo_v_sigma},
                {"odo_w_sigma_dps", sc.noise.odo_w_sigma_dps},
                {"s_v_rw", sc.noise.s_v_rw},
                {"s_omega_rw", sc.noise.s_omega_rw},
                {"gnss_hz", sc.noise.gnss_hz},
                {"imu_hz", sc.noise.imu_hz},
                {"odo_hz", sc.noise.odo_hz}};
  j["true_calibration"] = {{"p_bm_m", vec3_json(sc.truth.p_bm)},
                           {"rpy_bm_deg", vec3_json(sc.truth.rpy_bm_deg)},
                           {"s_v", sc.truth.s_v},
                           {"s_omega", sc.truth.s_omega},
                           {"lever_arm_m", vec3_json(sc.truth.lever)}};
  json outliers = json::array();
  for (const auto& o : sc.faults.pr_outliers) {
    outliers.push_back({{"t", o.t}, {"sat", o.sat}, {"magnitude_m", o.magnitude}});
  }
  json slips = json::array();
  for (const auto& s : sc.faults.cycle_slips) {
    slips.push_back({{"t", s.t}, {"sat", s.sat}, {"band", s.band}, {"cycles", s.cycles}});
  }
  j["faults"] = {{"pr_outliers", outliers},
                 {"cycle_slips", slips},
                 {"lever_error_m", vec3_json(sc.faults.lever_error)}};
  return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  const json j = json::parse(text);
  Scenario sc;
  sc.name = j.value("name", "scenario");
  sc.seed = j.at("seed").get<std::uint64_t>();
  sc.duration = j.at("duration_s");
  sc.origin.lat = double(j.at("origin_geodetic").at(0)) * kDegToRad;
  sc.origin.lon = double(j.at("origin_geodetic").at(1)) * kDegToRad;
  sc.origin.height = j.at("origin_geodetic").at(2);
  sc.base_offset_enu = vec3_from(j.at("base_offset_enu_m"));
  sc.n_sats = j.at("n_sats");
  sc.elevation_mask_deg = j.at("elevation_mask_deg");
  sc.bands = j.at("bands").get<std::vector<int>>();
  sc.trajectory.start_heading =
      double(j.at("trajectory").at("start_heading_deg")) * kDegToRad;
  sc.trajectory.phases.clear();
  for (const auto& p : j.at("trajectory").at("phases")) {
    PhaseSpec ph;
    const std::string type = p.at("type");
    if (type == "stationary") {
      ph.type = PhaseSpec::Type::Stationary;
      ph.duration = p.at("duration_s");
    } else if (type == "straight_accel") {
      ph.type = PhaseSpec::Type::StraightAccel;
      ph.accel = p.at("accel_mps2");
      ph.v_target = p.at("v_target_mps");
    } else if (type == "straight_const") {
      ph.type = PhaseSpec::Type::StraightConst;
      ph.duration = p.at("duration_s");
    } else if (type == "circle") {
      ph.type = PhaseSpec::Type::Circle;
      ph.radius = p.at("radius_m");
      ph.omega = p.at("omega_rps");
      ph.duration = p.at("duration_s");
    } else {
      throw std::runtime_error("unknown phase type " + type);
    }
    sc.trajectory.phases.push_back(ph);
  }
  const json& n = j.at("noise");
  sc.noise.pr_sigma0 = n.at("pr_sigma0_m");
  sc.noise.cp_sigma0 = n.at("cp_sigma0_m");
  sc.noise.doppler_sigma = n.at("doppler_sigma_ms");
  sc.noise.gyro_bias_dph = n.at("gyro_bias_dph");
  sc.noise.accel_bias_mgal = n.at("accel_bias_mgal");
  sc.noise.arw_dps_sqrth = n.at("arw_dps_sqrth");
  sc.noise.vrw_ms_sqrth = n.at("vrw_ms_sqrth");
  sc.noise.odo_v_sigma = n.at("odo_v_sigma_ms");
  sc.noise.odo_w_sigma_dps = n.at("odo_w_sigma_dps");
  sc.noise.s_v_rw = n.at("s_v_rw");
  sc.noise.s_omega_rw = n.at("s_omega_rw");
  sc.noise.gnss_hz = n.at("gnss_hz");
  sc.noise.imu_hz = n.at("imu_hz");
  sc.noise.odo_hz = n.at("odo_hz");
  const json& tc = j.at("true_calibration");
  sc.truth.p_bm = vec3_from(tc.at("p_bm_m"));
  sc.truth.rpy_bm_deg = vec3_from(tc.at("rpy_bm_deg"));
  sc.truth.s_v = tc.at("s_v");
  sc.truth.s_omega = tc.at("s_omega");
  sc.truth.lever = vec3_from(tc.at("lever_arm_m"));
  const json& f = j.at("faults");
  for (const auto& o : f.at("pr_outliers")) {
    FaultSpec::PrOutlier fo;
    fo.t = o.at("t");
    fo.sat = o.at("sat");
    fo.magnitude = o.at("magnitude_m");
    sc.faults.pr_outliers.push_back(fo);
  }
  for (const auto& s : f.at("cycle_slips")) {
    FaultSpec::CycleSlip cs;
    cs.t = s.at("t");
    cs.sat = s.at("sat");
    cs.band = s.at("band");
    cs.cycles = s.at("cycles");
    sc.faults.cycle_slips.push_back(cs);
  }
  sc.faults.lever_error = vec3_from(f.at("lever_error_m"));
  return sc;
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
  json j;
  j["window_size"] = c.window_size;
  j["mode"] = {{"ambiguity_resolution", c.ambiguity_resolution},
               {"lever_arm", c.lever_online ? "online" : "fixed"}};
  j["gnss"] = {{"sigma_pr0_m", c.sigma_pr0},
               {"sigma_cp0_m", c.sigma_cp0},
               {"sigma_doppler_ms", c.sigma_doppler},
               {"outlier_screening", c.outlier_screening},
               {"stage1_gate", c.stage1.gate},
               {"stage2_gate", c.stage2.gate},
               {"ratio_threshold", c.ratio_threshold},
               {"ar_sigma_cycles", c.ar_sigma_cycles},
               {"clock_drift_rw_ms", c.clock_drift_rw},
               {"amb_prior_cycles", c.amb_prior_cycles},
               {"amb_drop_after_epochs", c.amb_drop_after_epochs}};
  j["imu"] = {{"accel_density", c.imu_noise.accel_density},
              {"gyro_density", c.imu_noise.gyro_density},
              {"ba_rw", c.imu_noise.ba_rw},
              {"bg_rw", c.imu_noise.bg_rw},
              {"prior_ba", c.prior_ba},
              {"prior_bg", c.prior_bg}};
  j["odometer"] = {{"sigma_v_ms", c.odo_noise.sigma_v},
                   {"sigma_omega_rads", c.odo_noise.sigma_omega},
                   {"s_v_rw", c.s_v_rw},
                   {"s_omega_rw", c.s_omega_rw}};
  j["motion"] = {{"enabled", c.motion_constraints},
                 {"zupt_gate_dps", c.motion.zupt_gate_dps},
                 {"nhc_gate_dps", c.motion.nhc_gate_dps},
                 {"nhc_min_speed_ms", c.motion.nhc_min_speed},
                 {"zupt_sigma_ms", c.zupt_sigma},
                 {"nhc_sigma_ms", c.nhc_sigma}};
  j["initial_calibration"] = {{"p_bm_m", vec3_json(c.init_p_bm)},
                              {"rpy_bm_deg", vec3_json(c.init_rpy_bm_deg)},
                              {"s_v", c.init_s_v},
                              {"s_omega", c.init_s_omega},
                              {"prior_translation_m", c.prior_translation},
                              {"prior_rotation_deg", c.prior_rotation_deg},
                              {"prior_scale", c.prior_scale},
                              {"lever_from_config", c.lever_from_config},
                              {"lever_m", vec3_json(c.lever)},
                              {"lever_prior_m", c.lever_prior}};
  j["nav_priors"] = {{"pos_m", c.prior_pos},
                     {"vel_ms", c.prior_vel},
                     {"att_rad", c.prior_att},
                     {"clock_drift_ms", c.prior_clock_drift}};
  j["solver"] = {{"max_iterations", c.solver.max_iterations},
                 {"gradient_tol", c.solver.gradient_tol},
                 {"step_tol", c.solver.step_tol},
                 {"huber_delta", c.solver.huber_delta}};
  return j.dump(2);
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  PipelineConfig c;
  c.window_size = j.value("window_size", c.window_size);
  if (j.contains("mode")) {
    c.ambiguity_resolution =
        j["mode"].value("ambiguity_resolution", c.ambiguity_resolution);
    c.lever_online = j["mode"].value("lever_arm", "fixed") == std::string("online");
  }
  if (j.contains("gnss")) {
    const json& g = j["gnss"];
    c.sigma_pr0 = g.value("sigma_pr0_m", c.sigma_pr0);
    c.sigma_cp0 = g.value("sigma_cp0_m", c.sigma_cp0);
    c.sigma_doppler = g.value("sigma_doppler_ms", c.sigma_doppler);
    c.outlier_screening = g.value("outlier_screening", c.outlier_screening);
    c.stage1.gate = g.value("stage1_gate", c.stage1.gate);
    c.stage2.gate = g.value("stage2_gate", c.stage2.gate);
    c.ratio_threshold = g.value("ratio_threshold", c.ratio_threshold);
    c.ar_sigma_cycles = g.value("ar_sigma_cycles", c.ar_sigma_cycles);
    c.clock_drift_rw = g.value("clock_drift_rw_ms", c.clock_drift_rw);
    c.amb_prior_cycles = g.value("amb_prior_cycles", c.amb_prior_cycles);
    c.amb_drop_after_epochs = g.value("amb_drop_after_epochs", c.amb_drop_after_epochs);
  }
  if (j.contains("imu")) {
    const json& g = j["imu"];
    c.imu_noise.accel_density = g.value("accel_density", c.imu_noise.accel_density);
    c.imu_noise.gyro_density = g.value("gyro_density", c.imu_noise.gyro_density);
    c.imu_noise.ba_rw = g.value("ba_rw", c.imu_noise.ba_rw);
    c.imu_noise.bg_rw = g.value("bg_rw", c.imu_noise.bg_rw);
    c.prior_ba = g.value("prior_ba", c.prior_ba);
    c.prior_bg = g.value("prior_bg", c.prior_bg);
  }
  if (j.contains("odometer")) {
    const json& g = j["odometer"];
    c.odo_noise.sigma_v = g.value("sigma_v_ms", c.odo_noise.sigma_v);
    c.odo_noise.sigma_omega = g.value("sigma_omega_rads", c.odo_noise.sigma_omega);
    c.s_v_rw = g.value("s_v_rw", c.s_v_rw);
    c.s_omega_rw = g.value("s_omega_rw", c.s_omega_rw);
  }
  if (j.contains("motion")) {
    const json& g = j["motion"];
    c.motion_constraints = g.value("enabled", c.motion_constraints);
    c.motion.zupt_gate_dps = g.value("zupt_gate_dps", c.motion.zupt_gate_dps);
    c.motion.nhc_gate_dps = g.value("nhc_gate_dps", c.motion.nhc_gate_dps);
    c.motion.nhc_min_speed = g.value("nhc_min_speed_ms", c.motion.nhc_min_speed);
    c.zupt_sigma = g.value("zupt_sigma_ms", c.zupt_sigma);
    c.nhc_sigma = g.value("nhc_sigma_ms", c.nhc_sigma);
  }
  if (j.contains("initial_calibration")) {
    const json& g = j["initial_calibration"];
    if (g.contains("p_bm_m")) c.init_p_bm = vec3_from(g["p_bm_m"]);
    if (g.contains("rpy_bm_deg")) c.init_rpy_bm_deg = vec3_from(g["rpy_bm_deg"]);
    c.init_s_v = g.value("s_v", c.init_s_v);
    c.init_s_omega = g.value("s_omega", c.init_s_omega);
    c.prior_translation = g.value("prior_translation_m", c.prior_translation);
    c.prior_rotation_deg = g.value("prior_rotation_deg", c.prior_rotation_deg);
    c.prior_scale = g.value("prior_scale", c.prior_scale);
    c.lever_from_config = g.value("lever_from_config", c.lever_from_config);
    if (g.contains("lever_m")) c.lever = vec3_from(g["lever_m"]);
    c.lever_prior = g.value("lever_prior_m", c.lever_prior);
  }
  if (j.contains("nav_priors")) {
    const json& g = j["nav_priors"];
    c.prior_pos = g.value("pos_m", c.prior_pos);
    c.prior_vel = g.value("vel_ms", c.prior_vel);
    c.prior_att = g.value("att_rad", c.prior_att);
    c.prior_clock_drift = g.value("clock_drift_ms", c.prior_clock_drift);
  }
  if (j.contains("solver")) {
    const json& g = j["solver"];
    c.solver.max_iterations = g.value("max_iterations", c.solver.max_iterations);
    c.solver.gradient_tol = g.value("gradient_tol", c.solver.gradient_tol);
    c.solver.step_tol = g.value("step_tol", c.solver.step_tol);
    c.solver.huber_delta = g.value("huber_delta", c.solver.huber_delta);
  }
  return c;
}

namespace {

void write_gnss_csv(const std::string& path,
                    const std::vector<EpochObservations>& epochs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,sat,band,P,L_cycles,D,sat_x,sat_y,sat_z,sat_vx,sat_vy,sat_vz,"
         "sat_clk,sat_clk_drift\n";
  for (const auto& epoch : epochs) {
    for (const auto& m : epoch) {
      out << fmt("%.6f", m.t) << ',' << m.sat << ',' << m.band << ','
          << fmt("%.8f", m.pseudorange) << ',' << fmt("%.8f", m.carrier_cycles) << ','
          << fmt("%.9f", m.doppler) << ',' << fmt("%.6f", m.sat_pos.x()) << ','
          << fmt("%.6f", m.sat_pos.y()) << ',' << fmt("%.6f", m.sat_pos.z()) << ','
          << fmt("%.9f", m.sat_vel.x()) << ',' << fmt("%.9f", m.sat_vel.y()) << ','
          << fmt("%.9f", m.sat_vel.z()) << ',' << fmt("%.15e", m.sat_clk) << ','
          << fmt("%.15e", m.sat_clk_drift) << '\n';
    }
  }
}

std::vector<EpochObservations> read_gnss_csv(const std::string& path,
                                             const Vec3& receiver_pos,
                                             const GeodeticOrigin& origin,
                                             double gnss_hz) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const Mat3 r_en = ecef_enu_rotation(origin);
  std::vector<EpochObservations> epochs;
  std::string line;
  int lineno = 0;
  std::getline(in, line);  // header
  ++lineno;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 14) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 14 fields, got " + std::to_string(f.size()));
    }
    GnssRawMeasurement m;
    m.t = to_double(f[0], path, lineno);
    m.sat = int(to_double(f[1], path, lineno));
    m.band = int(to_double(f[2], path, lineno));
    m.wavelength = band_wavelength(m.band);
    m.pseudorange = to_double(f[3], path, lineno);
    m.carrier_cycles = to_double(f[4], path, lineno);
    m.doppler = to_double(f[5], path, lineno);
    m.sat_pos = Vec3(to_double(f[6], path, lineno), to_double(f[7], path, lineno),
                     to_double(f[8], path, lineno));
    m.sat_vel = Vec3(to_double(f[9], path, lineno), to_double(f[10], path, lineno),
                     to_double(f[11], path, lineno));
    m.sat_clk = to_double(f[12], path, lineno);
    m.sat_clk_drift = to_double(f[13], path, lineno);
    const Vec3 u_enu = (r_en.transpose() * (m.sat_pos - receiver_pos)).normalized();
    m.elevation = std::asin(std::clamp(u_enu.z(), -1.0, 1.0));
    m.azimuth = std::atan2(u_enu.x(), u_enu.y());
    if (m.elevation <= 0.0) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": satellite below horizon at load");
    }
    const int k = int(std::llround(m.t * gnss_hz));
    if (k >= int(epochs.size())) epochs.resize(k + 1);
    epochs[k].push_back(m);
  }
  return epochs;
}

}  // namespace

void write_dataset(const SimulatedDataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_gnss_csv(dir + "/gnss_rover.csv", data.rover);
  write_gnss_csv(dir + "/gnss_base.csv", data.base);

  {
    std::ofstream out(dir + "/imu.csv", std::ios::binary);
    out << "t,ax,ay,az,gx,gy,gz\n";
    for (const auto& s : data.imu) {
      out << fmt("%.6f", s.t) << ',' << fmt("%.12e", s.accel.x()) << ','
          << fmt("%.12e", s.accel.y()) << ',' << fmt("%.12e", s.accel.z()) << ','
          << fmt("%.12e", s.gyro.x()) << ',' << fmt("%.12e", s.gyro.y()) << ','
          << fmt("%.12e", s.gyro.z()) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/odo.csv", std::ios::binary);
    out << "t,v,omega\n";
    for (const auto& s : data.odo) {
      out << fmt("%.6f", s.t) << ',' << fmt("%.12e", s.v) << ','
          << fmt("%.12e", s.omega) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/truth.csv", std::ios::binary);
    out << "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,bax,bay,baz,bgx,bgy,bgz,"
           "heading,speed,omega,s_v,s_omega\n";
    for (const auto& e : data.truth) {
      out << fmt("%.6f", e.t);
      for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9f", e.p_n_b(i));
      for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9f", e.v_n_b(i));
      out << ',' << fmt("%.12f", e.q_nb.w()) << ',' << fmt("%.12f", e.q_nb.x()) << ','
          << fmt("%.12f", e.q_nb.y()) << ',' << fmt("%.12f", e.q_nb.z());
      for (int i = 0; i < 3; ++i) out << ',' << fmt("%.12e", e.ba(i));
      for (int i = 0; i < 3; ++i) out << ',' << fmt("%.12e", e.bg(i));
      out << ',' << fmt("%.9f", e.heading) << ',' << fmt("%.9f", e.speed) << ','
          << fmt("%.9f", e.omega) << ',' << fmt("%.12e", e.s_v) << ','
          << fmt("%.12e", e.s_omega) << '\n';
    }
  }
  // scenario echo with derived anchors for the estimator
  {
    json j = json::parse(scenario_to_json(data.scenario));
    j["derived"] = {
        {"base_pos_ecef", vec3_json(data.base_pos_ecef)},
        {"q_nw", {data.q_nw.w(), data.q_nw.x(), data.q_nw.y(), data.q_nw.z()}},
        {"assumed_lever_m", vec3_json(data.assumed_lever)},
        {"pdop", data.pdop}};
    write_text_file(dir + "/scenario.json", j.dump(2));
  }
  {
    json j;
    json nsd = json::object();
    for (const auto& [key, n] : data.true_n_sd) {
      nsd[std::to_string(key.first) + "_" + std::to_string(key.second)] = n;
    }
    j["true_n_sd"] = nsd;
    json outliers = json::array();
    for (const auto& o : data.applied_outliers) {
      outliers.push_back({{"t", o.t}, {"sat", o.sat}, {"magnitude_m", o.magnitude}});
    }
    j["applied_outliers"] = outliers;
    json slips = json::array();
    for (const auto& s : data.applied_slips) {
      slips.push_back({{"t", s.t}, {"sat", s.sat}, {"band", s.band}, {"cycles", s.cycles}});
    }
    j["applied_slips"] = slips;
    j["true_calibration"] =
        json::parse(scenario_to_json(data.scenario))["true_calibration"];
    write_text_file(dir + "/truth_aux.json", j.dump(2));
  }
}

SimulatedDataset load_dataset(const std::string& dir) {
  SimulatedDataset data;
  const json j = json::parse(read_text_file(dir + "/scenario.json"));
  data.scenario = scenario_from_json(j.dump());
  const json& d = j.at("derived");
  data.base_pos_ecef = vec3_from(d.at("base_pos_ecef"));
  data.q_nw = Quat(d.at("q_nw").at(0), d.at("q_nw").at(1), d.at("q_nw").at(2),
                   d.at("q_nw").at(3));
  data.assumed_lever = vec3_from(d.at("assumed_lever_m"));
  data.pdop = d.value("pdop", 0.0);

  const Vec3 origin_e = geodetic_to_ecef(data.scenario.origin);
  data.rover = read_gnss_csv(dir + "/gnss_rover.csv", origin_e, data.scenario.origin,
                             data.scenario.noise.gnss_hz);
  data.base = read_gnss_csv(dir + "/gnss_base.csv", data.base_pos_ecef,
                            data.scenario.origin, data.scenario.noise.gnss_hz);

  {
    std::ifstream in(dir + "/imu.csv");
    if (!in) throw std::runtime_error("cannot open " + dir + "/imu.csv");
    std::string line;
    int lineno = 1;
    std::getline(in, line);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != 7)
        throw std::runtime_error(dir + "/imu.csv:" + std::to_string(lineno) +
                                 ": expected 7 fields");
      ImuSample s;
      s.t = to_double(f[0], "imu.csv", lineno);
      s.accel = Vec3(to_double(f[1], "imu.csv", lineno),
                     to_double(f[2], "imu.csv", lineno),
                     to_double(f[3], "imu.csv", lineno));
      s.gyro = Vec3(to_double(f[4], "imu.csv", lineno),
                    to_double(f[5], "imu.csv", lineno),
                    to_double(f[6], "imu.csv", lineno));
      data.imu.push_back(s);
    }
  }
  {
    std::ifstream in(dir + "/odo.csv");
    if (!in) throw std::runtime_error("cannot open " + dir + "/odo.csv");
    std::string line;
    int lineno = 1;
    std::getline(in, line);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != 3)
        throw std::runtime_error(dir + "/odo.csv:" + std::to_string(lineno) +
                                 ": expected 3 fields");
      OdoSample s;
      s.t = to_double(f[0], "odo.csv", lineno);
      s.v = to_double(f[1], "odo.csv", lineno);
      s.omega = to_double(f[2], "odo.csv", lineno);
      data.odo.push_back(s);
    }
  }
  {
    std::ifstream in(dir + "/truth.csv");
    if (in) {
      std::string line;
      int lineno = 1;
      std::getline(in, line);
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 22)
          throw std::runtime_error(dir + "/truth.csv:" + std::to_string(lineno) +
                                   ": expected 22 fields");
        TruthEpoch e;
        int i = 0;
        auto next = [&]() { return to_double(f[i++], "truth.csv", lineno); };
        e.t = next();
        e.p_n_b = Vec3(next(), next(), next());
        e.v_n_b = Vec3(next(), next(), next());
        const double qw = next(), qx = next(), qy = next(), qz = next();
        e.q_nb = Quat(qw, qx, qy, qz);
        e.ba = Vec3(next(), next(), next());
        e.bg = Vec3(next(), next(), next());
        e.heading = next();
        e.speed = next();
        e.omega = next();
        e.s_v = next();
        e.s_omega = next();
        data.truth.push_back(e);
      }
    }
  }
  // truth aux (optional for estimator runs)
  try {
    const json aux = json::parse(read_text_file(dir + "/truth_aux.json"));
    for (const auto& [key, val] : aux.at("true_n_sd").items()) {
      const auto us = key.find('_');
      data.true_n_sd[{std::stoi(key.substr(0, us)), std::stoi(key.substr(us + 1))}] =
          val.get<long long>();
    }
    for (const auto& o : aux.at("applied_outliers")) {
      FaultSpec::PrOutlier fo;
      fo.t = o.at("t");
      fo.sat = o.at("sat");
      fo.magnitude = o.at("magnitude_m");
      data.applied_outliers.push_back(fo);
    }
  } catch (const std::exception&) {
    // dataset without truth aux is fine for calibration runs
  }
  return data;
}

void write_calibration_csv(const std::string& path, const PipelineResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,px,py,pz,roll_deg,pitch_deg,yaw_deg,s_v,s_omega,"
         "lx,ly,lz,std_px,std_py,std_pz,std_roll_deg,std_pitch_deg,std_yaw_deg,"
         "std_s_v,std_s_omega,std_lx,std_ly,std_lz\n";
  for (const auto& r : result.calib) {
    out << fmt("%.3f", r.t);
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9f", r.p_bm(i));
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9f", r.rpy_bm(i) * kRadToDeg);
    out << ',' << fmt("%.12e", r.s_v) << ',' << fmt("%.12e", r.s_omega);
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9f", r.lever(i));
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9e", r.std(i));
    for (int i = 3; i < 6; ++i) out << ',' << fmt("%.9e", r.std(i) * kRadToDeg);
    out << ',' << fmt("%.9e", r.std(6)) << ',' << fmt("%.9e", r.std(7));
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9e", r.lever_std(i));
    out << '\n';
  }
}

std::vector<CalibRecord> read_calibration_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<CalibRecord> out;
  std::string line;
  int lineno = 1;
  std::getline(in, line);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 23)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 23 fields");
    CalibRecord r;
    int i = 0;
    auto next = [&]() { return to_double(f[i++], path, lineno); };
    r.t = next();
    r.p_bm = Vec3(next(), next(), next());
    r.rpy_bm = Vec3(next(), next(), next()) * kDegToRad;
    r.s_v = next();
    r.s_omega = next();
    r.lever = Vec3(next(), next(), next());
    for (int k = 0; k < 3; ++k) r.std(k) = next();
    for (int k = 3; k < 6; ++k) r.std(k) = next() * kDegToRad;
    r.std(6) = next();
    r.std(7) = next();
    r.lever_std = Vec3(next(), next(), next());
    out.push_back(r);
  }
  return out;
}

void write_trajectory_csv(const std::string& path, const PipelineResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,bax,bay,baz,bgx,bgy,bgz,clock_drift\n";
  for (const auto& r : result.traj) {
    out << fmt("%.3f", r.t);
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9f", r.p_n(i));
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.9f", r.v_n(i));
    out << ',' << fmt("%.12f", r.q_nb.w()) << ',' << fmt("%.12f", r.q_nb.x()) << ','
        << fmt("%.12f", r.q_nb.y()) << ',' << fmt("%.12f", r.q_nb.z());
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.12e", r.ba(i));
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.12e", r.bg(i));
    out << ',' << fmt("%.9f", r.clock_drift) << '\n';
  }
}

std::vector<TrajRecord> read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<TrajRecord> out;
  std::string line;
  int lineno = 1;
  std::getline(in, line);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 18)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 18 fields");
    TrajRecord r;
    int i = 0;
    auto next = [&]() { return to_double(f[i++], path, lineno); };
    r.t = next();
    r.p_n = Vec3(next(), next(), next());
    r.v_n = Vec3(next(), next(), next());
    const double qw = next(), qx = next(), qy = next(), qz = next();
    r.q_nb = Quat(qw, qx, qy, qz);
    r.ba = Vec3(next(), next(), next());
    r.bg = Vec3(next(), next(), next());
    r.clock_drift = next();
    out.push_back(r);
  }
  return out;
}

void write_fix_log_csv(const std::string& path, const PipelineResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,dim,q1,q2,ratio,accepted,pairs\n";
  for (const auto& f : result.fixes) {
    out << fmt("%.3f", f.t) << ',' << f.dim << ',' << fmt("%.6e", f.q1) << ','
        << fmt("%.6e", f.q2) << ',' << fmt("%.4f", f.ratio) << ','
        << (f.accepted ? 1 : 0) << ',';
    for (size_t i = 0; i < f.integers.size(); ++i) {
      if (i) out << ';';
      out << f.bands[i] << ':' << f.sat_ref[i] << ':' << f.sat_other[i] << ':'
          << f.integers[i];
    }
    out << '\n';
  }
}

void write_outlier_csv(const std::string& path,
                       const std::vector<OutlierReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,sat,band,stage,statistic,threshold,rejected\n";
  for (const auto& r : reports) {
    out << fmt("%.3f", r.t) << ',' << r.sat << ',' << r.band << ',' << r.stage << ','
        << fmt("%.6f", r.statistic) << ',' << fmt("%.6f", r.threshold) << ','
        << (r.rejected ? 1 : 0) << '\n';
  }
}

void write_observability_json(const std::string& path, const ObservabilityReport& rep,
                              const std::vector<ConvergenceVerdict>& verdicts) {
  json j;
  j["singular_values"] = std::vector<double>(
      rep.singular_values.data(), rep.singular_values.data() + rep.singular_values.size());
  j["rank"] = rep.rank;
  j["tolerance"] = rep.tol;
  json basis = json::array();
  for (int c = 0; c < rep.null_basis.cols(); ++c) {
    json col = json::array();
    for (int r = 0; r < rep.null_basis.rows(); ++r) col.push_back(rep.null_basis(r, c));
    basis.push_back(col);
  }
  j["null_basis"] = basis;
  static const char* axes[6] = {"px", "py", "pz", "rx", "ry", "rz"};
  json flags = json::object();
  for (int i = 0; i < 6; ++i) flags[axes[i]] = rep.identifiable[i];
  j["identifiable"] = flags;
  if (!verdicts.empty()) {
    json v = json::array();
    for (const auto& cv : verdicts) {
      v.push_back({{"parameter", cv.parameter},
                   {"observable", cv.observable},
                   {"prior_std", cv.prior_std},
                   {"final_std", cv.final_std},
                   {"convergence_t", cv.convergence_t}});
    }
    j["empirical"] = v;
  }
  write_text_file(path, j.dump(2));
}

std::string error_json(const std::string& code, const std::string& message,
                       const std::string& context) {
  json j;
  j["code"] = code;
  j["message"] = message;
  j["context"] = context;
  return j.dump();
}

}  // namespace giocal
