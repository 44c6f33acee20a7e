#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "giocal/harness.hpp"
#include "giocal/io.hpp"
#include "giocal/observability.hpp"
#include "giocal/pipeline.hpp"
#include "giocal/simulator.hpp"

namespace {

using namespace giocal;
using nlohmann::json;

Scenario scenario_by_name(const std::string& name) {
  if (name == "default") return default_scenario();
  if (name == "dr") return dr_scenario();
  return scenario_from_json(read_text_file(name));
}

void write_manifest(const std::string& out_dir, const std::string& subcommand,
                    const json& args) {
  json j;
  j["subcommand"] = subcommand;
  j["args"] = args;
  write_text_file(out_dir + "/run_manifest.json", j.dump(2));
}

Vec3 parse_vec3(const std::string& s) {
  Vec3 v;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &v.x(), &v.y(), &v.z()) != 3) {
    throw std::runtime_error("expected 'x,y,z', got '" + s + "'");
  }
  return v;
}

void apply_mode(PipelineConfig* cfg, const std::string& mode, const std::string& lever) {
  if (mode == "tc-ar") cfg->ambiguity_resolution = true;
  else if (mode == "tc-war") cfg->ambiguity_resolution = false;
  else if (!mode.empty()) throw std::runtime_error("unknown mode " + mode);
  if (lever == "online") cfg->lever_online = true;
  else if (lever == "fixed") cfg->lever_online = false;
  else if (!lever.empty()) throw std::runtime_error("unknown lever option " + lever);
}

int cmd_simulate(const std::string& scenario_name, std::uint64_t seed, double duration,
                 int n_outliers, const std::string& lever_fault,
                 const std::string& out_dir) {
  Scenario sc = scenario_by_name(scenario_name);
  sc.seed = seed;
  if (duration > 0.0) sc.duration = duration;
  if (n_outliers > 0) {
    for (int i = 0; i < n_outliers; ++i) {
      FaultSpec::PrOutlier o;
      o.t = std::floor((i + 1) * sc.duration / (n_outliers + 1));
      o.sat = -1;
      const double frac = std::fmod(0.37 * (i + 1), 1.0);
      o.magnitude = (5.0 + 5.0 * frac) * (i % 2 == 0 ? 1.0 : -1.0);
      sc.faults.pr_outliers.push_back(o);
    }
  }
  if (!lever_fault.empty()) sc.faults.lever_error = parse_vec3(lever_fault);

  const SimulatedDataset data = synthesize_measurements(sc);
  std::filesystem::create_directories(out_dir);
  write_dataset(data, out_dir);
  write_manifest(out_dir, "simulate",
                 {{"scenario", scenario_name},
                  {"seed", seed},
                  {"duration", sc.duration},
                  {"pr_outliers", n_outliers},
                  {"lever_fault", lever_fault}});
  if (!data.constellation_warning.empty()) {
    std::cerr << "warning: " << data.constellation_warning << "\n";
  }
  std::cout << "dataset written to " << out_dir << " (pdop " << data.pdop << ")\n";
  return 0;
}

int cmd_calibrate(const std::string& dataset_dir, const std::string& config_path,
                  const std::string& mode, const std::string& lever, double until,
                  const std::string& out_dir) {
  SimulatedDataset data = load_dataset(dataset_dir);
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = pipeline_config_from_json(read_text_file(config_path));
  apply_mode(&cfg, mode, lever);
  if (until > 0.0) {
    const int keep = int(until * data.scenario.noise.gnss_hz) + 1;
    if (keep < int(data.rover.size())) {
      data.rover.resize(keep);
      data.base.resize(keep);
    }
  }
  const PipelineResult result = run_calibration(data, cfg);
  std::filesystem::create_directories(out_dir);
  write_calibration_csv(out_dir + "/calibration.csv", result);
  write_trajectory_csv(out_dir + "/trajectory.csv", result);
  write_fix_log_csv(out_dir + "/fixes.csv", result);
  write_outlier_csv(out_dir + "/outliers.csv", result.outliers);
  write_text_file(out_dir + "/config_used.json", pipeline_config_to_json(cfg));
  write_manifest(out_dir, "calibrate",
                 {{"dataset", dataset_dir},
                  {"config", config_path},
                  {"mode", mode},
                  {"lever", lever},
                  {"until", until}});
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "calibration written to " << out_dir << " (" << result.epochs
            << " epochs, " << result.fixes.size() << " fix attempts)\n";
  return result.diverged ? 2 : 0;
}

int cmd_observability(const std::string& dataset_dir, const std::string& calib_csv,
                      const std::string& source, const std::string& out_path,
                      double prior_trans, double prior_rot_deg, double prior_scale) {
  const SimulatedDataset data = load_dataset(dataset_dir);

  Vec3 p_bm;
  Mat3 r_mb;
  if (source == "estimate" && !calib_csv.empty()) {
    const auto series = read_calibration_csv(calib_csv);
    if (series.empty()) throw std::runtime_error("empty calibration series");
    const auto& last = series.back();
    p_bm = last.p_bm;
    r_mb = rpy_to_rot(last.rpy_bm.x(), last.rpy_bm.y(), last.rpy_bm.z()).transpose();
  } else {
    p_bm = data.scenario.truth.p_bm;
    r_mb = quat_to_rot(data.scenario.truth.q_bm()).transpose();
  }

  std::vector<Mat6> blocks;
  for (const auto& e : data.truth) {
    VirtualBodyRates r;
    r.t = e.t;
    const Mat3 r_nb = quat_to_rot(e.q_nb);
    r.v_b = r_nb.transpose() * e.v_n_b;
    r.omega_b = r_nb.transpose() * Vec3(0.0, 0.0, e.omega);
    blocks.push_back(obs_block(r, r_mb, p_bm));
  }
  const ObservabilityReport rep = stack_and_rank(blocks);

  std::vector<ConvergenceVerdict> verdicts;
  if (!calib_csv.empty()) {
    const auto series = read_calibration_csv(calib_csv);
    std::vector<CalibSeriesPoint> pts;
    for (const auto& r : series) {
      CalibSeriesPoint p;
      p.t = r.t;
      p.value << r.p_bm(0), r.p_bm(1), r.p_bm(2), r.rpy_bm(0), r.rpy_bm(1),
          r.rpy_bm(2), r.s_v, r.s_omega;
      p.std = r.std;
      pts.push_back(p);
    }
    Eigen::Matrix<double, 8, 1> prior;
    prior << prior_trans, prior_trans, prior_trans, prior_rot_deg * kDegToRad,
        prior_rot_deg * kDegToRad, prior_rot_deg * kDegToRad, prior_scale, prior_scale;
    verdicts = empirical_crosscheck(pts, prior);
  }
  write_observability_json(out_path, rep, verdicts);

  static const char* axes[6] = {"px", "py", "pz", "rx", "ry", "rz"};
  std::cout << "rank " << rep.rank << "; singular values:";
  for (int i = 0; i < rep.singular_values.size(); ++i)
    std::cout << ' ' << rep.singular_values(i);
  std::cout << "\nidentifiable:";
  for (int i = 0; i < 6; ++i)
    std::cout << ' ' << axes[i] << '=' << (rep.identifiable[i] ? "yes" : "no");
  std::cout << "\n";
  for (const auto& v : verdicts) {
    std::cout << "  " << v.parameter << ": "
              << (v.observable ? "observable" : "unobservable") << " (final std "
              << v.final_std << ", prior " << v.prior_std << ")\n";
  }
  return 0;
}

int cmd_dr_eval(const std::string& dataset_dir, const std::string& calib_csv,
                const std::string& traj_csv, double outage_start,
                const std::string& out_path) {
  const SimulatedDataset data = load_dataset(dataset_dir);
  const auto calib_series = read_calibration_csv(calib_csv);
  const auto traj = read_trajectory_csv(traj_csv);
  if (calib_series.empty() || traj.empty())
    throw std::runtime_error("empty calibration or trajectory input");

  const CalibRecord* calib = &calib_series.back();
  for (const auto& r : calib_series) {
    if (r.t <= outage_start) calib = &r;
  }
  const TrajRecord* init = &traj.front();
  for (const auto& r : traj) {
    if (r.t <= outage_start) init = &r;
  }

  DrConfig dc;
  const auto points = dead_reckon(data, *calib, *init, init->t, dc);
  const ErrorSummary s = error_metrics(points, data.truth);

  json j;
  j["outage_start"] = init->t;
  j["max_horizontal_m"] = s.max_horizontal;
  j["rmse_horizontal_m"] = s.rmse_horizontal;
  j["max_vertical_m"] = s.max_vertical;
  j["rmse_vertical_m"] = s.rmse_vertical;
  j["count"] = s.count;
  write_text_file(out_path, j.dump(2));
  std::cout << "dead-reckoning horizontal MAX " << s.max_horizontal << " m, RMSE "
            << s.rmse_horizontal << " m over " << s.count << " points\n";
  return 0;
}

int cmd_montecarlo(const std::string& scenario_name, const std::string& config_path,
                   const std::string& mode, const std::string& lever, int n_seeds,
                   std::uint64_t first_seed, int threads, const std::string& out_dir) {
  MonteCarloOptions opt;
  opt.scenario = scenario_by_name(scenario_name);
  if (!config_path.empty())
    opt.config = pipeline_config_from_json(read_text_file(config_path));
  apply_mode(&opt.config, mode, lever);
  for (int i = 0; i < n_seeds; ++i) opt.seeds.push_back(first_seed + i);
  opt.threads = threads;

  const MonteCarloSummary summary = run_monte_carlo(opt);

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/mc_stats.csv", std::ios::binary);
    out << "seed,checkpoint_t,param,abs_error,reported_std,diverged\n";
    static const char* names[8] = {"px", "py", "pz", "roll", "pitch",
                                   "yaw", "s_v", "s_omega"};
    for (const auto& run : summary.runs) {
      auto dump_point = [&](const CalibErrors& e, double label) {
        for (int k = 0; k < 8; ++k) {
          out << run.seed << ',' << label << ',' << names[k] << ',' << e.abs_err(k)
              << ',' << e.std(k) << ',' << (run.diverged ? 1 : 0) << '\n';
        }
      };
      for (const auto& cp : run.at_checkpoints) dump_point(cp, cp.t);
      dump_point(run.final, -1.0);
    }
  }
  {
    json j;
    static const char* names[8] = {"px", "py", "pz", "roll", "pitch",
                                   "yaw", "s_v", "s_omega"};
    json means = json::object(), stds = json::object();
    for (int k = 0; k < 8; ++k) {
      means[names[k]] = summary.mean_abs_final(k);
      stds[names[k]] = summary.std_final(k);
    }
    j["mean_abs_final"] = means;
    j["std_final"] = stds;
    j["failures"] = summary.failures;
    j["runs"] = summary.runs.size();
    write_text_file(out_dir + "/mc_summary.json", j.dump(2));
  }
  write_manifest(out_dir, "montecarlo",
                 {{"scenario", scenario_name},
                  {"config", config_path},
                  {"mode", mode},
                  {"seeds", n_seeds},
                  {"first_seed", first_seed}});
  std::cout << "monte-carlo summary over " << summary.runs.size() << " runs ("
            << summary.failures << " failures): mean |X| "
            << summary.mean_abs_final(0) << " m, |Y| " << summary.mean_abs_final(1)
            << " m, |yaw| " << summary.mean_abs_final(5) * kRadToDeg << " deg\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tightly coupled GNSS/IMU/odometer online calibration toolkit"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "synthesize a dataset");
  std::string sim_scenario = "default", sim_out = "dataset", sim_lever_fault;
  std::uint64_t sim_seed = 1;
  double sim_duration = -1.0;
  int sim_outliers = 0;
  sim->add_option("--scenario", sim_scenario, "default, dr, or a scenario.json path");
  sim->add_option("--seed", sim_seed, "rng seed");
  sim->add_option("--duration", sim_duration, "override duration (s)");
  sim->add_option("--pr-outliers", sim_outliers, "inject N pseudo-range outliers (5-10 m)");
  sim->add_option("--lever-fault", sim_lever_fault, "assumed-lever offset 'x,y,z' (m)");
  sim->add_option("--out", sim_out, "output directory");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "run the sliding-window calibration");
  std::string cal_dataset, cal_config, cal_mode = "tc-ar", cal_lever = "fixed",
              cal_out = "out";
  double cal_until = -1.0;
  cal->add_option("--dataset", cal_dataset, "dataset directory")->required();
  cal->add_option("--config", cal_config, "pipeline config json");
  cal->add_option("--mode", cal_mode, "tc-ar or tc-war");
  cal->add_option("--lever", cal_lever, "fixed or online");
  cal->add_option("--until", cal_until, "process epochs up to this time only");
  cal->add_option("--out", cal_out, "output directory");

  // observability
  auto* obs = app.add_subcommand("observability", "rank analysis and crosscheck");
  std::string obs_dataset, obs_calib, obs_source = "truth",
              obs_out = "observability.json";
  double obs_pt = 0.5, obs_pr = 5.0, obs_ps = 0.02;
  obs->add_option("--dataset", obs_dataset, "dataset directory")->required();
  obs->add_option("--calibration", obs_calib, "calibration.csv for the crosscheck");
  obs->add_option("--source", obs_source, "truth or estimate");
  obs->add_option("--out", obs_out, "output json path");
  obs->add_option("--prior-translation", obs_pt, "prior std (m)");
  obs->add_option("--prior-rotation-deg", obs_pr, "prior std (deg)");
  obs->add_option("--prior-scale", obs_ps, "prior std");

  // dr-eval
  auto* dre = app.add_subcommand("dr-eval", "dead-reckoning evaluation");
  std::string dre_dataset, dre_calib, dre_traj, dre_out = "errors.json";
  double dre_outage = 100.0;
  dre->add_option("--dataset", dre_dataset, "dataset directory")->required();
  dre->add_option("--calibration", dre_calib, "calibration.csv")->required();
  dre->add_option("--trajectory", dre_traj, "trajectory.csv")->required();
  dre->add_option("--outage-start", dre_outage, "outage start time (s)");
  dre->add_option("--out", dre_out, "output errors.json");

  // montecarlo
  auto* mc = app.add_subcommand("montecarlo", "multi-seed calibration statistics");
  std::string mc_scenario = "default", mc_config, mc_mode = "tc-ar",
              mc_lever = "fixed", mc_out = "mc";
  int mc_seeds = 40, mc_threads = 4;
  std::uint64_t mc_first = 1;
  mc->add_option("--scenario", mc_scenario, "default, dr, or scenario.json");
  mc->add_option("--config", mc_config, "pipeline config json");
  mc->add_option("--mode", mc_mode, "tc-ar or tc-war");
  mc->add_option("--lever", mc_lever, "fixed or online");
  mc->add_option("--seeds", mc_seeds, "number of seeds");
  mc->add_option("--first-seed", mc_first, "first seed value");
  mc->add_option("--threads", mc_threads, "concurrent runs");
  mc->add_option("--out", mc_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return cmd_simulate(sim_scenario, sim_seed, sim_duration, sim_outliers,
                          sim_lever_fault, sim_out);
    }
    if (cal->parsed()) {
      return cmd_calibrate(cal_dataset, cal_config, cal_mode, cal_lever, cal_until,
                           cal_out);
    }
    if (obs->parsed()) {
      return cmd_observability(obs_dataset, obs_calib, obs_source, obs_out, obs_pt,
                               obs_pr, obs_ps);
    }
    if (dre->parsed()) {
      return cmd_dr_eval(dre_dataset, dre_calib, dre_traj, dre_outage, dre_out);
    }
    if (mc->parsed()) {
      return cmd_montecarlo(mc_scenario, mc_config, mc_mode, mc_lever, mc_seeds,
                            mc_first, mc_threads, mc_out);
    }
  } catch (const std::exception& e) {
    std::cerr << giocal::error_json("runtime_error", e.what(),
                                    argc > 1 ? argv[1] : "")
              << "\n";
    return 1;
  }
  return 0;
}
