#pragma once

#include <string>
#include <vector>

#include "giocal/observability.hpp"
#include "giocal/pipeline.hpp"
#include "giocal/simulator.hpp"

namespace giocal {

// Dataset directory layout:
//   gnss_rover.csv, gnss_base.csv  t,sat,band,P,L_cycles,D,sat_x..sat_vz,
//                                  sat_clk,sat_clk_drift
//   imu.csv                        t,ax,ay,az,gx,gy,gz
//   odo.csv                        t,v,omega
//   truth.csv                      n-frame IMU pose/velocity, biases, vehicle
//                                  kinematics, true scale factors
//   scenario.json                  full scenario echo (spec + seed + derived
//                                  anchors: base position, initial attitude,
//                                  assumed lever arm)
//   truth_aux.json                 truth that the estimator must not read:
//                                  calibration, SD integers, injected faults
void write_dataset(const SimulatedDataset& data, const std::string& dir);

// Loads the files back; elevations/azimuths are recomputed from the recorded
// satellite positions and the nominal receiver locations. Throws
// std::runtime_error with file/line context on malformed rows.
SimulatedDataset load_dataset(const std::string& dir);

std::string scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const std::string& text);

std::string pipeline_config_to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const std::string& text);

void write_calibration_csv(const std::string& path, const PipelineResult& result);
void write_trajectory_csv(const std::string& path, const PipelineResult& result);
void write_fix_log_csv(const std::string& path, const PipelineResult& result);
void write_outlier_csv(const std::string& path, const std::vector<OutlierReport>& reports);

std::vector<CalibRecord> read_calibration_csv(const std::string& path);
std::vector<TrajRecord> read_trajectory_csv(const std::string& path);

void write_observability_json(const std::string& path, const ObservabilityReport& rep,
                              const std::vector<ConvergenceVerdict>& verdicts);

// Machine-readable error channel: {"code": .., "message": .., "context": ..}.
std::string error_json(const std::string& code, const std::string& message,
                       const std::string& context);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace giocal
