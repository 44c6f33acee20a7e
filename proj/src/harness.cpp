#include "giocal/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <stdexcept>

namespace giocal {

std::vector<DrPoint> dead_reckon(const SimulatedDataset& data, const CalibRecord& calib,
                                 const TrajRecord& init, double outage_start,
                                 const DrConfig& config) {
  std::vector<DrPoint> out;
  Vec3 p = init.p_n;
  Quat q = init.q_nb;
  const Vec3 bg = init.bg;
  const Quat q_bm = rot_to_quat(
      rpy_to_rot(calib.rpy_bm.x(), calib.rpy_bm.y(), calib.rpy_bm.z()));
  OdometerIntrinsics intr;
  intr.s_v = calib.s_v;
  intr.s_omega = calib.s_omega;

  const double t_end = data.odo.empty() ? outage_start : data.odo.back().t;
  out.push_back({outage_start, p});
  for (double t0 = outage_start; t0 + config.block <= t_end + 1e-9; t0 += config.block) {
    const double t1 = t0 + config.block;
    auto imu_lo = std::lower_bound(data.imu.begin(), data.imu.end(), t0 - 1e-9,
                                   [](const ImuSample& a, double t) { return a.t < t; });
    auto imu_hi = std::upper_bound(data.imu.begin(), data.imu.end(), t1 + 1e-9,
                                   [](double t, const ImuSample& a) { return t < a.t; });
    auto odo_lo = std::lower_bound(data.odo.begin(), data.odo.end(), t0 - 1e-9,
                                   [](const OdoSample& a, double t) { return a.t < t; });
    auto odo_hi = std::upper_bound(data.odo.begin(), data.odo.end(), t1 + 1e-9,
                                   [](double t, const OdoSample& a) { return t < a.t; });
    std::span<const ImuSample> imu{&*imu_lo, size_t(imu_hi - imu_lo)};
    std::span<const OdoSample> odo{&*odo_lo, size_t(odo_hi - odo_lo)};
    if (imu.size() < 2 || odo.size() < 2) break;

    if (config.apply_zupt) {
      std::vector<ImuSample> corrected(imu.begin(), imu.end());
      for (auto& s : corrected) s.gyro -= bg;
      if (detect_motion(corrected, odo, config.motion) == MotionType::Zupt) {
        out.push_back({t1, p});
        continue;
      }
    }
    const OdoPreintegrated pre =
        odo_preintegrate(odo, imu, intr, calib.p_bm, q_bm, bg, OdoNoise{});
    p += quat_to_rot(q) * pre.delta_p;
    q = q * pre.delta_q;
    q.normalize();
    out.push_back({t1, p});
  }
  return out;
}

ErrorSummary error_metrics(const std::vector<DrPoint>& est,
                           const std::vector<TruthEpoch>& truth) {
  if (truth.empty()) throw std::invalid_argument("empty truth series");
  ErrorSummary s;
  double sum_h2 = 0.0, sum_v2 = 0.0;
  for (const auto& pt : est) {
    auto hi = std::lower_bound(truth.begin(), truth.end(), pt.t,
                               [](const TruthEpoch& a, double t) { return a.t < t; });
    Vec3 p_truth;
    if (hi == truth.begin()) {
      if (hi->t - pt.t > 0.1) throw std::runtime_error("series misaligned beyond 0.1 s");
      p_truth = hi->p_n_b;
    } else if (hi == truth.end()) {
      if (pt.t - truth.back().t > 0.1)
        throw std::runtime_error("series misaligned beyond 0.1 s");
      p_truth = truth.back().p_n_b;
    } else {
      auto lo = hi - 1;
      const double span = hi->t - lo->t;
      const double near = std::min(pt.t - lo->t, hi->t - pt.t);
      if (near > 0.1 && span > 0.2)
        throw std::runtime_error("series misaligned beyond 0.1 s");
      const double a = span > 0.0 ? (pt.t - lo->t) / span : 0.0;
      p_truth = (1.0 - a) * lo->p_n_b + a * hi->p_n_b;
    }
    const Vec3 d = pt.p_n - p_truth;
    const double h = d.head<2>().norm();
    const double v = std::abs(d.z());
    s.max_horizontal = std::max(s.max_horizontal, h);
    s.max_vertical = std::max(s.max_vertical, v);
    sum_h2 += h * h;
    sum_v2 += v * v;
    ++s.count;
  }
  if (s.count > 0) {
    s.rmse_horizontal = std::sqrt(sum_h2 / s.count);
    s.rmse_vertical = std::sqrt(sum_v2 / s.count);
  }
  return s;
}

PipelineConfig perturb_initial_guess(const PipelineConfig& base,
                                     const TrueCalibration& truth, std::uint64_t seed,
                                     const InitPerturbation& pert) {
  std::mt19937_64 rng(seed ^ pert.salt);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PipelineConfig cfg = base;
  cfg.init_p_bm = truth.p_bm +
                  pert.translation * Vec3(gauss(rng), gauss(rng), gauss(rng));
  cfg.init_rpy_bm_deg = truth.rpy_bm_deg +
                        pert.rotation_deg * Vec3(gauss(rng), gauss(rng), gauss(rng));
  cfg.init_s_v = truth.s_v + pert.scale * gauss(rng);
  cfg.init_s_omega = truth.s_omega + pert.scale * gauss(rng);
  return cfg;
}

namespace {

double angle_diff(double a, double b) {
  double d = a - b;
  while (d > M_PI) d -= 2.0 * M_PI;
  while (d < -M_PI) d += 2.0 * M_PI;
  return d;
}

}  // namespace

CalibErrors calib_errors_at(const std::vector<CalibRecord>& series,
                            const TrueCalibration& truth, double t) {
  if (series.empty()) throw std::invalid_argument("empty calibration series");
  const CalibRecord* best = &series.front();
  for (const auto& r : series) {
    if (std::abs(r.t - t) < std::abs(best->t - t)) best = &r;
  }
  CalibErrors e;
  e.t = best->t;
  const Vec3 rpy_true = truth.rpy_bm_deg * kDegToRad;
  for (int i = 0; i < 3; ++i) {
    e.abs_err(i) = std::abs(best->p_bm(i) - truth.p_bm(i));
    e.abs_err(3 + i) = std::abs(angle_diff(best->rpy_bm(i), rpy_true(i)));
  }
  e.abs_err(6) = std::abs(best->s_v - truth.s_v);
  e.abs_err(7) = std::abs(best->s_omega - truth.s_omega);
  e.std = best->std;
  return e;
}

MonteCarloSummary run_monte_carlo(const MonteCarloOptions& options) {
  MonteCarloSummary summary;
  summary.runs.resize(options.seeds.size());

  auto one_run = [&](size_t idx) {
    MonteCarloRun run;
    run.seed = options.seeds[idx];
    Scenario sc = options.scenario;
    sc.seed = run.seed;
    const SimulatedDataset data = synthesize_measurements(sc);
    const PipelineConfig cfg = perturb_initial_guess(options.config, sc.truth,
                                                     run.seed, options.perturbation);
    const PipelineResult res = run_calibration(data, cfg);
    run.diverged = res.diverged;
    run.final_cost = res.final_cost;
    for (double cp : options.checkpoints) {
      if (cp <= 0.0) {
        // checkpoint 0: the perturbed initial guess itself
        CalibErrors e;
        e.t = 0.0;
        const Vec3 rpy_true = sc.truth.rpy_bm_deg * kDegToRad;
        for (int i = 0; i < 3; ++i) {
          e.abs_err(i) = std::abs(cfg.init_p_bm(i) - sc.truth.p_bm(i));
          e.abs_err(3 + i) =
              std::abs(cfg.init_rpy_bm_deg(i) * kDegToRad - rpy_true(i));
        }
        e.abs_err(6) = std::abs(cfg.init_s_v - sc.truth.s_v);
        e.abs_err(7) = std::abs(cfg.init_s_omega - sc.truth.s_omega);
        run.at_checkpoints.push_back(e);
      } else {
        run.at_checkpoints.push_back(calib_errors_at(res.calib, sc.truth, cp));
      }
    }
    run.final = calib_errors_at(res.calib, sc.truth, 1e18);
    if (!run.final.abs_err.allFinite()) run.diverged = true;
    return run;
  };

  const int threads = std::max(1, options.threads);
  for (size_t start = 0; start < options.seeds.size(); start += threads) {
    std::vector<std::future<MonteCarloRun>> batch;
    const size_t end = std::min(options.seeds.size(), start + threads);
    for (size_t i = start; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, one_run, i));
    }
    for (size_t i = start; i < end; ++i) summary.runs[i] = batch[i - start].get();
  }

  // cost-outlier detection against the seed median
  std::vector<double> costs;
  for (const auto& r : summary.runs) {
    if (std::isfinite(r.final_cost)) costs.push_back(r.final_cost);
  }
  double median = 0.0;
  if (!costs.empty()) {
    std::sort(costs.begin(), costs.end());
    median = costs[costs.size() / 2];
  }
  Eigen::Matrix<double, 8, 1> sum = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 1> sum2 = Eigen::Matrix<double, 8, 1>::Zero();
  int n_ok = 0;
  for (auto& r : summary.runs) {
    if (!std::isfinite(r.final_cost) ||
        (median > 0.0 && r.final_cost > 10.0 * median)) {
      r.diverged = true;
    }
    if (r.diverged) {
      ++summary.failures;
      continue;
    }
    sum += r.final.abs_err;
    sum2 += r.final.abs_err.cwiseProduct(r.final.abs_err);
    ++n_ok;
  }
  if (n_ok > 0) {
    summary.mean_abs_final = sum / n_ok;
    const Eigen::Matrix<double, 8, 1> var =
        (sum2 / n_ok - summary.mean_abs_final.cwiseProduct(summary.mean_abs_final))
            .cwiseMax(0.0);
    summary.std_final = var.cwiseSqrt();
  }
  return summary;
}

}  // namespace giocal
