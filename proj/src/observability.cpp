#include "giocal/observability.hpp"

#include <Eigen/SVD>

namespace giocal {

Mat6 obs_block(const VirtualBodyRates& rates, const Mat3& r_mb, const Vec3& p_bm) {
  Mat6 m = Mat6::Zero();
  m.block<3, 3>(0, 0) = r_mb * skew(rates.omega_b);
  m.block<3, 3>(0, 3) = skew(r_mb * (rates.v_b + rates.omega_b.cross(p_bm)));
  m.block<3, 3>(3, 3) = skew(r_mb * rates.omega_b);
  return m;
}

ObservabilityReport stack_and_rank(const std::vector<Mat6>& blocks, double tol) {
  ObservabilityReport rep;
  rep.tol = tol;
  MatX stacked(6 * blocks.size(), 6);
  for (size_t i = 0; i < blocks.size(); ++i) {
    stacked.middleRows<6>(6 * int(i)) = blocks[i];
  }
  Eigen::JacobiSVD<MatX> svd(stacked, Eigen::ComputeFullV);
  rep.singular_values = svd.singularValues();
  const double s0 = rep.singular_values.size() ? rep.singular_values(0) : 0.0;
  rep.rank = 0;
  for (int i = 0; i < rep.singular_values.size(); ++i) {
    if (s0 > 0.0 && rep.singular_values(i) > tol * s0) ++rep.rank;
  }
  rep.null_basis = svd.matrixV().rightCols(6 - rep.rank);
  for (int axis = 0; axis < 6; ++axis) {
    rep.identifiable[axis] =
        rep.null_basis.cols() == 0 ||
        rep.null_basis.row(axis).cwiseAbs().maxCoeff() <= 1e-3;
  }
  return rep;
}

std::vector<ConvergenceVerdict> empirical_crosscheck(
    const std::vector<CalibSeriesPoint>& series,
    const Eigen::Matrix<double, 8, 1>& prior_std, double ratio) {
  static const char* kNames[8] = {"px", "py", "pz", "roll", "pitch", "yaw", "s_v", "s_omega"};
  std::vector<ConvergenceVerdict> out;
  for (int k = 0; k < 8; ++k) {
    ConvergenceVerdict v;
    v.parameter = kNames[k];
    v.prior_std = prior_std(k);
    v.final_std = series.empty() ? prior_std(k) : series.back().std(k);
    const double gate = ratio * prior_std(k);
    for (const auto& pt : series) {
      if (pt.std(k) < gate) {
        v.convergence_t = pt.t;
        break;
      }
    }
    v.observable = v.convergence_t >= 0.0 && v.final_std < gate;
    out.push_back(v);
  }
  return out;
}

}  // namespace giocal
