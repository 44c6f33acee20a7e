#include "giocal/factors.hpp"

namespace giocal {

namespace {

// Shared antenna-position linearization for the DD factors. Returns the
// absolute ECEF antenna position and the Jacobian rows of the DD range
// w.r.t. (p_wb, theta_wb, p_bg).
struct AntennaGeometry {
  Vec3 p_ant;
  Mat3 r_wb;
};

AntennaGeometry antenna_geometry(const Problem& p, int var_p, int var_q,
                                 const Mat3& r_ew, const Vec3& origin,
                                 const Vec3& lever) {
  AntennaGeometry g;
  g.r_wb = quat_to_rot(p.quat_value(var_q));
  g.p_ant = origin + r_ew * (Vec3(p.value(var_p)) + g.r_wb * lever);
  return g;
}

}  // namespace

void DdPseudorangeFactor::evaluate(const Problem& p, VecX* r,
                                   std::vector<MatX>* j) const {
  const Vec3 lev = lever_online ? Vec3(p.value(vars[2])) : lever;
  const AntennaGeometry g = antenna_geometry(p, vars[0], vars[1], r_ew, origin_ecef, lev);
  const Vec3 d_i = sat_ref - g.p_ant;
  const Vec3 d_j = sat_other - g.p_ant;
  const double rho_i = d_i.norm();
  const double rho_j = d_j.norm();
  const double predicted = (rho_j - rho_i) - base_leg;
  r->resize(1);
  (*r)(0) = (measured - predicted) / sigma;
  if (j) {
    const Vec3 u_i = d_i / rho_i;
    const Vec3 u_j = d_j / rho_j;
    // d(rho_dd)/d(p_ant) = (u_i - u_j)^T
    const Eigen::RowVector3d drho_dant = (u_i - u_j).transpose();
    j->resize(vars.size());
    (*j)[0] = -(drho_dant * r_ew) / sigma;
    (*j)[1] = -(drho_dant * r_ew * (-g.r_wb * skew(lev))) / sigma;
    if (lever_online) (*j)[2] = -(drho_dant * r_ew * g.r_wb) / sigma;
  }
}

void DdCarrierFactor::evaluate(const Problem& p, VecX* r,
                               std::vector<MatX>* j) const {
  const Vec3 lev = lever_online ? Vec3(p.value(vars[4])) : lever;
  const AntennaGeometry g = antenna_geometry(p, vars[0], vars[1], r_ew, origin_ecef, lev);
  const Vec3 d_i = sat_ref - g.p_ant;
  const Vec3 d_j = sat_other - g.p_ant;
  const double rho_i = d_i.norm();
  const double rho_j = d_j.norm();
  const double n_other = p.value(vars[2])(0);
  const double n_ref = p.value(vars[3])(0);
  const double predicted =
      (rho_j - rho_i) - base_leg + wavelength * (n_other - n_ref);
  r->resize(1);
  (*r)(0) = (measured - predicted) / sigma;
  if (j) {
    const Vec3 u_i = d_i / rho_i;
    const Vec3 u_j = d_j / rho_j;
    const Eigen::RowVector3d drho_dant = (u_i - u_j).transpose();
    j->resize(vars.size());
    (*j)[0] = -(drho_dant * r_ew) / sigma;
    (*j)[1] = -(drho_dant * r_ew * (-g.r_wb * skew(lev))) / sigma;
    (*j)[2] = MatX::Constant(1, 1, -wavelength / sigma);
    (*j)[3] = MatX::Constant(1, 1, wavelength / sigma);
    if (lever_online) (*j)[4] = -(drho_dant * r_ew * g.r_wb) / sigma;
  }
}

void DopplerFactor::evaluate(const Problem& p, VecX* r,
                             std::vector<MatX>* j) const {
  const Vec3 lev = lever_online ? Vec3(p.value(vars[5])) : lever;
  const AntennaGeometry g = antenna_geometry(p, vars[0], vars[2], r_ew, origin_ecef, lev);
  const Vec3 v_wb = p.value(vars[1]);
  const Vec3 bg = p.value(vars[3]);
  const double clk_drift = p.value(vars[4])(0);
  const Vec3 w_c = gyro - bg;
  const Vec3 lever_vel_b = w_c.cross(lev);
  const Vec3 v_ant = r_ew * (v_wb + g.r_wb * lever_vel_b);

  const Vec3 dp = sat_pos - g.p_ant;
  const double rho = dp.norm();
  const Vec3 u = dp / rho;
  const Vec3 dv = sat_vel - v_ant;
  const double predicted = u.dot(dv) + clk_drift - sat_clk_drift_ms;
  r->resize(1);
  (*r)(0) = (measured - predicted) / sigma;
  if (j) {
    j->resize(vars.size());
    // d(u.dv)/d(p_ant) = -dv^T (I - u u^T) / rho
    const Eigen::RowVector3d dd_dant =
        -(dv.transpose() * (Mat3::Identity() - u * u.transpose())) / rho;
    const Eigen::RowVector3d dd_dvant = -u.transpose();
    (*j)[0] = -(dd_dant * r_ew) / sigma;
    (*j)[1] = -(dd_dvant * r_ew) / sigma;
    (*j)[2] = -(dd_dant * r_ew * (-g.r_wb * skew(lev)) +
                dd_dvant * r_ew * (-g.r_wb * skew(lever_vel_b))) / sigma;
    (*j)[3] = -(dd_dvant * r_ew * g.r_wb * skew(lev)) / sigma;
    (*j)[4] = MatX::Constant(1, 1, -1.0 / sigma);
    if (lever_online) {
      (*j)[5] = -(dd_dant * r_ew * g.r_wb + dd_dvant * r_ew * g.r_wb * skew(w_c)) / sigma;
    }
  }
}

void ImuFactor::evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const {
  const Vec3 p0 = p.value(vars[0]);
  const Vec3 v0 = p.value(vars[1]);
  const Quat q0 = p.quat_value(vars[2]);
  const Vec3 ba0 = p.value(vars[3]);
  const Vec3 bg0 = p.value(vars[4]);
  const Vec3 p1 = p.value(vars[5]);
  const Vec3 v1 = p.value(vars[6]);
  const Quat q1 = p.quat_value(vars[7]);
  const Vec3 ba1 = p.value(vars[8]);
  const Vec3 bg1 = p.value(vars[9]);

  const double dt = pre.dt;
  const Mat3 r0t = quat_to_rot(q0).transpose();
  const Vec3 y_p = p1 - p0 - v0 * dt - 0.5 * gravity_w * dt * dt;
  const Vec3 y_v = v1 - v0 - gravity_w * dt;

  const Vec3 dbg = bg0 - pre.bg_lin;
  const Vec3 dp_hat = pre.delta_p_corrected(ba0, bg0);
  const Vec3 dv_hat = pre.delta_v_corrected(ba0, bg0);
  const Quat dq_hat = pre.delta_q_corrected(bg0);

  Eigen::Matrix<double, 15, 1> res;
  res.segment<3>(0) = r0t * y_p - dp_hat;
  res.segment<3>(3) = r0t * y_v - dv_hat;
  const Vec3 r_th = quat_boxminus(q0.conjugate() * q1, dq_hat);
  res.segment<3>(6) = r_th;
  res.segment<3>(9) = ba1 - ba0;
  res.segment<3>(12) = bg1 - bg0;
  *r = sqrt_info * res;

  if (j) {
    const Mat3 r1t = quat_to_rot(q1).transpose();
    const Mat3 jr_inv = so3_right_jacobian_inv(r_th);
    const Mat3 exp_neg_rth = quat_to_rot(quat_exp(-r_th));
    const Mat3 jr_corr = so3_right_jacobian(pre.dq_dbg * dbg);

    Eigen::Matrix<double, 15, 15> big0 = Eigen::Matrix<double, 15, 15>::Zero();
    Eigen::Matrix<double, 15, 15> big1 = Eigen::Matrix<double, 15, 15>::Zero();
    // w.r.t. state 0: columns (p0, v0, th0, ba0, bg0)
    big0.block<3, 3>(0, 0) = -r0t;
    big0.block<3, 3>(0, 3) = -r0t * dt;
    big0.block<3, 3>(0, 6) = skew(r0t * y_p);
    big0.block<3, 3>(0, 9) = -pre.dp_dba;
    big0.block<3, 3>(0, 12) = -pre.dp_dbg;
    big0.block<3, 3>(3, 3) = -r0t;
    big0.block<3, 3>(3, 6) = skew(r0t * y_v);
    big0.block<3, 3>(3, 9) = -pre.dv_dba;
    big0.block<3, 3>(3, 12) = -pre.dv_dbg;
    big0.block<3, 3>(6, 6) = -jr_inv * r1t * quat_to_rot(q0);
    big0.block<3, 3>(6, 12) = -jr_inv * exp_neg_rth * jr_corr * pre.dq_dbg;
    big0.block<3, 3>(9, 9) = -Mat3::Identity();
    big0.block<3, 3>(12, 12) = -Mat3::Identity();
    // w.r.t. state 1: columns (p1, v1, th1, ba1, bg1)
    big1.block<3, 3>(0, 0) = r0t;
    big1.block<3, 3>(3, 3) = r0t;
    big1.block<3, 3>(6, 6) = jr_inv;
    big1.block<3, 3>(9, 9) = Mat3::Identity();
    big1.block<3, 3>(12, 12) = Mat3::Identity();

    big0 = sqrt_info * big0;
    big1 = sqrt_info * big1;
    j->resize(10);
    for (int k = 0; k < 5; ++k) {
      (*j)[k] = big0.middleCols<3>(3 * k);
      (*j)[5 + k] = big1.middleCols<3>(3 * k);
    }
  }
}

void OdoFactor::evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const {
  const Vec3 p0 = p.value(vars[0]);
  const Quat q0 = p.quat_value(vars[1]);
  const Vec3 p1 = p.value(vars[2]);
  const Quat q1 = p.quat_value(vars[3]);
  const VecX scales = p.value(vars[4]);
  const Vec3 ext_p = p.value(vars[5]);
  const Quat ext_q = p.quat_value(vars[6]);

  const Mat3 r0t = quat_to_rot(q0).transpose();
  const Vec3 dp_hat =
      pre.delta_p_corrected(scales(0), scales(1), ext_p, ext_q);
  const Quat dq_hat = pre.delta_q_corrected(scales(0), scales(1), ext_q);

  Eigen::Matrix<double, 6, 1> res;
  res.segment<3>(0) = r0t * (p1 - p0) - dp_hat;
  const Vec3 r_th = quat_boxminus(q0.conjugate() * q1, dq_hat);
  res.segment<3>(3) = r_th;
  *r = sqrt_info * res;

  if (j) {
    // calibration deltas entering the first-order corrections
    Eigen::Matrix<double, 8, 1> d;
    d(0) = scales(0) - pre.s_v_lin;
    d(1) = scales(1) - pre.s_omega_lin;
    d.segment<3>(2) = ext_p - pre.p_bm_lin;
    d.segment<3>(5) = quat_boxminus(ext_q, pre.q_bm_lin);
    const Mat3 jr_d = so3_right_jacobian(Vec3(pre.jac_calib.bottomRows<3>() * d));
    const Mat3 jr_inv = so3_right_jacobian_inv(r_th);
    const Mat3 exp_neg_rth = quat_to_rot(quat_exp(-r_th));
    const Mat3 r1t = quat_to_rot(q1).transpose();
    const Mat3 jrq_ext = so3_right_jacobian_inv(Vec3(d.segment<3>(5)));

    Eigen::Matrix<double, 6, 8> dres_dcalib = Eigen::Matrix<double, 6, 8>::Zero();
    dres_dcalib.topRows<3>() = -pre.jac_calib.topRows<3>();
    dres_dcalib.bottomRows<3>() =
        -jr_inv * exp_neg_rth * jr_d * pre.jac_calib.bottomRows<3>();
    // the extrinsic-rotation columns go through boxminus(ext_q, lin)
    dres_dcalib.middleCols<3>(5) = dres_dcalib.middleCols<3>(5) * jrq_ext;

    j->resize(7);
    Eigen::Matrix<double, 6, 3> blk;
    blk.setZero();
    blk.topRows<3>() = -r0t;
    (*j)[0] = sqrt_info * blk;  // p0
    blk.setZero();
    blk.topRows<3>() = skew(r0t * (p1 - p0));
    blk.bottomRows<3>() = -jr_inv * r1t * quat_to_rot(q0);
    (*j)[1] = sqrt_info * blk;  // q0
    blk.setZero();
    blk.topRows<3>() = r0t;
    (*j)[2] = sqrt_info * blk;  // p1
    blk.setZero();
    blk.bottomRows<3>() = jr_inv;
    (*j)[3] = sqrt_info * blk;  // q1
    (*j)[4] = sqrt_info * dres_dcalib.leftCols<2>();     // scales
    (*j)[5] = sqrt_info * dres_dcalib.middleCols<3>(2);  // ext_p
    (*j)[6] = sqrt_info * dres_dcalib.middleCols<3>(5);  // ext_q
  }
}

void ZuptFactor::evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const {
  *r = Vec3(p.value(vars[0])) / sigma;
  if (j) {
    j->resize(1);
    (*j)[0] = Mat3::Identity() / sigma;
  }
}

void NhcFactor::evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const {
  const Vec3 v = p.value(vars[0]);
  const Quat q_wb = p.quat_value(vars[1]);
  const Quat ext_q = p.quat_value(vars[2]);
  const Mat3 r_bw = quat_to_rot(q_wb).transpose();
  const Mat3 r_mb = quat_to_rot(ext_q).transpose();
  const Vec3 v_b = r_bw * v;
  const Vec3 v_m = r_mb * v_b;
  r->resize(2);
  (*r)(0) = v_m.x() / sigma;
  (*r)(1) = v_m.z() / sigma;
  if (j) {
    Eigen::Matrix<double, 2, 3> pick;
    pick << 1, 0, 0, 0, 0, 1;
    j->resize(3);
    (*j)[0] = pick * (r_mb * r_bw) / sigma;
    (*j)[1] = pick * (r_mb * skew(v_b)) / sigma;
    (*j)[2] = pick * skew(v_m) / sigma;
  }
}

void ArFactor::evaluate(const Problem& p, VecX* r, std::vector<MatX>* j) const {
  const double n_other = p.value(vars[0])(0);
  const double n_ref = p.value(vars[1])(0);
  r->resize(1);
  (*r)(0) = (fixed_dd - (n_other - n_ref)) / sigma;
  if (j) {
    j->resize(2);
    (*j)[0] = MatX::Constant(1, 1, -1.0 / sigma);
    (*j)[1] = MatX::Constant(1, 1, 1.0 / sigma);
  }
}

void RandomWalkFactor::evaluate(const Problem& p, VecX* r,
                                std::vector<MatX>* j) const {
  const VecX& a = p.value(vars[0]);
  const VecX& b = p.value(vars[1]);
  *r = (b - a).cwiseQuotient(sigma);
  if (j) {
    j->resize(2);
    (*j)[0] = MatX(sigma.cwiseInverse().asDiagonal()) * -1.0;
    (*j)[1] = MatX(sigma.cwiseInverse().asDiagonal());
  }
}

}  // namespace giocal
