#pragma once

// Test-only oracles, independent of the library implementation paths they
// check: finite differences, matrix logarithms, brute-force integer search.

#include <random>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "giocal/geomath.hpp"
#include "giocal/problem.hpp"

namespace giocal::test {

inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20250810ULL);
  return gen;
}

inline double randu(double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng());
}

inline Vec3 rand_vec3(double scale = 1.0) {
  return Vec3(randu(), randu(), randu()) * scale;
}

inline Quat rand_quat() {
  Quat q(randu(), randu(), randu(), randu());
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  return q;
}

// rotation-vector difference via the dense matrix logarithm
inline Vec3 boxminus_matrix_log(const Quat& q1, const Quat& q2) {
  const Mat3 e = quat_to_rot(q2).transpose() * quat_to_rot(q1);
  const Mat3 l = e.log();
  return Vec3(l(2, 1), l(0, 2), l(1, 0));
}

// central finite differences of a factor's residual w.r.t. each variable's
// local coordinates
inline std::vector<MatX> fd_factor_jacobians(const Factor& f, Problem& p,
                                             double h = 1e-6) {
  VecX r0;
  f.evaluate(p, &r0, nullptr);
  std::vector<MatX> out;
  for (int vi : f.vars) {
    const int d = p.local_dim(vi);
    MatX j(r0.size(), d);
    const VecX backup = p.value(vi);
    for (int k = 0; k < d; ++k) {
      auto apply = [&](double step) {
        if (p.kind(vi) == VarKind::Quaternion) {
          Quat q(backup(0), backup(1), backup(2), backup(3));
          Vec3 delta = Vec3::Zero();
          delta(k) = step;
          const Quat qq = quat_boxplus(q, delta);
          VecX v(4);
          v << qq.w(), qq.x(), qq.y(), qq.z();
          p.set_value(vi, v);
        } else {
          VecX v = backup;
          v(k) += step;
          p.set_value(vi, v);
        }
      };
      VecX rp, rm;
      apply(h);
      f.evaluate(p, &rp, nullptr);
      apply(-h);
      f.evaluate(p, &rm, nullptr);
      p.set_value(vi, backup);
      j.col(k) = (rp - rm) / (2.0 * h);
    }
    out.push_back(j);
  }
  return out;
}

inline double max_rel_error(const MatX& a, const MatX& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-9});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// exhaustive integer least squares over a +/- radius box around the rounded
// float solution
inline void brute_force_ils(const VecX& a, const MatX& q, int radius, VecX* best,
                            VecX* second, double* q1, double* q2) {
  const int n = int(a.size());
  const MatX qinv = q.inverse();
  VecX center(n);
  for (int i = 0; i < n; ++i) center(i) = std::round(a(i));
  std::vector<int> idx(n, -radius);
  *q1 = std::numeric_limits<double>::infinity();
  *q2 = std::numeric_limits<double>::infinity();
  best->resize(n);
  second->resize(n);
  while (true) {
    VecX z(n);
    for (int i = 0; i < n; ++i) z(i) = center(i) + idx[i];
    const VecX e = z - a;
    const double c = e.dot(qinv * e);
    if (c < *q1) {
      *q2 = *q1;
      *second = *best;
      *q1 = c;
      *best = z;
    } else if (c < *q2) {
      *q2 = c;
      *second = z;
    }
    int k = 0;
    while (k < n && ++idx[k] > radius) {
      idx[k] = -radius;
      ++k;
    }
    if (k == n) break;
  }
}

}  // namespace giocal::test
