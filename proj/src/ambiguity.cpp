#include "giocal/ambiguity.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace giocal {

namespace {

// Unit-lower LDL^T without pivoting; returns false when a pivot collapses.
bool ldlt_unit_lower(const MatX& q, MatX* l, VecX* d) {
  const int n = int(q.rows());
  *l = MatX::Identity(n, n);
  d->resize(n);
  MatX a = q;
  for (int j = 0; j < n; ++j) {
    (*d)(j) = a(j, j);
    if (!((*d)(j) > 0.0)) return false;
    for (int i = j + 1; i < n; ++i) (*l)(i, j) = a(i, j) / (*d)(j);
    for (int i = j + 1; i < n; ++i) {
      for (int k = j + 1; k <= i; ++k) {
        a(i, k) -= (*l)(i, j) * (*d)(j) * (*l)(k, j);
      }
    }
  }
  return true;
}

}  // namespace

void ils_reduce(const MatX& q_in, MatX* z_out, MatX* z_inv_out) {
  const int n = int(q_in.rows());
  MatX z = MatX::Identity(n, n);
  MatX z_inv = MatX::Identity(n, n);
  MatX q = q_in;

  auto refactor = [&](MatX* l, VecX* d) {
    if (!ldlt_unit_lower(q, l, d)) {
      throw std::runtime_error("ambiguity covariance not positive definite");
    }
  };

  MatX l;
  VecX d;
  refactor(&l, &d);

  // Integer size reduction of the unit-lower factor, then greedy adjacent
  // reordering so small conditional variances are searched first. Each swap
  // refactors; dimensions here are small.
  const int max_sweeps = 10 * n * n + 10;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    // size reduction: row-wise, rightmost column first
    for (int i = 1; i < n; ++i) {
      for (int j = i - 1; j >= 0; --j) {
        const double mu = std::round(l(i, j));
        if (mu != 0.0) {
          // a_i <- a_i - mu a_j in the transformed variable
          l.row(i) -= mu * l.row(j);
          z.col(i) -= mu * z.col(j);  // hold Q_z = Z^T Q Z
          z_inv.row(j) += mu * z_inv.row(i);
        }
      }
    }
    // find first adjacent pair where swapping lowers the leading
    // conditional variance
    int swap_at = -1;
    for (int i = 0; i + 1 < n; ++i) {
      const double delta = d(i + 1) + l(i + 1, i) * l(i + 1, i) * d(i);
      if (delta < d(i) * (1.0 - 1e-12)) {
        swap_at = i;
        break;
      }
    }
    if (swap_at < 0) break;
    z.col(swap_at).swap(z.col(swap_at + 1));
    z_inv.row(swap_at).swap(z_inv.row(swap_at + 1));
    q = z.transpose() * q_in * z;
    refactor(&l, &d);
  }
  *z_out = z;
  if (z_inv_out) *z_inv_out = z_inv;
}

void ils_search(const VecX& a, const MatX& q, VecX* best, VecX* second,
                double* q1, double* q2) {
  const int n = int(a.size());
  MatX l;
  VecX d;
  if (!ldlt_unit_lower(q, &l, &d)) {
    throw std::runtime_error("ambiguity covariance not positive definite");
  }

  VecX z = VecX::Zero(n);
  VecX w = VecX::Zero(n);
  VecX best1 = VecX::Zero(n), best2 = VecX::Zero(n);
  double c1 = std::numeric_limits<double>::infinity();
  double c2 = std::numeric_limits<double>::infinity();

  // depth-first with zigzag enumeration per level; cost terms w_i^2 / d_i
  // with w_i = z_i - (a_i + sum_{j<i} l_ij w_j)
  struct Level {
    double center = 0.0;
    double partial = 0.0;
    long step = 0;  // zigzag counter
  };
  std::vector<Level> lv(n);

  int i = 0;
  lv[0].center = a(0);
  lv[0].partial = 0.0;
  lv[0].step = 0;
  while (true) {
    bool descend = false;
    // candidate at level i for current step
    const long s = lv[i].step;
    double cand;
    {
      const double c = lv[i].center;
      const double base = std::round(c);
      // candidates ordered by distance from the fractional center:
      // base, base±1, base∓1, base±2, ...
      const long mag = (s + 1) / 2;
      const bool positive_first = (c - base) >= 0.0;
      double sign = (s % 2 == 1) == positive_first ? 1.0 : -1.0;
      cand = base + sign * double(mag);
    }
    const double wi = cand - lv[i].center;
    const double cost = lv[i].partial + wi * wi / d(i);
    if (cost < c2) {
      z(i) = cand;
      w(i) = wi;
      if (i + 1 == n) {
        if (cost < c1) {
          c2 = c1;
          best2 = best1;
          c1 = cost;
          best1 = z;
        } else {
          c2 = cost;
          best2 = z;
        }
        ++lv[i].step;
      } else {
        // set up next level
        ++i;
        double acc = a(i);
        for (int j = 0; j < i; ++j) acc += l(i, j) * w(j);
        lv[i].center = acc;
        lv[i].partial = cost;
        lv[i].step = 0;
        descend = true;
      }
    } else {
      // exhausted this level; backtrack
      if (i == 0) break;
      --i;
      ++lv[i].step;
    }
    (void)descend;
  }
  *best = best1;
  *second = best2;
  *q1 = c1;
  *q2 = c2;
}

FloatAmbiguitySet sd_to_dd(const VecX& a_sd, const MatX& q_sd,
                           const std::vector<int>& sats, const std::vector<int>& bands,
                           const std::map<int, int>& ref_sat_per_band) {
  const int n = int(a_sd.size());
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < n; ++i) {
    if (!seen.insert({bands[i], sats[i]}).second) {
      throw std::invalid_argument("duplicate (satellite, band) in SD set");
    }
  }
  // rows of G
  std::vector<int> row_other, row_ref, row_band;
  std::map<std::pair<int, int>, int> index;
  for (int i = 0; i < n; ++i) index[{bands[i], sats[i]}] = i;

  for (int i = 0; i < n; ++i) {
    auto ref_it = ref_sat_per_band.find(bands[i]);
    if (ref_it == ref_sat_per_band.end()) continue;
    if (sats[i] == ref_it->second) continue;
    auto ref_idx = index.find({bands[i], ref_it->second});
    if (ref_idx == index.end()) continue;
    row_other.push_back(i);
    row_ref.push_back(ref_idx->second);
    row_band.push_back(bands[i]);
  }

  FloatAmbiguitySet out;
  const int m = int(row_other.size());
  if (m == 0) return out;
  MatX g = MatX::Zero(m, n);
  for (int r = 0; r < m; ++r) {
    g(r, row_other[r]) = 1.0;
    g(r, row_ref[r]) = -1.0;
    out.sat_other.push_back(sats[row_other[r]]);
    out.sat_ref.push_back(sats[row_ref[r]]);
    out.bands.push_back(row_band[r]);
  }
  out.values = g * a_sd;
  out.cov = g * q_sd * g.transpose();
  return out;
}

FixResult ils_fix(const FloatAmbiguitySet& amb, double ratio_threshold) {
  FixResult out;
  const int n = amb.size();
  if (n < 1) {
    out.diagnostic = "empty ambiguity set";
    return out;
  }
  Eigen::SelfAdjointEigenSolver<MatX> es(amb.cov);
  const double ev_min = es.eigenvalues().minCoeff();
  const double ev_max = es.eigenvalues().maxCoeff();
  if (!(ev_min > 0.0) || ev_max / ev_min > 1e12) {
    out.diagnostic = "ill-conditioned ambiguity covariance";
    return out;
  }

  MatX z, z_inv;
  ils_reduce(amb.cov, &z, &z_inv);
  const MatX q_z = z.transpose() * amb.cov * z;
  const VecX a_z = z.transpose() * amb.values;

  VecX zb, zs;
  ils_search(a_z, q_z, &zb, &zs, &out.q1, &out.q2);
  out.best = z_inv.transpose() * zb;
  out.second = z_inv.transpose() * zs;
  out.ratio = out.q1 > 0.0 ? out.q2 / out.q1
                           : std::numeric_limits<double>::infinity();
  out.accepted = out.ratio >= ratio_threshold;
  return out;
}

}  // namespace giocal
