#include "giocal/problem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace giocal {

namespace {

double huber_block_cost(const VecX& r, double delta) {
  const double n = r.norm();
  if (n <= delta) return r.squaredNorm();
  return 2.0 * delta * n - delta * delta;
}

double huber_weight(const VecX& r, double delta) {
  const double n = r.norm();
  if (n <= delta || n == 0.0) return 1.0;
  return delta / n;
}

}  // namespace

int Problem::add_variable(VarKind kind, const VecX& value) {
  values_.push_back(value);
  kinds_.push_back(kind);
  offsets_.push_back(total_dim_);
  total_dim_ += kind == VarKind::Quaternion ? 3 : int(value.size());
  return int(values_.size()) - 1;
}

int Problem::add_variable(const Quat& q) {
  VecX v(4);
  v << q.w(), q.x(), q.y(), q.z();
  return add_variable(VarKind::Quaternion, v);
}

Quat Problem::quat_value(int var) const {
  const VecX& v = values_[var];
  return Quat(v(0), v(1), v(2), v(3));
}

void Problem::add_factor(std::unique_ptr<Factor> f) {
  factors_.push_back(std::move(f));
}

double Problem::cost(double huber_delta) const {
  double c = 0.0;
  VecX r;
  for (const auto& f : factors_) {
    f->evaluate(*this, &r, nullptr);
    c += f->robust ? huber_block_cost(r, huber_delta) : r.squaredNorm();
  }
  return 0.5 * c;
}

void Problem::linearize(double huber_delta, MatX* h, VecX* g, double* cost_out) const {
  h->setZero(total_dim_, total_dim_);
  g->setZero(total_dim_);
  double c = 0.0;
  VecX r;
  std::vector<MatX> jac;
  for (const auto& f : factors_) {
    f->evaluate(*this, &r, &jac);
    c += f->robust ? huber_block_cost(r, huber_delta) : r.squaredNorm();
    double w = 1.0;
    if (f->robust) w = huber_weight(r, huber_delta);
    const double sw = std::sqrt(w);
    if (sw != 1.0) {
      r *= sw;
      for (auto& j : jac) j *= sw;
    }
    for (size_t a = 0; a < f->vars.size(); ++a) {
      const int va = f->vars[a];
      const int oa = offsets_[va];
      const int da = local_dim(va);
      g->segment(oa, da).noalias() += jac[a].transpose() * r;
      for (size_t b = a; b < f->vars.size(); ++b) {
        const int vb = f->vars[b];
        const int ob = offsets_[vb];
        const int db = local_dim(vb);
        h->block(oa, ob, da, db).noalias() += jac[a].transpose() * jac[b];
        if (va != vb) {
          h->block(ob, oa, db, da) = h->block(oa, ob, da, db).transpose();
        }
      }
    }
  }
  if (cost_out) *cost_out = 0.5 * c;
}

void Problem::retract(const VecX& delta) {
  for (int v = 0; v < num_variables(); ++v) {
    const int o = offsets_[v];
    if (kinds_[v] == VarKind::Quaternion) {
      Quat q = quat_value(v);
      q = quat_boxplus(q, delta.segment<3>(o));
      VecX nv(4);
      nv << q.w(), q.x(), q.y(), q.z();
      values_[v] = nv;
    } else {
      values_[v] += delta.segment(o, values_[v].size());
    }
  }
}

SolveReport Problem::solve(const SolveOptions& opts) {
  SolveReport rep;
  MatX h;
  VecX g;
  double current_cost = 0.0;
  double lambda = opts.initial_lambda;
  int consecutive_failures = 0;

  std::vector<VecX> best_values = values_;
  linearize(opts.huber_delta, &h, &g, &current_cost);
  rep.initial_cost = current_cost;
  double best_cost = current_cost;

  for (int it = 0; it < opts.max_iterations; ++it) {
    rep.iterations = it + 1;
    rep.gradient_norm = g.lpNorm<Eigen::Infinity>();
    if (rep.gradient_norm < opts.gradient_tol) {
      rep.converged = true;
      rep.message = "gradient tolerance";
      break;
    }

    // damped normal equations; scale damping with the diagonal
    VecX diag = h.diagonal().cwiseMax(1e-12);
    MatX h_damped = h;
    h_damped.diagonal() += lambda * diag;
    Eigen::LDLT<MatX> ldlt(h_damped);
    bool step_ok = ldlt.info() == Eigen::Success;
    VecX delta;
    if (step_ok) {
      delta = ldlt.solve(-g);
      step_ok = delta.allFinite();
    }

    if (step_ok && delta.norm() < opts.step_tol) {
      rep.converged = true;
      rep.message = "step tolerance";
      break;
    }

    bool accepted = false;
    if (step_ok) {
      const std::vector<VecX> backup = values_;
      retract(delta);
      const double new_cost = cost(opts.huber_delta);
      if (std::isfinite(new_cost) && new_cost <= current_cost) {
        current_cost = new_cost;
        lambda = std::max(lambda * 0.4, 1e-12);
        accepted = true;
        consecutive_failures = 0;
        if (current_cost < best_cost) {
          best_cost = current_cost;
          best_values = values_;
        }
        linearize(opts.huber_delta, &h, &g, &current_cost);
      } else {
        values_ = backup;
      }
    }
    if (!accepted) {
      lambda = std::min(lambda * 10.0, 1e32);
      ++consecutive_failures;
      if (consecutive_failures >= opts.max_consecutive_failures) {
        values_ = best_values;
        rep.diverged = true;
        rep.message = "no cost decrease after repeated damping";
        break;
      }
    }
  }
  if (rep.message.empty()) rep.message = "iteration limit";
  rep.final_cost = best_cost;
  if (current_cost > best_cost) values_ = best_values;
  return rep;
}

MatX Problem::marginal_covariance(const std::vector<int>& vars_of_interest,
                                  double huber_delta) const {
  MatX h;
  VecX g;
  linearize(huber_delta, &h, &g, nullptr);
  // guard against numerically singular directions
  h.diagonal().array() += 1e-12;
  Eigen::LDLT<MatX> ldlt(h);
  MatX cov_full = ldlt.solve(MatX::Identity(total_dim_, total_dim_));

  int dim = 0;
  for (int v : vars_of_interest) dim += local_dim(v);
  MatX out(dim, dim);
  int ro = 0;
  for (int a : vars_of_interest) {
    int co = 0;
    for (int b : vars_of_interest) {
      out.block(ro, co, local_dim(a), local_dim(b)) =
          cov_full.block(offsets_[a], offsets_[b], local_dim(a), local_dim(b));
      co += local_dim(b);
    }
    ro += local_dim(a);
  }
  return out;
}

void MarginalPriorFactor::evaluate(const Problem& p, VecX* residual,
                                   std::vector<MatX>* jacobians) const {
  const int n = int(vars.size());
  int local_total = 0;
  std::vector<int> local_offsets(n);
  for (int i = 0; i < n; ++i) {
    local_offsets[i] = local_total;
    local_total += p.local_dim(vars[i]);
  }
  VecX dx(local_total);
  std::vector<Mat3> dlog(n);
  for (int i = 0; i < n; ++i) {
    if (block.kinds[i] == VarKind::Quaternion) {
      const Quat q = p.quat_value(vars[i]);
      const Quat q0(block.lin_points[i](0), block.lin_points[i](1),
                    block.lin_points[i](2), block.lin_points[i](3));
      const Vec3 d = quat_boxminus(q, q0);
      dx.segment<3>(local_offsets[i]) = d;
      dlog[i] = so3_right_jacobian_inv(d);
    } else {
      dx.segment(local_offsets[i], block.lin_points[i].size()) =
          p.value(vars[i]) - block.lin_points[i];
    }
  }
  *residual = block.sqrt_info * dx + block.rhs;
  if (jacobians) {
    jacobians->resize(n);
    for (int i = 0; i < n; ++i) {
      const int d = p.local_dim(vars[i]);
      (*jacobians)[i] = block.sqrt_info.middleCols(local_offsets[i], d);
      if (block.kinds[i] == VarKind::Quaternion) {
        (*jacobians)[i] = (*jacobians)[i] * dlog[i];
      }
    }
  }
}

void PriorFactor::evaluate(const Problem& p, VecX* residual,
                           std::vector<MatX>* jacobians) const {
  if (var_kind == VarKind::Quaternion) {
    const Quat q = p.quat_value(vars[0]);
    const Quat q0(mean(0), mean(1), mean(2), mean(3));
    const Vec3 d = quat_boxminus(q, q0);
    *residual = sqrt_info * d;
    if (jacobians) {
      jacobians->resize(1);
      (*jacobians)[0] = sqrt_info * so3_right_jacobian_inv(d);
    }
  } else {
    *residual = sqrt_info * (p.value(vars[0]) - mean);
    if (jacobians) {
      jacobians->resize(1);
      (*jacobians)[0] = sqrt_info;
    }
  }
}

MatX sqrt_of_information(const MatX& info) {
  Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (info + info.transpose()));
  VecX ev = es.eigenvalues().cwiseMax(0.0);
  return ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

MatX sqrt_info_of_covariance(const MatX& cov) {
  Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (cov + cov.transpose()));
  VecX ev = es.eigenvalues();
  const double floor = std::max(ev.maxCoeff() * 1e-14, 1e-300);
  VecX inv_sqrt(ev.size());
  for (int i = 0; i < ev.size(); ++i) {
    inv_sqrt(i) = 1.0 / std::sqrt(std::max(ev(i), floor));
  }
  return inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

PriorBlock marginalize(const Problem& p, const std::vector<const Factor*>& factors,
                       const std::vector<int>& drop_vars, double huber_delta,
                       std::vector<int>* kept_vars, bool* repaired) {
  std::set<int> drop_set(drop_vars.begin(), drop_vars.end());
  // variables involved, dropped first, then kept in id order
  std::set<int> involved;
  for (const Factor* f : factors) {
    for (int v : f->vars) involved.insert(v);
  }
  std::vector<int> ordered;
  for (int v : drop_vars) {
    if (involved.count(v)) ordered.push_back(v);
  }
  std::vector<int> kept;
  for (int v : involved) {
    if (!drop_set.count(v)) kept.push_back(v);
  }
  ordered.insert(ordered.end(), kept.begin(), kept.end());

  std::map<int, int> local_offset;
  int total = 0;
  for (int v : ordered) {
    local_offset[v] = total;
    total += p.local_dim(v);
  }
  int drop_dim = 0;
  for (int v : ordered) {
    if (drop_set.count(v)) drop_dim += p.local_dim(v);
  }

  MatX h = MatX::Zero(total, total);
  VecX g = VecX::Zero(total);
  VecX r;
  std::vector<MatX> jac;
  for (const Factor* f : factors) {
    f->evaluate(p, &r, &jac);
    double w = f->robust ? huber_weight(r, huber_delta) : 1.0;
    const double sw = std::sqrt(w);
    if (sw != 1.0) {
      r *= sw;
      for (auto& j : jac) j *= sw;
    }
    for (size_t a = 0; a < f->vars.size(); ++a) {
      const int oa = local_offset[f->vars[a]];
      const int da = p.local_dim(f->vars[a]);
      g.segment(oa, da).noalias() += jac[a].transpose() * r;
      for (size_t b = 0; b < f->vars.size(); ++b) {
        const int ob = local_offset[f->vars[b]];
        const int db = p.local_dim(f->vars[b]);
        h.block(oa, ob, da, db).noalias() += jac[a].transpose() * jac[b];
      }
    }
  }

  const int keep_dim = total - drop_dim;
  PriorBlock out;
  if (keep_dim == 0) {
    if (kept_vars) kept_vars->clear();
    return out;
  }

  const MatX h_dd = h.topLeftCorner(drop_dim, drop_dim);
  const MatX h_dk = h.topRightCorner(drop_dim, keep_dim);
  const MatX h_kk = h.bottomRightCorner(keep_dim, keep_dim);
  const VecX g_d = g.head(drop_dim);
  const VecX g_k = g.tail(keep_dim);

  // pseudo-inverse of the dropped block (it can be rank deficient)
  Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (h_dd + h_dd.transpose()));
  const VecX ev = es.eigenvalues();
  const double tol = std::max(1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1.0), 1e-300);
  VecX inv_ev(ev.size());
  for (int i = 0; i < ev.size(); ++i) inv_ev(i) = ev(i) > tol ? 1.0 / ev(i) : 0.0;
  const MatX h_dd_inv =
      es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();

  MatX h_marg = h_kk - h_dk.transpose() * h_dd_inv * h_dk;
  VecX g_marg = g_k - h_dk.transpose() * h_dd_inv * g_d;

  // symmetric eigen square root with clamping
  Eigen::SelfAdjointEigenSolver<MatX> es2(0.5 * (h_marg + h_marg.transpose()));
  VecX ev2 = es2.eigenvalues();
  if (repaired) *repaired = ev2.minCoeff() < -1e-9 * std::max(ev2.maxCoeff(), 1.0);
  ev2 = ev2.cwiseMax(0.0);
  const MatX s = ev2.cwiseSqrt().asDiagonal() * es2.eigenvectors().transpose();
  VecX inv_sqrt(ev2.size());
  for (int i = 0; i < ev2.size(); ++i) {
    inv_sqrt(i) = ev2(i) > tol ? 1.0 / std::sqrt(ev2(i)) : 0.0;
  }
  const MatX s_pinv_t = es2.eigenvectors() * inv_sqrt.asDiagonal();

  out.sqrt_info = s;
  out.rhs = s_pinv_t.transpose() * g_marg;
  for (int v : kept) {
    out.kinds.push_back(p.kind(v));
    out.lin_points.push_back(p.value(v));
  }
  if (kept_vars) *kept_vars = kept;
  return out;
}

}  // namespace giocal
