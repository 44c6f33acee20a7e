#pragma once

#include <memory>
#include <string>
#include <vector>

#include "giocal/geomath.hpp"

namespace giocal {

// Variable parameterizations. Quaternion variables store 4 coefficients
// (w,x,y,z), have local dimension 3 and retract on the right:
// q ⊞ d = q ⊗ exp(d).
enum class VarKind { Euclidean, Quaternion };

class Problem;

// A residual block. evaluate() returns the whitened residual and, when
// requested, Jacobians w.r.t. each variable's local (error) coordinates.
struct Factor {
  std::vector<int> vars;
  bool robust = false;  // Huber loss on this block

  virtual ~Factor() = default;
  virtual int dim() const = 0;
  virtual void evaluate(const Problem& p, VecX* residual,
                        std::vector<MatX>* jacobians) const = 0;
};

struct SolveOptions {
  int max_iterations = 50;
  double gradient_tol = 1e-8;
  double step_tol = 1e-10;
  double huber_delta = 1.345;
  int max_consecutive_failures = 5;
  double initial_lambda = 1e-8;
};

struct SolveReport {
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double gradient_norm = 0.0;
  std::string message;
};

class Problem {
 public:
  int add_variable(VarKind kind, const VecX& value);
  int add_variable(const Vec3& value) {
    return add_variable(VarKind::Euclidean, VecX(value));
  }
  int add_variable(const Quat& q);
  int add_variable(double value) {
    VecX v(1);
    v(0) = value;
    return add_variable(VarKind::Euclidean, v);
  }

  void add_factor(std::unique_ptr<Factor> f);

  const VecX& value(int var) const { return values_[var]; }
  Quat quat_value(int var) const;
  void set_value(int var, const VecX& v) { values_[var] = v; }
  VarKind kind(int var) const { return kinds_[var]; }
  int local_dim(int var) const { return kinds_[var] == VarKind::Quaternion ? 3 : int(values_[var].size()); }
  int num_variables() const { return int(values_.size()); }
  const std::vector<std::unique_ptr<Factor>>& factors() const { return factors_; }

  SolveReport solve(const SolveOptions& opts);

  // Robust total cost at the current values.
  double cost(double huber_delta) const;

  // Joint covariance of the listed variables' local coordinates, from the
  // inverse of the Gauss-Newton information matrix at the current values.
  MatX marginal_covariance(const std::vector<int>& vars_of_interest,
                           double huber_delta = 1.345) const;

  // Dense linearization at the current values (whitened, robust-weighted).
  void linearize(double huber_delta, MatX* h, VecX* g, double* cost) const;

  // Offset of a variable's local coordinates in the dense system.
  int offset(int var) const { return offsets_[var]; }
  int total_dim() const { return total_dim_; }

 private:
  void retract(const VecX& delta);

  std::vector<VecX> values_;
  std::vector<VarKind> kinds_;
  std::vector<int> offsets_;
  int total_dim_ = 0;
  std::vector<std::unique_ptr<Factor>> factors_;
};

// Linear information on a set of variables left by eliminating others:
// residual S * (x ⊟ x0) + r0 with S frozen at the elimination point.
struct PriorBlock {
  std::vector<VarKind> kinds;
  std::vector<VecX> lin_points;
  MatX sqrt_info;  // rows x sum(local dims)
  VecX rhs;
  bool empty() const { return sqrt_info.size() == 0; }
};

// Factor wrapping a PriorBlock over problem variables (same order as the
// block's lin_points).
struct MarginalPriorFactor : Factor {
  PriorBlock block;
  int dim() const override { return int(block.rhs.size()); }
  void evaluate(const Problem& p, VecX* residual,
                std::vector<MatX>* jacobians) const override;
};

// Gaussian prior on a single variable.
struct PriorFactor : Factor {
  VecX mean;         // quaternion priors store coefficients (w,x,y,z)
  MatX sqrt_info;    // local-dim square
  VarKind var_kind = VarKind::Euclidean;
  int dim() const override { return int(sqrt_info.rows()); }
  void evaluate(const Problem& p, VecX* residual,
                std::vector<MatX>* jacobians) const override;
};

// Schur-complement elimination of drop_vars from the Gauss-Newton system of
// the given factors, linearized at the problem's current values. Returns the
// prior over the remaining variables that share factors with dropped ones
// (their ids in *kept_vars, same order as the block). Indefinite results are
// repaired by clamping negative eigenvalues at zero.
PriorBlock marginalize(const Problem& p, const std::vector<const Factor*>& factors,
                       const std::vector<int>& drop_vars, double huber_delta,
                       std::vector<int>* kept_vars, bool* repaired = nullptr);

// Upper-triangular-free square root U with U^T U = m (symmetric PSD input;
// eigenvalue clamping at zero).
MatX sqrt_info_of_covariance(const MatX& cov);
MatX sqrt_of_information(const MatX& info);

}  // namespace giocal
