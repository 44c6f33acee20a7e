#pragma once

#include <map>
#include <vector>

#include "giocal/geomath.hpp"

namespace giocal {

// Float DD ambiguities with covariance, assembled from SD states.
struct FloatAmbiguitySet {
  VecX values;  // cycles
  MatX cov;     // cycles^2, symmetric positive definite
  std::vector<int> sat_other;  // satellite j per entry
  std::vector<int> sat_ref;    // reference satellite i per entry
  std::vector<int> bands;

  int size() const { return int(values.size()); }
};

struct FixResult {
  VecX best;    // integer candidate in the original (DD) space
  VecX second;  // runner-up
  double q1 = 0.0;
  double q2 = 0.0;
  double ratio = 0.0;
  bool accepted = false;
  std::string diagnostic;
};

// DD assembly a_dd = G a_sd, Q_dd = G Q_sd G^T, differencing each satellite
// against the per-band reference. Entries of sats/bands describe a_sd rows.
// Bands with fewer than two satellites contribute nothing. Throws
// std::invalid_argument on duplicate (sat, band) rows.
FloatAmbiguitySet sd_to_dd(const VecX& a_sd, const MatX& q_sd,
                           const std::vector<int>& sats, const std::vector<int>& bands,
                           const std::map<int, int>& ref_sat_per_band);

// Decorrelating unimodular reduction followed by a depth-first integer
// search for the two best candidates of ||a - z||^2_{Q^-1}. Ill-conditioned
// covariances (cond > 1e12) are rejected with a diagnostic rather than
// silently fixed.
FixResult ils_fix(const FloatAmbiguitySet& amb, double ratio_threshold);

// Exposed for testing: reduction returning z-transform and its inverse.
void ils_reduce(const MatX& q, MatX* z, MatX* z_inv);

// Exposed for testing: exact best-two integer search (no reduction).
void ils_search(const VecX& a, const MatX& q, VecX* best, VecX* second,
                double* q1, double* q2);

}  // namespace giocal
