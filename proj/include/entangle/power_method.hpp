#pragma once

#include "entangle/common.hpp"
#include "entangle/context.hpp"

#include <iosfwd>
#include <vector>

namespace entangle {

/// phi(u) = ||P(u u^T)||_F^2.
double phi(const SubspaceProjector& p, const Vec& u);
/// P(u u^T) u.
Vec projected_outer_apply(const SubspaceProjector& p, const Vec& u);
/// grad phi(u) = 4 P(u u^T) u.
Vec grad_phi(const SubspaceProjector& p, const Vec& u);
/// ||P(u u^T) u - phi(u) u||.
double stationarity_residual(const SubspaceProjector& p, const Vec& u);

/// Monte-Carlo check of phi(u) >= 2 ||P(u v^T)||^2 + v^T P(u u^T) v over
/// `trials` random unit v orthogonal to u (slack 1e-9).
bool second_order_check(const SubspaceProjector& p, const Vec& u, int trials,
                        std::uint64_t seed = 0);
/// phi(u) minus the largest value of the right-hand side over all unit v
/// orthogonal to u; nonnegative at local maximizers.
double second_order_margin(const SubspaceProjector& p, const Vec& u);

struct IterationResult {
  Vec u;
  double phi = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // phi(u_0), phi(u_1), ... when requested
};

/// u_j = normalize(u_{j-1} + 2 step P(u u^T) u) until K steps or
/// ||u_j - u_{j-1}|| <= tol.
IterationResult power_iterate(const SubspaceProjector& p, const Vec& u0, double step,
                              int max_steps, double tol = 1e-10, bool record_trace = false);

struct Candidate {
  Vec u;
  double phi = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::uint64_t seed_index = 0;
};

struct CandidateSet {
  int dim = 0;
  std::vector<Candidate> items;

  std::size_t size() const { return items.size(); }
  /// D x n matrix of the vectors.
  Mat vectors() const;
  /// Candidates with phi >= threshold, order preserved.
  CandidateSet accepted(double threshold) const;
};

struct PowerConfig {
  double step = 1.5;
  int max_steps = 15000;
  int restarts = 10000;
  double tol = 1e-10;
};

/// Independent restarts from uniform points on the sphere; every result is
/// sign-canonicalized. Output order is the restart index.
CandidateSet recover_candidates(const SubspaceProjector& p, const PowerConfig& config,
                                std::uint64_t seed);

/// Columns seed_index, phi, residual, iterations, then the D coordinates.
void write_csv(const CandidateSet& set, std::ostream& os);

}  // namespace entangle
