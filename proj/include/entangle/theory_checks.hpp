#pragma once

#include "entangle/common.hpp"
#include "entangle/context.hpp"
#include "entangle/derivatives.hpp"
#include "entangle/network.hpp"

#include "json.hpp"

namespace entangle {

/// Frame bounds of a set of unit vectors.
struct FrameReport {
  /// max(lambda_max - 1, 1 - lambda_min) of sum_i w_i w_i^T.
  double nu = 0.0;
  double frame_min = 0.0;
  double frame_max = 0.0;
  /// G_ij = <w_i, w_j>^2.
  Mat gram;
  double gram_min = 0.0;
  double gram_max = 0.0;

  bool holds() const { return nu < 1.0; }
};

FrameReport frame_constant(const Mat& weights);

/// beta^T G^{-1} beta with beta_i = <u, w_i>^2. Equals phi on the exact
/// projector of the same weights. Throws RankDeficiencyError if G is singular.
double gram_phi(const Mat& weights, const Vec& u);

/// Largest observed LHS / RHS for the three size and smoothness bounds on
/// entangled weights:
///   ||V_l(x)|| <= kappa^{l-1} prod_{k<=l} ||W_k||,
///   ||V_l(x) - V_l(x')|| <= lipschitz_constant(l) ||x - x'||,
///   ||S_p^[l](x)||_F <= kappa^{L-l+1} prod_{k>l} ||W_k||.
/// A ratio is 0 when both sides vanish.
struct LipschitzReport {
  double kappa = 0.0;
  int pairs = 0;
  double norm_ratio = 0.0;
  double difference_ratio = 0.0;
  double curvature_ratio = 0.0;

  bool holds() const {
    return norm_ratio <= 1.0 && difference_ratio <= 1.0 && curvature_ratio <= 1.0;
  }
};

/// Lipschitz constant of x -> V_l(x) from the weight norms (l is 1-based).
double entangled_lipschitz_constant(const NetworkParams& net, int layer);

/// Columns of `first` and `second` are paired points.
LipschitzReport lipschitz_bound_check(const NetworkParams& net, const Mat& first,
                                      const Mat& second);

/// Span of M = sqrt(1 - delta) w w^T - sqrt(delta) u u^T. For unit w orthogonal
/// to unit u, the point u is a constrained local maximizer of phi with value
/// delta. Throws DimensionError or ConfigError on invalid input.
SubspaceProjector spurious_subspace(const Vec& w, const Vec& u, double delta);

struct TheoremConfig {
  int moment_samples = 10000;  // locations for the second-moment estimate
  int fd_samples = 20;         // locations for the finite-difference error
  double epsilon = 1e-3;
  std::uint64_t seed = 0;
};

struct TheoremReport {
  double kappa = 0.0;
  /// Smoothness constant with the universal factor set to 1.
  double c_bar = 0.0;
  /// m-th eigenvalue of sum_p E[vec H_p vec H_p^T].
  double alpha = 0.0;
  double top_moment = 0.0;
  double fd_error = 0.0;
  double psi2 = 0.0;
  /// Error bound on ||P_hat - P||_F; infinite when alpha/2 <= m_L fd_error^2.
  double bound = 0.0;
  bool identifiable = false;

  /// bound / sqrt(m), comparable to subspace_distance.
  double normalized_bound(int neurons) const;
};

TheoremReport theorem_constants(const NetworkParams& net, const SamplingLaw& law,
                                const TheoremConfig& config = {});

nlohmann::json to_json(const FrameReport& r);
nlohmann::json to_json(const LipschitzReport& r);
nlohmann::json to_json(const TheoremReport& r);

}  // namespace entangle
