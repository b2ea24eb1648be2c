#pragma once

#include "entangle/common.hpp"
#include "entangle/derivatives.hpp"

#include "json.hpp"

namespace entangle {

/// Orthonormal basis of an m-dimensional subspace of symmetric D x D
/// matrices, stored in packed coordinates (see symmetric.hpp).
struct SubspaceProjector {
  int dim = 0;
  Mat basis;            // D(D+1)/2 x m
  Vec singular_values;  // descending; may extend past m for diagnostics

  int rank() const { return static_cast<int>(basis.cols()); }
  /// U^T x for a packed matrix x.
  Vec coefficients(const Eigen::Ref<const Vec>& packed) const;
  /// U U^T x.
  Vec apply(const Eigen::Ref<const Vec>& packed) const;
  /// sigma_m / sigma_{m+1}; infinity when sigma_{m+1} is zero or unknown.
  double spectral_gap() const;
};

/// Leading m left singular vectors of the stacked packed Hessians.
SubspaceProjector build_context(const HessianBatch& hessians, int m);
/// Same for an arbitrary packed column matrix.
SubspaceProjector build_context(const Mat& packed_columns, int dim, int m);

/// Orthonormalized span of {w_i w_i^T} for the columns w_i of `weights`.
/// Throws RankDeficiencyError listing dependent indices.
SubspaceProjector exact_projector(const Mat& weights);

/// ||P1 - P2||_F / sqrt(m1).
double subspace_distance(const SubspaceProjector& a, const SubspaceProjector& b);
/// ||P1 - P2||_{2->2}.
double operator_distance(const SubspaceProjector& a, const SubspaceProjector& b);

/// Header {D, m, singular_values, layout} and the basis as full D^2 vecs.
nlohmann::json to_json(const SubspaceProjector& p);
SubspaceProjector projector_from_json(const nlohmann::json& j);

}  // namespace entangle
