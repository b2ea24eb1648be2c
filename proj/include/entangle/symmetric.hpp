#pragma once

#include "entangle/common.hpp"

namespace entangle {

/// Isometric half-vectorization of symmetric D x D matrices.
///
/// Lower triangle, column-major; off-diagonal entries carry a factor sqrt(2),
/// so <pack(A), pack(B)> = <A, B>_F. Length D(D+1)/2.
int packed_size(int dim);
/// Recovers D from a packed length; throws DimensionError if it is not triangular.
int dim_from_packed(Eigen::Index packed);

Vec pack(const Mat& sym);
Mat unpack(const Eigen::Ref<const Vec>& packed, int dim);

/// pack(u u^T) written into `out` (length D(D+1)/2).
void pack_outer(const Eigen::Ref<const Vec>& u, Eigen::Ref<Vec> out);

/// Column-major vec of the full matrix, length D^2.
Vec full_vec(const Mat& m);

/// y = unpack(packed) * x without forming the matrix.
void packed_matvec(const Eigen::Ref<const Vec>& packed, const Eigen::Ref<const Vec>& x,
                   Eigen::Ref<Vec> y);

}  // namespace entangle
