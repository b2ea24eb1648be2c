#pragma once

#include "entangle/common.hpp"

namespace entangle {

/// Leading eigenpairs of a symmetric matrix, largest first.
struct EigenPairs {
  Vec values;
  Mat vectors;
};

/// The k largest eigenpairs. Only the lower triangle is read.
EigenPairs top_eigenpairs(const Mat& sym, int k);

/// All eigenvalues, ascending.
Vec symmetric_eigenvalues(const Mat& sym);

/// Flips each column so its entry of largest magnitude is positive.
void canonicalize_column_signs(Mat& m);
/// Same for a single vector; returns the applied sign.
double canonicalize_sign(Eigen::Ref<Vec> v);

}  // namespace entangle
