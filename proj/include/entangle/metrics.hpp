#pragma once

#include "entangle/common.hpp"

#include <vector>

namespace entangle {

/// min(||u - v||, ||u + v||).
double sign_free_distance(const Vec& u, const Vec& v);

/// Pairwise sign-free distances between the columns of a (rows) and b (cols).
Mat sign_free_distances(const Mat& a, const Mat& b);

/// Fraction of true columns lying within `radius` of some +-candidate.
double recovery_rate(const Mat& candidates, const Mat& truth, double radius = 0.05);
/// Fraction of candidates farther than `radius` from every +-true column.
double false_positive_rate(const Mat& candidates, const Mat& truth, double radius = 0.05);
/// Like recovery_rate, but each candidate may cover at most one true column.
double matched_recovery_rate(const Mat& candidates, const Mat& truth, double radius = 0.05);

/// Minimum-cost assignment of rows to distinct columns (rows <= cols).
/// Returns the column chosen for each row.
std::vector<int> hungarian(const Mat& cost);

/// Worst sign-free distance after optimally matching estimated to true
/// columns (E_1, E_L); also returns the matching when `match` is given.
double worst_case_error(const Mat& estimated, const Mat& truth, std::vector<int>* match = nullptr);

/// max over estimates of the sign-free distance to the nearest true column.
double worst_nearest_error(const Mat& estimated, const Mat& truth);

/// sum (pred - target)^2 / sum target^2.
double relative_mse(const Mat& pred, const Mat& target);
/// max |pred - target| / max |target|.
double relative_linf(const Mat& pred, const Mat& target);
/// ||est - truth||^2 / ||truth||^2.
double relative_shift_error(const Vec& est, const Vec& truth);

}  // namespace entangle
