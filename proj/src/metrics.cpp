#include "entangle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace entangle {

double sign_free_distance(const Vec& u, const Vec& v) {
  return std::min((u - v).norm(), (u + v).norm());
}

Mat sign_free_distances(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw DimensionError("distances: dimensions differ");
  const Mat dots = (a.transpose() * b).cwiseAbs();
  const Vec na = a.colwise().squaredNorm().transpose();
  const Vec nb = b.colwise().squaredNorm().transpose();
  Mat out(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i)
      out(i, j) = std::sqrt(std::max(0.0, na[i] + nb[j] - 2.0 * dots(i, j)));
  return out;
}

double recovery_rate(const Mat& candidates, const Mat& truth, double radius) {
  if (truth.cols() == 0) return 1.0;
  if (candidates.cols() == 0) return 0.0;
  const Mat d = sign_free_distances(truth, candidates);
  int hit = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) hit += d.row(i).minCoeff() <= radius;
  return static_cast<double>(hit) / static_cast<double>(truth.cols());
}

double false_positive_rate(const Mat& candidates, const Mat& truth, double radius) {
  if (candidates.cols() == 0) return 0.0;
  if (truth.cols() == 0) return 1.0;
  const Mat d = sign_free_distances(candidates, truth);
  int miss = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) miss += d.row(i).minCoeff() > radius;
  return static_cast<double>(miss) / static_cast<double>(candidates.cols());
}

double matched_recovery_rate(const Mat& candidates, const Mat& truth, double radius) {
  if (truth.cols() == 0) return 1.0;
  if (candidates.cols() == 0) return 0.0;
  // Cost 0 for a pair within the radius, 1 otherwise; padded so rows <= cols.
  const Mat d = sign_free_distances(truth, candidates);
  const Eigen::Index cols = std::max(d.cols(), d.rows());
  Mat cost = Mat::Ones(d.rows(), cols);
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) cost(i, j) = d(i, j) <= radius ? 0.0 : 1.0;
  const auto match = hungarian(cost);
  int hit = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) hit += cost(i, match[i]) == 0.0;
  return static_cast<double>(hit) / static_cast<double>(truth.cols());
}

std::vector<int> hungarian(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n > m) throw DimensionError("hungarian: more rows than columns");
  if (n == 0) return {};
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Potentials method with 1-based sentinel column 0.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) out[p[j] - 1] = j - 1;
  return out;
}

double worst_case_error(const Mat& estimated, const Mat& truth, std::vector<int>* match) {
  if (estimated.cols() != truth.cols())
    throw DimensionError("worst_case_error: " + std::to_string(estimated.cols()) +
                         " estimates for " + std::to_string(truth.cols()) + " weights");
  if (truth.cols() == 0) return 0.0;
  const Mat d = sign_free_distances(estimated, truth);
  const auto m = hungarian(d);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) worst = std::max(worst, d(i, m[i]));
  if (match) *match = m;
  return worst;
}

double worst_nearest_error(const Mat& estimated, const Mat& truth) {
  if (estimated.cols() == 0) return 0.0;
  if (truth.cols() == 0) throw DimensionError("worst_nearest_error: no true weights");
  return sign_free_distances(estimated, truth).rowwise().minCoeff().maxCoeff();
}

double relative_mse(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("relative_mse: shapes differ");
  const double denom = target.squaredNorm();
  return denom > 0.0 ? (pred - target).squaredNorm() / denom : (pred - target).squaredNorm();
}

double relative_linf(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("relative_linf: shapes differ");
  if (pred.size() == 0) return 0.0;
  const double denom = target.cwiseAbs().maxCoeff();
  const double num = (pred - target).cwiseAbs().maxCoeff();
  return denom > 0.0 ? num / denom : num;
}

double relative_shift_error(const Vec& est, const Vec& truth) {
  if (est.size() != truth.size()) throw DimensionError("shift error: lengths differ");
  const double denom = truth.squaredNorm();
  return denom > 0.0 ? (est - truth).squaredNorm() / denom : (est - truth).squaredNorm();
}

}  // namespace entangle
