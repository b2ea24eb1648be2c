#include "entangle/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <string>

namespace entangle {

EigenPairs top_eigenpairs(const Mat& sym, int k) {
  const Eigen::Index n = sym.rows();
  if (sym.cols() != n) throw DimensionError("eigensolver: matrix is not square");
  if (k < 0 || k > n) throw DimensionError("eigensolver: requested " + std::to_string(k) +
                                           " eigenpairs of a " + std::to_string(n) + "-matrix");
  EigenPairs out;
  if (k == 0) {
    out.values.resize(0);
    out.vectors.resize(n, 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
  out.values = es.eigenvalues().tail(k).reverse();
  out.vectors = es.eigenvectors().rightCols(k).rowwise().reverse();
  return out;
}

Vec symmetric_eigenvalues(const Mat& sym) {
  if (sym.cols() != sym.rows()) throw DimensionError("eigensolver: matrix is not square");
  if (sym.rows() == 0) return Vec(0);
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
  return es.eigenvalues();
}

double canonicalize_sign(Eigen::Ref<Vec> v) {
  if (v.size() == 0) return 1.0;
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v[idx] < 0.0) {
    v = -v;
    return -1.0;
  }
  return 1.0;
}

void canonicalize_column_signs(Mat& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Vec col = m.col(c);
    if (canonicalize_sign(col) < 0.0) m.col(c) = col;
  }
}

}  // namespace entangle
