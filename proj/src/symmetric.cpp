#include "entangle/symmetric.hpp"

#include <cmath>
#include <string>

namespace entangle {

namespace {
constexpr double kSqrt2 = 1.41421356237309504880;
}

int packed_size(int dim) { return dim * (dim + 1) / 2; }

int dim_from_packed(Eigen::Index packed) {
  const int d = static_cast<int>(std::lround((std::sqrt(8.0 * packed + 1.0) - 1.0) / 2.0));
  if (packed_size(d) != packed)
    throw DimensionError("packed length " + std::to_string(packed) + " is not D(D+1)/2");
  return d;
}

Vec pack(const Mat& sym) {
  if (sym.rows() != sym.cols()) throw DimensionError("pack: matrix is not square");
  const int d = static_cast<int>(sym.rows());
  Vec out(packed_size(d));
  Eigen::Index k = 0;
  for (int j = 0; j < d; ++j) {
    out[k++] = sym(j, j);
    for (int i = j + 1; i < d; ++i) out[k++] = kSqrt2 * 0.5 * (sym(i, j) + sym(j, i));
  }
  return out;
}

Mat unpack(const Eigen::Ref<const Vec>& packed, int dim) {
  if (packed.size() != packed_size(dim)) throw DimensionError("unpack: wrong packed length");
  Mat out(dim, dim);
  Eigen::Index k = 0;
  for (int j = 0; j < dim; ++j) {
    out(j, j) = packed[k++];
    for (int i = j + 1; i < dim; ++i) {
      const double v = packed[k++] / kSqrt2;
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

void pack_outer(const Eigen::Ref<const Vec>& u, Eigen::Ref<Vec> out) {
  const int d = static_cast<int>(u.size());
  Eigen::Index k = 0;
  for (int j = 0; j < d; ++j) {
    out[k++] = u[j] * u[j];
    const double s = kSqrt2 * u[j];
    for (int i = j + 1; i < d; ++i) out[k++] = s * u[i];
  }
}

Vec full_vec(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

void packed_matvec(const Eigen::Ref<const Vec>& packed, const Eigen::Ref<const Vec>& x,
                   Eigen::Ref<Vec> y) {
  const int d = static_cast<int>(x.size());
  y.setZero();
  Eigen::Index k = 0;
  for (int j = 0; j < d; ++j) {
    y[j] += packed[k++] * x[j];
    const int len = d - j - 1;
    if (len > 0) {
      auto seg = packed.segment(k, len);
      y.segment(j + 1, len) += (seg / kSqrt2) * x[j];
      y[j] += seg.dot(x.segment(j + 1, len)) / kSqrt2;
      k += len;
    }
  }
}

}  // namespace entangle
