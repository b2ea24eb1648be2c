#include "entangle/context.hpp"

#include "entangle/linalg.hpp"
#include "entangle/symmetric.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace entangle {

Vec SubspaceProjector::coefficients(const Eigen::Ref<const Vec>& packed) const {
  return basis.transpose() * packed;
}

Vec SubspaceProjector::apply(const Eigen::Ref<const Vec>& packed) const {
  return basis * (basis.transpose() * packed);
}

double SubspaceProjector::spectral_gap() const {
  const int m = rank();
  if (m == 0 || singular_values.size() <= m || singular_values[m] <= 0.0)
    return std::numeric_limits<double>::infinity();
  return singular_values[m - 1] / singular_values[m];
}

namespace {

// One Gram-Schmidt sweep against earlier columns, twice, to restore
// orthonormality lost when forming the basis through a Gram matrix.
void reorthonormalize(Mat& u) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    for (int pass = 0; pass < 2; ++pass)
      if (c > 0) u.col(c) -= u.leftCols(c) * (u.leftCols(c).transpose() * u.col(c));
    u.col(c).normalize();
  }
}

}  // namespace

SubspaceProjector build_context(const Mat& m_cols, int dim, int m) {
  const Eigen::Index np = packed_size(dim);
  if (m_cols.rows() != np) throw DimensionError("context: columns are not packed D x D matrices");
  if (m < 1) throw ConfigError("context: subspace dimension must be positive");
  if (m > m_cols.cols())
    throw ConfigError("context: m = " + std::to_string(m) + " exceeds the " +
                      std::to_string(m_cols.cols()) + " available Hessians");
  if (m > np) throw ConfigError("context: m exceeds the dimension of symmetric matrices");
  if (m_cols.cwiseAbs().maxCoeff() == 0.0)
    throw NumericalError("context: no second-order information (all Hessians vanish)");

  const int keep = static_cast<int>(std::min<Eigen::Index>(m + 1, std::min(np, m_cols.cols())));
  SubspaceProjector out;
  out.dim = dim;
  if (m_cols.cols() <= np) {
    Mat gram(m_cols.cols(), m_cols.cols());
    gram.setZero();
    gram.selfadjointView<Eigen::Lower>().rankUpdate(m_cols.transpose());
    const EigenPairs eig = top_eigenpairs(gram, keep);
    out.singular_values = eig.values.cwiseMax(0.0).cwiseSqrt();
    if (out.singular_values[m - 1] <= 0.0)
      throw NumericalError("context: Hessians span fewer than m dimensions");
    out.basis = m_cols * eig.vectors.leftCols(m) *
                out.singular_values.head(m).cwiseInverse().asDiagonal();
    reorthonormalize(out.basis);
  } else {
    Mat gram(np, np);
    gram.setZero();
    gram.selfadjointView<Eigen::Lower>().rankUpdate(m_cols);
    const EigenPairs eig = top_eigenpairs(gram, keep);
    out.singular_values = eig.values.cwiseMax(0.0).cwiseSqrt();
    out.basis = eig.vectors.leftCols(m);
  }
  canonicalize_column_signs(out.basis);
  return out;
}

SubspaceProjector build_context(const HessianBatch& hessians, int m) {
  return build_context(hessians.packed, hessians.dim, m);
}

SubspaceProjector exact_projector(const Mat& weights) {
  const int dim = static_cast<int>(weights.rows());
  const Eigen::Index k = weights.cols();
  Mat outer(packed_size(dim), k);
  for (Eigen::Index i = 0; i < k; ++i) pack_outer(weights.col(i), outer.col(i));

  Eigen::ColPivHouseholderQR<Mat> qr(outer);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    std::vector<int> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < k; ++i) dependent.push_back(perm[i]);
    std::sort(dependent.begin(), dependent.end());
    std::string list;
    for (int i : dependent) list += (list.empty() ? "" : ", ") + std::to_string(i);
    throw RankDeficiencyError("outer products are linearly dependent (indices " + list + ")",
                              dependent);
  }
  Eigen::HouseholderQR<Mat> hqr(outer);
  SubspaceProjector out;
  out.dim = dim;
  out.basis = hqr.householderQ() * Mat::Identity(outer.rows(), k);
  out.singular_values = Eigen::JacobiSVD<Mat>(outer).singularValues();
  canonicalize_column_signs(out.basis);
  return out;
}

double subspace_distance(const SubspaceProjector& a, const SubspaceProjector& b) {
  if (a.basis.rows() != b.basis.rows())
    throw DimensionError("subspace_distance: ambient dimensions differ");
  if (a.rank() == 0) return 0.0;
  const Mat cross = b.basis.transpose() * a.basis;
  const double ra = (a.basis - b.basis * cross).squaredNorm();
  const double rb = (b.basis - a.basis * cross.transpose()).squaredNorm();
  return std::sqrt(ra + rb) / std::sqrt(static_cast<double>(a.rank()));
}

double operator_distance(const SubspaceProjector& a, const SubspaceProjector& b) {
  if (a.basis.rows() != b.basis.rows())
    throw DimensionError("operator_distance: ambient dimensions differ");
  const Mat cross = b.basis.transpose() * a.basis;
  auto spectral = [](const Mat& r) {
    if (r.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Mat>(r).singularValues()[0];
  };
  return std::max(spectral(a.basis - b.basis * cross),
                  spectral(b.basis - a.basis * cross.transpose()));
}

nlohmann::json to_json(const SubspaceProjector& p) {
  nlohmann::json j;
  j["D"] = p.dim;
  j["m"] = p.rank();
  j["singular_values"] =
      std::vector<double>(p.singular_values.data(), p.singular_values.data() + p.singular_values.size());
  j["layout"] = "vec-column-major";
  auto basis = nlohmann::json::array();
  for (int c = 0; c < p.rank(); ++c) {
    const Vec v = full_vec(unpack(p.basis.col(c), p.dim));
    basis.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  j["basis"] = std::move(basis);
  return j;
}

SubspaceProjector projector_from_json(const nlohmann::json& j) {
  SubspaceProjector p;
  p.dim = j.at("D").get<int>();
  const int m = j.at("m").get<int>();
  const auto sv = j.value("singular_values", std::vector<double>{});
  p.singular_values = Eigen::Map<const Vec>(sv.data(), static_cast<Eigen::Index>(sv.size()));
  const auto& basis = j.at("basis");
  if (static_cast<int>(basis.size()) != m) throw DimensionError("projector json: basis count != m");
  p.basis.resize(packed_size(p.dim), m);
  for (int c = 0; c < m; ++c) {
    const auto v = basis[c].get<std::vector<double>>();
    if (static_cast<int>(v.size()) != p.dim * p.dim)
      throw DimensionError("projector json: basis vector has wrong length");
    p.basis.col(c) = pack(Eigen::Map<const Mat>(v.data(), p.dim, p.dim));
  }
  return p;
}

}  // namespace entangle
