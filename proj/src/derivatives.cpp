#include "entangle/derivatives.hpp"

#include "entangle/parallel.hpp"
#include "entangle/random.hpp"
#include "entangle/symmetric.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace entangle {

namespace {

void check_finite(const Mat& values, const std::function<Vec(Eigen::Index)>& point_of) {
  if (values.allFinite()) return;
  for (Eigen::Index k = 0; k < values.cols(); ++k) {
    if (!values.col(k).allFinite()) {
      Vec x = point_of(k);
      std::ostringstream msg;
      msg << "oracle returned a non-finite value at x = [";
      for (Eigen::Index i = 0; i < x.size(); ++i) msg << (i ? ", " : "") << x[i];
      msg << "]";
      throw NonFiniteQueryError(msg.str(), std::move(x));
    }
  }
}

Vec stencil_point(const Vec& base, const StencilOffset& o) {
  Vec x = base;
  x[o.i] += o.a;
  x[o.j] += o.b;
  return x;
}

struct LayerCache {
  std::vector<Vec> g1;  // g'(z_l)
  std::vector<Vec> g2;  // g''(z_l)
};

LayerCache derivative_cache(const NetworkParams& net, const Vec& x) {
  const ForwardPass pass = forward(net, x);
  LayerCache c;
  for (const auto& z : pass.preactivations) {
    Vec d1(z.size()), d2(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      d1[i] = activate_d1(net.activation, z[i]);
      d2[i] = activate_d2(net.activation, z[i]);
    }
    c.g1.push_back(std::move(d1));
    c.g2.push_back(std::move(d2));
  }
  return c;
}

void check_output_index(const NetworkParams& net, int p) {
  if (p < 0 || p >= net.output_dim())
    throw DimensionError("output index " + std::to_string(p) + " out of range [0, " +
                         std::to_string(net.output_dim()) + ")");
}

}  // namespace

Mat QueryOracle::query(const Mat& points) const {
  if (points.rows() != input_dim())
    throw DimensionError("oracle: points have " + std::to_string(points.rows()) +
                         " rows, expected " + std::to_string(input_dim()));
  Mat values = evaluate(points);
  queries_.fetch_add(static_cast<std::uint64_t>(points.cols()));
  check_finite(values, [&](Eigen::Index k) { return Vec(points.col(k)); });
  return values;
}

Mat QueryOracle::query_stencil(const Vec& base, std::span<const StencilOffset> offsets) const {
  if (base.size() != input_dim()) throw DimensionError("oracle: stencil base has wrong length");
  Mat values = evaluate_stencil(base, offsets);
  queries_.fetch_add(static_cast<std::uint64_t>(offsets.size()));
  check_finite(values, [&](Eigen::Index k) { return stencil_point(base, offsets[k]); });
  return values;
}

Mat QueryOracle::evaluate_stencil(const Vec& base, std::span<const StencilOffset> offsets) const {
  Mat points(base.size(), static_cast<Eigen::Index>(offsets.size()));
  for (std::size_t k = 0; k < offsets.size(); ++k) points.col(k) = stencil_point(base, offsets[k]);
  return evaluate(points);
}

NetworkOracle::NetworkOracle(NetworkParams net) : net_(std::move(net)) { net_.validate(); }

Mat NetworkOracle::evaluate(const Mat& points) const { return forward_batch(net_, points); }

Mat NetworkOracle::evaluate_stencil(const Vec& base,
                                    std::span<const StencilOffset> offsets) const {
  const Mat& W1 = net_.weights[0];
  const Vec z0 = W1.transpose() * base + net_.shifts[0];
  Mat z(z0.size(), static_cast<Eigen::Index>(offsets.size()));
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const auto& o = offsets[k];
    z.col(k) = z0 + o.a * W1.row(o.i).transpose() + o.b * W1.row(o.j).transpose();
  }
  Mat y = activate(net_.activation, z);
  for (int l = 1; l < net_.depth(); ++l) {
    z.noalias() = net_.weights[l].transpose() * y;
    z.colwise() += net_.shifts[l];
    y = activate(net_.activation, z);
  }
  return y;
}

FunctionOracle::FunctionOracle(int input_dim, int output_dim, std::function<Vec(const Vec&)> f)
    : in_(input_dim), out_(output_dim), f_(std::move(f)) {}

Mat FunctionOracle::evaluate(const Mat& points) const {
  Mat out(out_, points.cols());
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    Vec v = f_(points.col(k));
    if (v.size() != out_) throw DimensionError("function oracle returned wrong output length");
    out.col(k) = v;
  }
  return out;
}

SamplingLaw SamplingLaw::sphere(int dim, double radius) {
  return {Kind::UniformSphere, radius, Vec::Zero(dim)};
}

SamplingLaw SamplingLaw::gaussian(int dim, double sigma) {
  return {Kind::Gaussian, sigma, Vec::Zero(dim)};
}

void SamplingLaw::validate(int dim) const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ConfigError("sampling law: scale must be positive");
  if (center.size() != 0 && center.size() != dim)
    throw DimensionError("sampling law: center has length " + std::to_string(center.size()) +
                         ", expected " + std::to_string(dim));
}

Vec SamplingLaw::center_or_zero(int dim) const {
  return center.size() == 0 ? Vec::Zero(dim) : center;
}

double SamplingLaw::psi2_norm(int dim) const {
  return kind == Kind::UniformSphere ? scale / std::sqrt(static_cast<double>(dim)) : scale;
}

std::string SamplingLaw::describe() const {
  std::ostringstream os;
  os << (kind == Kind::UniformSphere ? "sphere(R=" : "gaussian(sigma=") << scale;
  if (center.size() != 0 && !center.isZero(0.0)) os << ",centered";
  os << ")";
  return os.str();
}

nlohmann::json to_json(const SamplingLaw& law) {
  nlohmann::json j;
  j["kind"] = law.kind == SamplingLaw::Kind::UniformSphere ? "sphere" : "gaussian";
  j["scale"] = law.scale;
  if (law.center.size() != 0)
    j["center"] = std::vector<double>(law.center.data(), law.center.data() + law.center.size());
  return j;
}

SamplingLaw sampling_law_from_json(const nlohmann::json& j) {
  SamplingLaw law;
  const auto kind = j.value("kind", std::string("sphere"));
  if (kind == "sphere")
    law.kind = SamplingLaw::Kind::UniformSphere;
  else if (kind == "gaussian")
    law.kind = SamplingLaw::Kind::Gaussian;
  else
    throw ConfigError("sampling law: unknown kind '" + kind + "'");
  law.scale = j.value("scale", law.scale);
  if (j.contains("center")) {
    const auto c = j["center"].get<std::vector<double>>();
    law.center = Eigen::Map<const Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
  }
  return law;
}

Mat sample_points(const SamplingLaw& law, int dim, int count, std::uint64_t seed) {
  law.validate(dim);
  if (count < 1) throw ConfigError("sample_points: need at least one point");
  Rng rng(seed);
  const Vec c = law.center_or_zero(dim);
  Mat out(dim, count);
  for (int k = 0; k < count; ++k) {
    if (law.kind == SamplingLaw::Kind::UniformSphere)
      out.col(k) = c + law.scale * random_unit_vector(dim, rng);
    else
      out.col(k) = c + law.scale * random_gaussian(dim, 1, rng);
  }
  return out;
}

Mat analytic_jacobian(const NetworkParams& net, const Vec& x) {
  const LayerCache c = derivative_cache(net, x);
  Mat v = net.weights[0];
  for (int l = 1; l < net.depth(); ++l) v = v * c.g1[l - 1].asDiagonal() * net.weights[l];
  return v * c.g1.back().asDiagonal();
}

Vec analytic_gradient(const NetworkParams& net, const Vec& x, int p) {
  check_output_index(net, p);
  return analytic_jacobian(net, x).col(p);
}

std::vector<Mat> analytic_hessians(const NetworkParams& net, const Vec& x) {
  const LayerCache c = derivative_cache(net, x);
  const int L = net.depth();
  const int mL = net.output_dim();
  std::vector<Mat> v(L);
  v[0] = net.weights[0];
  for (int l = 1; l < L; ++l) v[l] = v[l - 1] * c.g1[l - 1].asDiagonal() * net.weights[l];
  // back[l] = W_{l+1} G_{l+1} ... W_L G_L, with back[L-1] = Id.
  std::vector<Mat> back(L);
  back[L - 1] = Mat::Identity(mL, mL);
  for (int l = L - 2; l >= 0; --l)
    back[l] = net.weights[l + 1] * c.g1[l + 1].asDiagonal() * back[l + 1];

  const int d = net.input_dim();
  std::vector<Mat> out(mL, Mat::Zero(d, d));
  for (int p = 0; p < mL; ++p) {
    Mat& h = out[p];
    for (int l = 0; l < L; ++l) {
      const Vec s = c.g2[l].cwiseProduct(back[l].col(p));
      if (s.isZero(0.0)) continue;
      h.noalias() += v[l] * s.asDiagonal() * v[l].transpose();
    }
    h = 0.5 * (h + h.transpose()).eval();
  }
  return out;
}

Mat analytic_hessian(const NetworkParams& net, const Vec& x, int p) {
  check_output_index(net, p);
  return analytic_hessians(net, x)[p];
}

std::vector<Mat> fd_hessians(const QueryOracle& oracle, const Vec& x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite differences: step must be positive");
  const int d = oracle.input_dim();
  const int mL = oracle.output_dim();
  if (x.size() != d) throw DimensionError("finite differences: point has wrong length");

  std::vector<StencilOffset> offsets;
  offsets.reserve(static_cast<std::size_t>(2) * d * (d + 1));
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) {
      offsets.push_back({i, j, eps, eps});
      offsets.push_back({i, j, eps, -eps});
      offsets.push_back({i, j, -eps, eps});
      offsets.push_back({i, j, -eps, -eps});
    }

  std::vector<Mat> out(mL, Mat(d, d));
  const double denom = 4.0 * eps * eps;
  constexpr std::size_t kChunk = 4096;  // multiple of 4
  std::size_t entry = 0;
  int i = 0, j = 0;
  for (std::size_t start = 0; start < offsets.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, offsets.size() - start);
    const Mat f = oracle.query_stencil(x, std::span(offsets).subspan(start, len));
    for (std::size_t k = 0; k < len; k += 4, ++entry) {
      i = offsets[start + k].i;
      j = offsets[start + k].j;
      for (int p = 0; p < mL; ++p) {
        const double h = ((f(p, k) - f(p, k + 1)) - (f(p, k + 2) - f(p, k + 3))) / denom;
        out[p](i, j) = h;
        out[p](j, i) = h;
      }
    }
  }
  return out;
}

Mat fd_hessian(const QueryOracle& oracle, const Vec& x, double eps, int p) {
  if (p < 0 || p >= oracle.output_dim()) throw DimensionError("output index out of range");
  return fd_hessians(oracle, x, eps)[p];
}

Mat HessianBatch::hessian(int location, int output) const {
  return unpack(packed.col(static_cast<Eigen::Index>(output) * locations() + location), dim);
}

Mat HessianBatch::packed_without_output(int output) const {
  const int n = locations();
  Mat out(packed.rows(), static_cast<Eigen::Index>(n) * (outputs - 1));
  int c = 0;
  for (int p = 0; p < outputs; ++p) {
    if (p == output) continue;
    out.middleCols(static_cast<Eigen::Index>(c++) * n, n) = packed.middleCols(static_cast<Eigen::Index>(p) * n, n);
  }
  return out;
}

Mat HessianBatch::normalized_packed() const {
  Mat out = packed;
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    const double nrm = out.col(k).norm();
    if (nrm > 0.0) out.col(k) /= nrm;
  }
  return out;
}

namespace {
HessianBatch make_batch(int dim, int outputs, const Mat& points, const SamplingLaw& law) {
  HessianBatch b;
  b.dim = dim;
  b.outputs = outputs;
  b.points = points;
  b.law = law;
  b.packed.resize(packed_size(dim), points.cols() * outputs);
  return b;
}
}  // namespace

HessianBatch analytic_hessian_batch(const NetworkParams& net, const Mat& points,
                                    const SamplingLaw& law) {
  if (points.rows() != net.input_dim()) throw DimensionError("hessian batch: wrong point length");
  HessianBatch b = make_batch(net.input_dim(), net.output_dim(), points, law);
  b.source = HessianBatch::Source::Analytic;
  const Eigen::Index n = points.cols();
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto hs = analytic_hessians(net, points.col(static_cast<Eigen::Index>(i)));
    for (int p = 0; p < b.outputs; ++p) b.packed.col(p * n + static_cast<Eigen::Index>(i)) = pack(hs[p]);
  });
  return b;
}

HessianBatch fd_hessian_batch(const QueryOracle& oracle, const Mat& points, double eps,
                              const SamplingLaw& law) {
  if (points.rows() != oracle.input_dim()) throw DimensionError("hessian batch: wrong point length");
  HessianBatch b = make_batch(oracle.input_dim(), oracle.output_dim(), points, law);
  b.source = HessianBatch::Source::FiniteDifference;
  b.epsilon = eps;
  const Eigen::Index n = points.cols();
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto hs = fd_hessians(oracle, points.col(static_cast<Eigen::Index>(i)), eps);
    for (int p = 0; p < b.outputs; ++p) b.packed.col(p * n + static_cast<Eigen::Index>(i)) = pack(hs[p]);
  });
  return b;
}

void write_csv(const HessianBatch& batch, std::ostream& os) {
  os << "# D=" << batch.dim << ",m_L=" << batch.outputs << ",epsilon=" << batch.epsilon
     << ",source=" << (batch.source == HessianBatch::Source::Analytic ? "analytic" : "fd")
     << ",law=" << batch.law.describe() << "\n";
  os << "location,output";
  for (int k = 0; k < batch.dim * batch.dim; ++k) os << ",h" << k;
  os << "\n" << std::setprecision(17);
  for (int p = 0; p < batch.outputs; ++p)
    for (int i = 0; i < batch.locations(); ++i) {
      const Mat h = batch.hessian(i, p);
      os << i << "," << p;
      for (Eigen::Index k = 0; k < h.size(); ++k) os << "," << h.data()[k];
      os << "\n";
    }
}

}  // namespace entangle
