#include "entangle/theory_checks.hpp"

#include "entangle/linalg.hpp"
#include "entangle/parallel.hpp"
#include "entangle/random.hpp"
#include "entangle/symmetric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace entangle {

namespace {

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

double max_column_norm(const Mat& m) {
  return m.cols() == 0 ? 0.0 : m.colwise().norm().maxCoeff();
}

double ratio(double lhs, double rhs) {
  if (lhs == 0.0) return 0.0;
  if (rhs == 0.0) return std::numeric_limits<double>::infinity();
  return lhs / rhs;
}

/// prod_{k in [first, last)} ||W_k|| with zero-based layer indices.
double norm_product(const std::vector<double>& norms, int first, int last) {
  double p = 1.0;
  for (int k = first; k < last; ++k) p *= norms[k];
  return p;
}

/// Frobenius norms of S_p^[l](x) for every layer l and output p (L x m_L).
Mat curvature_norms(const NetworkParams& net, const Vec& x) {
  const int depth = net.depth();
  const int outputs = net.output_dim();
  const ForwardPass fp = forward(net, x);
  std::vector<Mat> back(depth);
  back[depth - 1] = Mat::Identity(outputs, outputs);
  for (int l = depth - 2; l >= 0; --l) {
    Vec d1(fp.preactivations[l + 1].size());
    for (Eigen::Index i = 0; i < d1.size(); ++i)
      d1(i) = activate_d1(net.activation, fp.preactivations[l + 1](i));
    back[l] = net.weights[l + 1] * d1.asDiagonal() * back[l + 1];
  }
  Mat out(depth, outputs);
  for (int l = 0; l < depth; ++l) {
    Vec d2(fp.preactivations[l].size());
    for (Eigen::Index i = 0; i < d2.size(); ++i)
      d2(i) = activate_d2(net.activation, fp.preactivations[l](i));
    for (int p = 0; p < outputs; ++p) out(l, p) = d2.cwiseProduct(back[l].col(p)).norm();
  }
  return out;
}

}  // namespace

FrameReport frame_constant(const Mat& weights) {
  FrameReport r;
  const Mat frame = weights * weights.transpose();
  const Vec fe = symmetric_eigenvalues(frame);
  r.frame_min = fe(0);
  r.frame_max = fe(fe.size() - 1);
  r.nu = std::max(r.frame_max - 1.0, 1.0 - r.frame_min);
  r.gram = (weights.transpose() * weights).array().square().matrix();
  if (r.gram.size() > 0) {
    const Vec ge = symmetric_eigenvalues(r.gram);
    r.gram_min = ge(0);
    r.gram_max = ge(ge.size() - 1);
  }
  return r;
}

double gram_phi(const Mat& weights, const Vec& u) {
  if (u.size() != weights.rows()) throw DimensionError("gram_phi: u has the wrong length");
  const Mat gram = (weights.transpose() * weights).array().square().matrix();
  const Vec beta = (weights.transpose() * u).array().square().matrix();
  Eigen::SelfAdjointEigenSolver<Mat> es(gram);
  const Vec& ev = es.eigenvalues();
  if (ev.size() == 0) return 0.0;
  if (!(ev(0) > 1e-12 * std::max(1.0, ev(ev.size() - 1)))) {
    std::vector<int> idx;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (!(ev(i) > 1e-12 * std::max(1.0, ev(ev.size() - 1)))) idx.push_back(static_cast<int>(i));
    throw RankDeficiencyError("gram_phi: Gram matrix of the weight outer products is singular", idx);
  }
  const Vec c = es.eigenvectors().transpose() * beta;
  return c.cwiseQuotient(ev).dot(c);
}

double entangled_lipschitz_constant(const NetworkParams& net, int layer) {
  if (layer < 1 || layer > net.depth()) throw DimensionError("layer index out of range");
  const double kappa = derivative_bound(net.activation);
  std::vector<double> norms;
  for (const Mat& w : net.weights) norms.push_back(spectral_norm(w));
  double sum = 0.0;
  for (int k = 1; k < layer; ++k)
    sum += std::pow(kappa, layer + k - 2) * max_column_norm(net.weights[k - 1]) *
           norm_product(norms, 0, k - 1);
  return norm_product(norms, 0, layer) * sum;
}

LipschitzReport lipschitz_bound_check(const NetworkParams& net, const Mat& first,
                                      const Mat& second) {
  net.validate();
  if (first.rows() != net.input_dim() || second.rows() != net.input_dim() ||
      first.cols() != second.cols())
    throw DimensionError("lipschitz_bound_check: point matrices must be D x P and equal in size");
  const int depth = net.depth();
  const double kappa = derivative_bound(net.activation);
  std::vector<double> norms;
  for (const Mat& w : net.weights) norms.push_back(spectral_norm(w));
  std::vector<double> size_rhs(depth), lip(depth), curv_rhs(depth);
  for (int l = 0; l < depth; ++l) {
    size_rhs[l] = std::pow(kappa, l) * norm_product(norms, 0, l + 1);
    lip[l] = entangled_lipschitz_constant(net, l + 1);
    curv_rhs[l] = std::pow(kappa, depth - l) * norm_product(norms, l + 1, depth);
  }

  const auto pairs = static_cast<std::size_t>(first.cols());
  std::vector<std::array<double, 3>> worst(pairs);
  parallel_for(pairs, [&](std::size_t i) {
    const Vec x = first.col(i);
    const Vec y = second.col(i);
    const EntangledWeights vx = entangled_weights(net, x);
    const EntangledWeights vy = entangled_weights(net, y);
    const Mat cx = curvature_norms(net, x);
    const Mat cy = curvature_norms(net, y);
    const double dist = (x - y).norm();
    std::array<double, 3> w{0.0, 0.0, 0.0};
    for (int l = 0; l < depth; ++l) {
      w[0] = std::max({w[0], ratio(spectral_norm(vx.layers[l]), size_rhs[l]),
                       ratio(spectral_norm(vy.layers[l]), size_rhs[l])});
      w[1] = std::max(w[1], ratio(spectral_norm(vx.layers[l] - vy.layers[l]), lip[l] * dist));
      w[2] = std::max({w[2], ratio(cx.row(l).maxCoeff(), curv_rhs[l]),
                       ratio(cy.row(l).maxCoeff(), curv_rhs[l])});
    }
    worst[i] = w;
  });

  LipschitzReport r;
  r.kappa = kappa;
  r.pairs = static_cast<int>(pairs);
  for (const auto& w : worst) {
    r.norm_ratio = std::max(r.norm_ratio, w[0]);
    r.difference_ratio = std::max(r.difference_ratio, w[1]);
    r.curvature_ratio = std::max(r.curvature_ratio, w[2]);
  }
  return r;
}

SubspaceProjector spurious_subspace(const Vec& w, const Vec& u, double delta) {
  if (w.size() != u.size()) throw DimensionError("spurious_subspace: w and u differ in length");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("spurious_subspace: delta must lie in (0, 1)");
  if (std::abs(w.norm() - 1.0) > 1e-10 || std::abs(u.norm() - 1.0) > 1e-10)
    throw ConfigError("spurious_subspace: w and u must be unit vectors");
  if (std::abs(w.dot(u)) > 1e-10) throw ConfigError("spurious_subspace: w and u are not orthogonal");
  const Mat m = std::sqrt(1.0 - delta) * w * w.transpose() - std::sqrt(delta) * u * u.transpose();
  Vec packed = pack(m);
  packed /= packed.norm();
  SubspaceProjector p;
  p.dim = static_cast<int>(w.size());
  p.basis = packed;
  p.singular_values = Vec::Ones(1);
  return p;
}

double TheoremReport::normalized_bound(int neurons) const {
  return bound / std::sqrt(static_cast<double>(neurons));
}

TheoremReport theorem_constants(const NetworkParams& net, const SamplingLaw& law,
                                const TheoremConfig& config) {
  net.validate();
  const int dim = net.input_dim();
  const int depth = net.depth();
  const int outputs = net.output_dim();
  const int neurons = net.neuron_count();
  law.validate(dim);

  TheoremReport r;
  r.kappa = derivative_bound(net.activation);
  std::vector<double> norms;
  for (const Mat& w : net.weights) norms.push_back(spectral_norm(w));
  double sum = 0.0;
  for (int l = 2; l <= depth; ++l) sum += entangled_lipschitz_constant(net, l);
  r.c_bar = std::pow(r.kappa, depth) * norm_product(norms, 0, depth) * sum;
  r.psi2 = law.psi2_norm(dim);

  const int np = packed_size(dim);
  Mat moment = Mat::Zero(np, np);
  const int chunk = 256;
  for (int start = 0; start < config.moment_samples; start += chunk) {
    const int count = std::min(chunk, config.moment_samples - start);
    const Mat pts = sample_points(law, dim, count, derive_seed(config.seed, "moment", start));
    const HessianBatch batch = analytic_hessian_batch(net, pts, law);
    moment.selfadjointView<Eigen::Lower>().rankUpdate(batch.packed);
  }
  moment /= std::max(1, config.moment_samples);
  const int k = std::min(neurons, np);
  const EigenPairs top = top_eigenpairs(moment, k);
  r.top_moment = std::max(0.0, top.values(0));
  r.alpha = neurons <= np ? std::max(0.0, top.values(k - 1)) : 0.0;
  r.identifiable = r.top_moment > 0.0 && r.alpha > 1e-10 * r.top_moment;

  if (config.fd_samples > 0) {
    const NetworkOracle oracle(net);
    const Mat pts = sample_points(law, dim, config.fd_samples, derive_seed(config.seed, "fd"));
    std::vector<double> err(config.fd_samples, 0.0);
    parallel_for(static_cast<std::size_t>(config.fd_samples), [&](std::size_t i) {
      const Vec x = pts.col(i);
      const auto fd = fd_hessians(oracle, x, config.epsilon);
      const auto exact = analytic_hessians(net, x);
      for (int p = 0; p < outputs; ++p) err[i] = std::max(err[i], (fd[p] - exact[p]).norm());
    });
    r.fd_error = *std::max_element(err.begin(), err.end());
  }

  const double denom = r.alpha / 2.0 - outputs * r.fd_error * r.fd_error;
  r.bound = denom > 0.0 ? 2.0 * std::sqrt(static_cast<double>(outputs)) *
                              (r.fd_error + r.c_bar * std::sqrt(static_cast<double>(dim)) * r.psi2) /
                              std::sqrt(denom)
                        : std::numeric_limits<double>::infinity();
  return r;
}

nlohmann::json to_json(const FrameReport& r) {
  return {{"nu", r.nu},           {"frame_min", r.frame_min}, {"frame_max", r.frame_max},
          {"gram_min", r.gram_min}, {"gram_max", r.gram_max}, {"holds", r.holds()}};
}

nlohmann::json to_json(const LipschitzReport& r) {
  return {{"kappa", r.kappa},
          {"pairs", r.pairs},
          {"norm_ratio", r.norm_ratio},
          {"difference_ratio", r.difference_ratio},
          {"curvature_ratio", r.curvature_ratio},
          {"holds", r.holds()}};
}

nlohmann::json to_json(const TheoremReport& r) {
  nlohmann::json j = {{"kappa", r.kappa},
                      {"c_bar", r.c_bar},
                      {"alpha", r.alpha},
                      {"top_moment", r.top_moment},
                      {"fd_error", r.fd_error},
                      {"psi2", r.psi2},
                      {"identifiable", r.identifiable}};
  j["bound"] = std::isfinite(r.bound) ? nlohmann::json(r.bound) : nlohmann::json(nullptr);
  if (!r.identifiable) j["note"] = "not identifiable by this method: Hessians vanish";
  return j;
}

}  // namespace entangle
