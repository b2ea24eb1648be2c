#include "entangle/network.hpp"

#include "entangle/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace entangle {

int NetworkParams::input_dim() const {
  return weights.empty() ? 0 : static_cast<int>(weights.front().rows());
}

int NetworkParams::output_dim() const {
  return weights.empty() ? 0 : static_cast<int>(weights.back().cols());
}

std::vector<int> NetworkParams::widths() const {
  std::vector<int> w;
  w.reserve(weights.size() + 1);
  w.push_back(input_dim());
  for (const auto& W : weights) w.push_back(static_cast<int>(W.cols()));
  return w;
}

int NetworkParams::neuron_count() const {
  int m = 0;
  for (const auto& W : weights) m += static_cast<int>(W.cols());
  return m;
}

bool NetworkParams::pyramidal() const {
  const auto w = widths();
  return std::is_sorted(w.rbegin(), w.rend());
}

void NetworkParams::validate() const {
  if (weights.empty()) throw DimensionError("network has no layers");
  if (weights.size() != shifts.size())
    throw DimensionError("network has " + std::to_string(weights.size()) +
                         " weight matrices but " + std::to_string(shifts.size()) +
                         " shift vectors");
  Eigen::Index prev = weights.front().rows();
  if (prev <= 0) throw DimensionError("layer 1: input dimension is zero");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& W = weights[l];
    if (W.rows() != prev)
      throw DimensionError("layer " + std::to_string(l + 1) + ": weight matrix has " +
                           std::to_string(W.rows()) + " rows, expected " +
                           std::to_string(prev));
    if (W.cols() <= 0)
      throw DimensionError("layer " + std::to_string(l + 1) + ": zero width");
    if (shifts[l].size() != W.cols())
      throw DimensionError("layer " + std::to_string(l + 1) + ": shift has length " +
                           std::to_string(shifts[l].size()) + ", expected " +
                           std::to_string(W.cols()));
    prev = W.cols();
  }
}

void Architecture::validate() const {
  if (input_dim < 1) throw ConfigError("architecture: D must be positive");
  if (depth < 1) throw ConfigError("architecture: L must be at least 1");
  if (output_dim < 1) throw ConfigError("architecture: m_L must be positive");
  if (!(contraction > 0.0 && contraction <= 1.0))
    throw ConfigError("architecture: contraction factor must lie in (0, 1]");
  if (depth == 1 && neurons != output_dim)
    throw ConfigError("architecture: a one-layer network has m == m_L");
  if (depth > 1 && neurons - output_dim < depth - 1)
    throw ConfigError("architecture: too few neurons for " + std::to_string(depth) +
                      " layers");
}

std::vector<int> Architecture::layer_widths() const {
  validate();
  if (depth == 1) return {output_dim};
  const int inner = depth - 1;
  const int budget = neurons - output_dim;
  double denom = 0.0;
  for (int k = 0; k < inner; ++k) denom += std::pow(contraction, k);
  std::vector<int> w(inner);
  for (int k = 0; k < inner; ++k)
    w[k] = std::max(1, static_cast<int>(std::lround(budget * std::pow(contraction, k) / denom)));

  // Keep inner layers at least as wide as the output layer when possible so
  // the widths stay nonincreasing.
  if (budget >= inner * output_dim)
    for (auto& x : w) x = std::max(x, output_dim);

  // Largest layers absorb the rounding slack. Adding goes to the front,
  // removing to the back of the group of equally large layers, so the order
  // stays nonincreasing.
  int slack = budget - std::accumulate(w.begin(), w.end(), 0);
  const int floor_width = budget >= inner * output_dim ? output_dim : 1;
  while (slack != 0) {
    const int largest = *std::max_element(w.begin(), w.end());
    if (slack > 0) {
      auto it = std::find(w.begin(), w.end(), largest);
      ++*it;
      --slack;
    } else {
      int idx = -1;
      for (int k = 0; k < inner; ++k)
        if (w[k] == largest) idx = k;
      if (w[idx] <= floor_width)
        throw ConfigError("architecture: cannot distribute neurons over layers");
      --w[idx];
      ++slack;
    }
  }
  w.push_back(output_dim);
  return w;
}

ForwardPass forward(const NetworkParams& net, const Vec& x) {
  if (x.size() != net.input_dim())
    throw DimensionError("forward: input has length " + std::to_string(x.size()) +
                         ", layer 1 expects " + std::to_string(net.input_dim()));
  ForwardPass pass;
  pass.activations.reserve(net.depth() + 1);
  pass.preactivations.reserve(net.depth());
  pass.activations.push_back(x);
  for (int l = 0; l < net.depth(); ++l) {
    const auto& W = net.weights[l];
    if (W.rows() != pass.activations.back().size())
      throw DimensionError("forward: layer " + std::to_string(l + 1) +
                           " weight rows do not match previous width");
    Vec z = W.transpose() * pass.activations.back() + net.shifts[l];
    Vec y(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) y[i] = activate(net.activation, z[i]);
    pass.preactivations.push_back(std::move(z));
    pass.activations.push_back(std::move(y));
  }
  return pass;
}

Mat forward_batch(const NetworkParams& net, const Mat& inputs) {
  if (inputs.rows() != net.input_dim())
    throw DimensionError("forward_batch: inputs have " + std::to_string(inputs.rows()) +
                         " rows, layer 1 expects " + std::to_string(net.input_dim()));
  Mat y = inputs;
  for (int l = 0; l < net.depth(); ++l) {
    Mat z = net.weights[l].transpose() * y;
    z.colwise() += net.shifts[l];
    y = activate(net.activation, z);
  }
  return y;
}

NetworkParams sample_network(const Architecture& arch, std::uint64_t seed) {
  const auto widths = arch.layer_widths();
  Rng rng(seed);
  std::normal_distribution<double> shift_dist(0.0, 0.05);
  NetworkParams net;
  net.activation = Activation::Tanh;
  net.seed = seed;
  int prev = arch.input_dim;
  for (int width : widths) {
    Mat W(prev, width);
    for (int i = 0; i < width; ++i) W.col(i) = random_unit_vector(prev, rng);
    Vec tau(width);
    for (int i = 0; i < width; ++i) tau[i] = shift_dist(rng);
    net.weights.push_back(std::move(W));
    net.shifts.push_back(std::move(tau));
    prev = width;
  }
  return net;
}

std::vector<Mat> EntangledWeights::normalized() const {
  std::vector<Mat> out;
  out.reserve(layers.size());
  for (const auto& V : layers) out.push_back(V.colwise().normalized());
  return out;
}

Mat EntangledWeights::stacked_normalized() const {
  Eigen::Index cols = 0;
  for (const auto& V : layers) cols += V.cols();
  Mat out(base_point.size(), cols);
  Eigen::Index c = 0;
  for (const auto& V : layers) {
    out.middleCols(c, V.cols()) = V.colwise().normalized();
    c += V.cols();
  }
  return out;
}

std::vector<int> EntangledWeights::layer_of_column() const {
  std::vector<int> out;
  for (std::size_t l = 0; l < layers.size(); ++l)
    out.insert(out.end(), layers[l].cols(), static_cast<int>(l));
  return out;
}

EntangledWeights entangled_weights(const NetworkParams& net, const Vec& x) {
  const ForwardPass pass = forward(net, x);
  EntangledWeights ew;
  ew.base_point = x;
  ew.layers.reserve(net.depth());
  ew.layers.push_back(net.weights[0]);
  for (int l = 1; l < net.depth(); ++l) {
    Vec g1(pass.preactivations[l - 1].size());
    for (Eigen::Index i = 0; i < g1.size(); ++i)
      g1[i] = activate_d1(net.activation, pass.preactivations[l - 1][i]);
    ew.layers.push_back(ew.layers.back() * g1.asDiagonal() * net.weights[l]);
  }
  return ew;
}

Permutation identity_permutation(int n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

bool is_permutation(const Permutation& p, int n) {
  if (static_cast<int>(p.size()) != n) return false;
  std::vector<char> seen(n, 0);
  for (int v : p) {
    if (v < 0 || v >= n || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

Vec permute_transpose(const Permutation& p, const Vec& v) {
  Vec out(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = v[p[i]];
  return out;
}

Mat permute_columns(const Mat& m, const Permutation& p) {
  Mat out(m.rows(), static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) out.col(i) = m.col(p[i]);
  return out;
}

Mat pseudo_inverse(const Mat& a, double rcond) {
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rcond * s[0] : 0.0;
  Vec inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) inv[i] = s[i] > cutoff ? 1.0 / s[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

bool has_full_column_rank(const Mat& a, double tol) {
  if (a.cols() == 0) return true;
  if (a.cols() > a.rows()) return false;
  Eigen::JacobiSVD<Mat> svd(a);
  const Vec& s = svd.singularValues();
  return s[s.size() - 1] >= tol * s[0] && s[0] > 0.0;
}

NetworkParams reparametrize(const ReparametrizationInput& in) {
  const std::size_t L = in.v_tilde.size();
  if (L == 0) throw DimensionError("reparametrize: no layers");
  if (in.scales.size() != L || in.shifts.size() != L || in.perms.size() != L ||
      in.diagonals.size() + 1 != L)
    throw DimensionError("reparametrize: inconsistent number of layers");
  for (std::size_t l = 0; l < L; ++l) {
    const auto& V = in.v_tilde[l];
    const int m = static_cast<int>(V.cols());
    if (in.scales[l].size() != m || in.shifts[l].size() != m ||
        !is_permutation(in.perms[l], m) || (l + 1 < L && in.diagonals[l].size() != m))
      throw DimensionError("reparametrize: layer " + std::to_string(l + 1) +
                           " has inconsistent sizes");
    if (V.rows() != in.v_tilde[0].rows())
      throw DimensionError("reparametrize: layer " + std::to_string(l + 1) +
                           " has wrong ambient dimension");
    if (!has_full_column_rank(V))
      throw RankDeficiencyError("reparametrize: V~_" + std::to_string(l + 1) +
                                    " is rank deficient",
                                {static_cast<int>(l)});
  }
  NetworkParams net;
  net.activation = in.activation;
  // W~_1 = V~_1 S_1^{-1}
  net.weights.push_back(in.v_tilde[0] * in.scales[0].cwiseInverse().asDiagonal());
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const Vec d_tilde = permute_transpose(in.perms[l], in.diagonals[l]);
    const Mat pinv = pseudo_inverse(in.v_tilde[l].transpose());  // D x m_l
    Mat wt = in.scales[l + 1].cwiseInverse().asDiagonal() * in.v_tilde[l + 1].transpose() *
             pinv * in.scales[l].asDiagonal() * d_tilde.cwiseInverse().asDiagonal();
    net.weights.push_back(wt.transpose());
  }
  for (std::size_t l = 0; l < L; ++l)
    net.shifts.push_back(permute_transpose(in.perms[l], in.shifts[l]));
  return net;
}

nlohmann::json to_json(const NetworkParams& net) {
  net.validate();
  nlohmann::json j;
  j["widths"] = net.widths();
  auto weights = nlohmann::json::array();
  for (const auto& W : net.weights)
    weights.push_back(std::vector<double>(W.data(), W.data() + W.size()));
  j["weights"] = std::move(weights);
  auto shifts = nlohmann::json::array();
  for (const auto& t : net.shifts)
    shifts.push_back(std::vector<double>(t.data(), t.data() + t.size()));
  j["shifts"] = std::move(shifts);
  j["activation"] = to_string(net.activation);
  if (net.seed) j["seed"] = *net.seed;
  return j;
}

NetworkParams network_from_json(const nlohmann::json& j) {
  NetworkParams net;
  const auto widths = j.at("widths").get<std::vector<int>>();
  const auto& weights = j.at("weights");
  const auto& shifts = j.at("shifts");
  if (widths.size() < 2 || weights.size() + 1 != widths.size() ||
      shifts.size() + 1 != widths.size())
    throw DimensionError("network json: widths/weights/shifts disagree");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto flat = weights[l].get<std::vector<double>>();
    const auto tau = shifts[l].get<std::vector<double>>();
    if (flat.size() != static_cast<std::size_t>(widths[l]) * widths[l + 1])
      throw DimensionError("network json: layer " + std::to_string(l + 1) +
                           " weight payload has wrong size");
    if (tau.size() != static_cast<std::size_t>(widths[l + 1]))
      throw DimensionError("network json: layer " + std::to_string(l + 1) +
                           " shift payload has wrong size");
    net.weights.push_back(Eigen::Map<const Mat>(flat.data(), widths[l], widths[l + 1]));
    net.shifts.push_back(Eigen::Map<const Vec>(tau.data(), widths[l + 1]));
  }
  net.activation = activation_from_string(j.value("activation", std::string("tanh")));
  if (j.contains("seed") && !j["seed"].is_null()) net.seed = j["seed"].get<std::uint64_t>();
  net.validate();
  return net;
}

}  // namespace entangle
