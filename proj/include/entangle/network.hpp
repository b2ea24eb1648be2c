#pragma once

#include "entangle/activation.hpp"
#include "entangle/common.hpp"

#include "json.hpp"

#include <optional>
#include <vector>

namespace entangle {

/// Feedforward network y^[l] = g(W_l^T y^[l-1] + tau_l), y^[0] = x.
///
/// weights[l] has shape m_{l} x m_{l+1} in zero-based layer numbering, i.e.
/// W_1 is D x m_1. Columns of W_l are the neuron weight vectors.
struct NetworkParams {
  std::vector<Mat> weights;
  std::vector<Vec> shifts;
  Activation activation = Activation::Tanh;
  std::optional<std::uint64_t> seed;

  int depth() const { return static_cast<int>(weights.size()); }
  int input_dim() const;
  int output_dim() const;
  /// m_0 = D, m_1, ..., m_L.
  std::vector<int> widths() const;
  /// m = m_1 + ... + m_L.
  int neuron_count() const;
  bool pyramidal() const;

  /// Throws DimensionError naming the first inconsistent layer.
  void validate() const;
};

/// Shape parameters (D, L, m_L, m, c) of a sampled teacher.
struct Architecture {
  int input_dim = 0;     // D
  int depth = 0;         // L
  int output_dim = 0;    // m_L
  int neurons = 0;       // m, total over all layers
  double contraction = 1.0;  // c in (0, 1]

  /// Throws ConfigError if the combination cannot be realised.
  void validate() const;
  /// Per-layer widths m_1..m_L summing to `neurons`.
  std::vector<int> layer_widths() const;
};

/// Activations of every layer for one input.
struct ForwardPass {
  std::vector<Vec> activations;     // y^[0] = x, ..., y^[L]
  std::vector<Vec> preactivations;  // W_l^T y^[l-1] + tau_l, l = 1..L
  const Vec& output() const { return activations.back(); }
};

ForwardPass forward(const NetworkParams& net, const Vec& x);

/// Batched evaluation; columns of `inputs` are points. Returns m_L x N.
Mat forward_batch(const NetworkParams& net, const Mat& inputs);

/// Unit-sphere weight columns, N(0, 0.05^2) shifts; deterministic per seed.
NetworkParams sample_network(const Architecture& arch, std::uint64_t seed);

/// Entangled weight matrices V_l(x) = (prod_{k<l} W_k G_k(x)) W_l.
struct EntangledWeights {
  Vec base_point;
  std::vector<Mat> layers;  // V_1..V_L, V_l is D x m_l

  /// Columns scaled to unit length, per layer.
  std::vector<Mat> normalized() const;
  /// All normalized entangled weights side by side (D x m), layer order.
  Mat stacked_normalized() const;
  /// Layer index (0-based) of each stacked column.
  std::vector<int> layer_of_column() const;
};

EntangledWeights entangled_weights(const NetworkParams& net, const Vec& x);

/// Permutation pi of {0..n-1}: (M pi) column i is column perm[i] of M and
/// (pi^T v)_i = v[perm[i]].
using Permutation = std::vector<int>;

Permutation identity_permutation(int n);
bool is_permutation(const Permutation& p, int n);
Vec permute_transpose(const Permutation& p, const Vec& v);  // pi^T v
Mat permute_columns(const Mat& m, const Permutation& p);    // M pi

/// Pseudoinverse via SVD; singular values below rcond * sigma_max are dropped.
Mat pseudo_inverse(const Mat& a, double rcond = 1e-12);

/// Smallest singular value below 1e-10 * largest counts as rank deficient.
bool has_full_column_rank(const Mat& a, double tol = 1e-10);

/// Inputs of the equivalent-network construction.
struct ReparametrizationInput {
  std::vector<Mat> v_tilde;      // V~_1..V~_L, D x m_l
  std::vector<Vec> scales;       // diagonal of S_1..S_L
  std::vector<Vec> diagonals;    // diagonal of D_1..D_{L-1}
  std::vector<Vec> shifts;       // tau_1..tau_L (teacher order)
  std::vector<Permutation> perms;  // pi_1..pi_L
  Activation activation = Activation::Tanh;
};

/// Builds W~_1^T = S_1^{-1} V~_1^T and
/// W~_{l+1}^T = S_{l+1}^{-1} V~_{l+1}^T (V~_l^T)^+ S_l D~_l^{-1},
/// D~_l = pi_l^T D_l pi_l, tau~_l = pi_l^T tau_l.
/// Throws RankDeficiencyError if some V~_l lacks full column rank.
NetworkParams reparametrize(const ReparametrizationInput& in);

nlohmann::json to_json(const NetworkParams& net);
NetworkParams network_from_json(const nlohmann::json& j);

}  // namespace entangle
