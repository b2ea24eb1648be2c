#pragma once

#include "entangle/common.hpp"
#include "entangle/network.hpp"

#include <functional>
#include <vector>

namespace entangle {

/// Residual parameters: shifts and scales per layer, mixing diagonals for
/// every layer but the last.
struct CompletionParams {
  std::vector<Vec> shifts;  // tau^_l, l = 1..L
  std::vector<Vec> scales;  // T_l, l = 1..L
  std::vector<Vec> mixing;  // R_l, l = 1..L-1

  /// tau^ = 0, T = Id, R = Id.
  static CompletionParams identity(const std::vector<int>& widths);
  /// 2 sum_l m_l + sum_{l<L} m_l.
  int size() const;
  Vec flatten() const;
  void assign(const Vec& flat);
  bool all_finite() const;
};

/// Parameter count for the given layer widths m_1..m_L.
int completion_parameter_count(const std::vector<int>& widths);

struct TrainSet {
  Mat inputs;   // D x N
  Mat targets;  // m_L x N, teacher output order
};

/// Inputs X ~ N(0, Id/D), targets from the network.
TrainSet make_train_set(const NetworkParams& teacher, int count, std::uint64_t seed);

/// The network induced by fixed entangled weight estimates and free
/// parameters: W^_1 = T_1 V~_1^T, W^_{l+1} = T_{l+1} V~_{l+1}^T (V~_l^T)^+ R_l.
/// Model output k is compared with teacher output output_perm[k].
class CompletionModel {
 public:
  CompletionModel(std::vector<Mat> v_tilde, Permutation output_perm,
                  Activation activation = Activation::Tanh);

  int depth() const { return static_cast<int>(widths_.size()); }
  const std::vector<int>& widths() const { return widths_; }
  const Permutation& output_perm() const { return perm_; }
  Activation activation() const { return activation_; }
  /// Fixed layer maps: V~_1^T, then V~_{l+1}^T (V~_l^T)^+.
  const std::vector<Mat>& maps() const { return maps_; }

  Mat forward(const CompletionParams& params, const Mat& inputs) const;
  /// pi_L^T Y: targets reordered to the model's outputs.
  Mat permuted_targets(const Mat& targets) const;

  /// J = sum_i ||pi_L^T Y_i - f^(X_i)||^2.
  double loss(const CompletionParams& params, const TrainSet& data) const;
  /// J and its exact gradient (layout of CompletionParams::flatten).
  double loss_and_gradient(const CompletionParams& params, const TrainSet& data, Vec& grad) const;

  /// Equivalent plain network, outputs in teacher order.
  NetworkParams to_network(const CompletionParams& params) const;

 private:
  std::vector<int> widths_;
  std::vector<Mat> maps_;
  Permutation perm_;
  Activation activation_;
};

/// Parameters that make the model reproduce the teacher exactly when
/// V~_l = V_l(x*) pi_l S_l: T_l = S_l^{-1}, R_l = S_l pi_l^T G_l(x*)^{-1} pi_l,
/// tau^_l = pi_l^T tau_l.
CompletionParams exact_completion_params(const NetworkParams& teacher, const Vec& x_star,
                                         const std::vector<Permutation>& perms,
                                         const std::vector<Vec>& scales);

struct FitConfig {
  double learning_rate = 0.025;
  int max_steps = 50000;
  /// Stop once J < stop_factor * N.
  double stop_factor = 1e-14;
  /// GD minimizes J / N (per-sample mean) when true, J otherwise.
  bool mean_loss = true;
  /// Initial sign of each last-layer scale from the correlation of the
  /// initial pre-activations with the targets.
  bool orient_last_layer = true;
};

struct FitResult {
  CompletionParams params;
  std::vector<double> loss_history;  // J per step, before the update
  int steps = 0;
  bool stopped_early = false;
};

using FitObserver = std::function<void(int step, const CompletionParams&, double loss)>;

/// Full-batch gradient descent from tau^ = 0, T = Id, R = Id.
/// Throws NumericalError on divergence.
FitResult fit(const CompletionModel& model, const TrainSet& data, const FitConfig& config,
              const FitObserver& observer = {}, int observe_every = 0);

/// Aligns a student network to the teacher neuron by neuron, using the
/// directions of the entangled weights at x (sign-free Hungarian matching),
/// and returns the student shifts expressed in teacher order and sign.
std::vector<Vec> aligned_shifts(const NetworkParams& student, const NetworkParams& teacher,
                                const Vec& x);

/// Plain backprop training of a network with the teacher's architecture.
struct SgdConfig {
  double learning_rate = 0.01;
  int batch_size = 10000;
  int epochs = 100;
};

struct SgdHistory {
  std::vector<int> epoch;
  std::vector<double> mse;
  std::vector<double> linf;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and shifts.
NetworkParams random_init(const std::vector<int>& widths, std::uint64_t seed);
/// W_1 = V^_1, W_l = (V^_{l-1})^+ V^_l, zero shifts.
NetworkParams entangled_init(const std::vector<Mat>& v_hat, Activation activation = Activation::Tanh);

/// Mean squared loss per sample and its gradient for a plain network.
double network_loss_and_gradient(const NetworkParams& net, const Mat& inputs, const Mat& targets,
                                  std::vector<Mat>& grad_w, std::vector<Vec>& grad_tau);

/// Minibatch SGD; metrics on (test_inputs, test_targets) after each epoch.
NetworkParams sgd_baseline(NetworkParams init, const TrainSet& data, const TrainSet& test,
                           const SgdConfig& config, std::uint64_t seed, SgdHistory* history = nullptr);

}  // namespace entangle
