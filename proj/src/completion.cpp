#include "entangle/completion.hpp"

#include "entangle/metrics.hpp"
#include "entangle/parallel.hpp"
#include "entangle/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace entangle {

CompletionParams CompletionParams::identity(const std::vector<int>& widths) {
  CompletionParams p;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    p.shifts.push_back(Vec::Zero(widths[l]));
    p.scales.push_back(Vec::Ones(widths[l]));
    if (l + 1 < widths.size()) p.mixing.push_back(Vec::Ones(widths[l]));
  }
  return p;
}

int completion_parameter_count(const std::vector<int>& widths) {
  int n = 0;
  for (std::size_t l = 0; l < widths.size(); ++l) n += (l + 1 < widths.size() ? 3 : 2) * widths[l];
  return n;
}

int CompletionParams::size() const {
  Eigen::Index n = 0;
  for (const auto& v : shifts) n += v.size();
  for (const auto& v : scales) n += v.size();
  for (const auto& v : mixing) n += v.size();
  return static_cast<int>(n);
}

Vec CompletionParams::flatten() const {
  Vec out(size());
  Eigen::Index k = 0;
  for (const auto* group : {&shifts, &scales, &mixing})
    for (const auto& v : *group) {
      out.segment(k, v.size()) = v;
      k += v.size();
    }
  return out;
}

void CompletionParams::assign(const Vec& flat) {
  if (flat.size() != size()) throw DimensionError("completion parameters: wrong vector length");
  Eigen::Index k = 0;
  for (auto* group : {&shifts, &scales, &mixing})
    for (auto& v : *group) {
      v = flat.segment(k, v.size());
      k += v.size();
    }
}

bool CompletionParams::all_finite() const {
  for (const auto* group : {&shifts, &scales, &mixing})
    for (const auto& v : *group)
      if (!v.allFinite()) return false;
  return true;
}

TrainSet make_train_set(const NetworkParams& teacher, int count, std::uint64_t seed) {
  Rng rng(seed);
  TrainSet t;
  t.inputs = random_gaussian(teacher.input_dim(), count, rng) /
             std::sqrt(static_cast<double>(teacher.input_dim()));
  t.targets = forward_batch(teacher, t.inputs);
  return t;
}

CompletionModel::CompletionModel(std::vector<Mat> v_tilde, Permutation output_perm,
                                 Activation activation)
    : perm_(std::move(output_perm)), activation_(activation) {
  if (v_tilde.empty()) throw DimensionError("completion: no layers");
  const Eigen::Index d = v_tilde.front().rows();
  for (std::size_t l = 0; l < v_tilde.size(); ++l) {
    if (v_tilde[l].rows() != d) throw DimensionError("completion: layers disagree on D");
    if (!has_full_column_rank(v_tilde[l]))
      throw RankDeficiencyError("completion: V~_" + std::to_string(l + 1) + " is rank deficient",
                                {static_cast<int>(l)});
    widths_.push_back(static_cast<int>(v_tilde[l].cols()));
  }
  if (!is_permutation(perm_, widths_.back()))
    throw DimensionError("completion: output permutation has wrong size");
  maps_.push_back(v_tilde[0].transpose());
  for (std::size_t l = 0; l + 1 < v_tilde.size(); ++l)
    maps_.push_back(v_tilde[l + 1].transpose() * pseudo_inverse(v_tilde[l].transpose()));
}

Mat CompletionModel::permuted_targets(const Mat& targets) const {
  Mat out(targets.rows(), targets.cols());
  for (std::size_t k = 0; k < perm_.size(); ++k) out.row(k) = targets.row(perm_[k]);
  return out;
}

namespace {

struct Tape {
  std::vector<Mat> pre;  // a_l before T
  std::vector<Mat> out;  // y_l
};

void run_forward(const std::vector<Mat>& maps, Activation act, const CompletionParams& p,
                 const Mat& x, Tape& tape) {
  const std::size_t L = maps.size();
  tape.pre.resize(L);
  tape.out.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    if (l == 0)
      tape.pre[0].noalias() = maps[0] * x;
    else
      tape.pre[l].noalias() = maps[l] * (p.mixing[l - 1].asDiagonal() * tape.out[l - 1]);
    Mat z = p.scales[l].asDiagonal() * tape.pre[l];
    z.colwise() += p.shifts[l];
    tape.out[l] = activate(act, z);
  }
}

Mat activation_slope(Activation act, const Mat& y) {
  if (act == Activation::Identity) return Mat::Ones(y.rows(), y.cols());
  return (1.0 - y.array().square()).matrix();
}

constexpr Eigen::Index kBlock = 2048;

}  // namespace

Mat CompletionModel::forward(const CompletionParams& params, const Mat& inputs) const {
  if (inputs.rows() != maps_[0].cols()) throw DimensionError("completion: input has wrong length");
  Tape tape;
  run_forward(maps_, activation_, params, inputs, tape);
  return tape.out.back();
}

double CompletionModel::loss(const CompletionParams& params, const TrainSet& data) const {
  return (forward(params, data.inputs) - permuted_targets(data.targets)).squaredNorm();
}

double CompletionModel::loss_and_gradient(const CompletionParams& params, const TrainSet& data,
                                          Vec& grad) const {
  const Mat targets = permuted_targets(data.targets);
  const Eigen::Index n = data.inputs.cols();
  const std::size_t blocks = static_cast<std::size_t>((n + kBlock - 1) / kBlock);
  const std::size_t L = maps_.size();
  std::vector<double> losses(blocks, 0.0);
  std::vector<Vec> grads(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    const Eigen::Index start = static_cast<Eigen::Index>(b) * kBlock;
    const Eigen::Index len = std::min(kBlock, n - start);
    Tape tape;
    run_forward(maps_, activation_, params, data.inputs.middleCols(start, len), tape);
    const Mat resid = tape.out.back() - targets.middleCols(start, len);
    losses[b] = resid.squaredNorm();
    CompletionParams g = params;
    Mat dy = 2.0 * resid;
    for (std::size_t l = L; l-- > 0;) {
      const Mat delta = dy.cwiseProduct(activation_slope(activation_, tape.out[l]));
      g.shifts[l] = delta.rowwise().sum();
      g.scales[l] = delta.cwiseProduct(tape.pre[l]).rowwise().sum();
      if (l == 0) break;
      const Mat dq = maps_[l].transpose() * (params.scales[l].asDiagonal() * delta);
      g.mixing[l - 1] = dq.cwiseProduct(tape.out[l - 1]).rowwise().sum();
      dy = params.mixing[l - 1].asDiagonal() * dq;
    }
    grads[b] = g.flatten();
  });
  grad = Vec::Zero(params.size());
  double total = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    total += losses[b];
    grad += grads[b];
  }
  return total;
}

NetworkParams CompletionModel::to_network(const CompletionParams& params) const {
  NetworkParams net;
  net.activation = activation_;
  const std::size_t L = maps_.size();
  for (std::size_t l = 0; l < L; ++l) {
    Mat wt = params.scales[l].asDiagonal() * maps_[l];
    if (l > 0) wt = wt * params.mixing[l - 1].asDiagonal();
    net.weights.push_back(wt.transpose());
    net.shifts.push_back(params.shifts[l]);
  }
  // Model output k predicts teacher output perm[k].
  Mat& last = net.weights.back();
  Vec& shift = net.shifts.back();
  Mat w = last;
  Vec t = shift;
  for (std::size_t k = 0; k < perm_.size(); ++k) {
    last.col(perm_[k]) = w.col(static_cast<Eigen::Index>(k));
    shift[perm_[k]] = t[static_cast<Eigen::Index>(k)];
  }
  return net;
}

CompletionParams exact_completion_params(const NetworkParams& teacher, const Vec& x_star,
                                         const std::vector<Permutation>& perms,
                                         const std::vector<Vec>& scales) {
  const int L = teacher.depth();
  if (static_cast<int>(perms.size()) != L || static_cast<int>(scales.size()) != L)
    throw DimensionError("exact completion parameters: need one permutation and scale per layer");
  const ForwardPass pass = forward(teacher, x_star);
  CompletionParams p;
  for (int l = 0; l < L; ++l) {
    p.scales.push_back(scales[l].cwiseInverse());
    p.shifts.push_back(permute_transpose(perms[l], teacher.shifts[l]));
    if (l + 1 < L) {
      Vec g(pass.preactivations[l].size());
      for (Eigen::Index i = 0; i < g.size(); ++i)
        g[i] = activate_d1(teacher.activation, pass.preactivations[l][i]);
      p.mixing.push_back(scales[l].cwiseProduct(permute_transpose(perms[l], g).cwiseInverse()));
    }
  }
  return p;
}

FitResult fit(const CompletionModel& model, const TrainSet& data, const FitConfig& config,
              const FitObserver& observer, int observe_every) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("fit: learning rate must be positive");
  const double n = static_cast<double>(data.inputs.cols());
  FitResult out;
  out.params = CompletionParams::identity(model.widths());
  if (config.orient_last_layer) {
    // Flip last-layer scales whose initial pre-activations anticorrelate
    // with the targets; gradient descent cannot cross T = 0 reliably.
    Tape tape;
    run_forward(model.maps(), model.activation(), out.params, data.inputs, tape);
    const Mat t = model.permuted_targets(data.targets);
    Vec& last = out.params.scales.back();
    for (Eigen::Index k = 0; k < last.size(); ++k)
      if (tape.pre.back().row(k).dot(t.row(k)) < 0.0) last[k] = -1.0;
  }
  const double scale = config.mean_loss ? 1.0 / n : 1.0;
  Vec grad;
  Vec theta = out.params.flatten();
  double initial = -1.0;
  for (int step = 0; step < config.max_steps; ++step) {
    const double j = model.loss_and_gradient(out.params, data, grad);
    if (!std::isfinite(j) || !grad.allFinite())
      throw NumericalError("completion diverged at step " + std::to_string(step) +
                           "; try a smaller learning rate");
    if (initial < 0.0) initial = j;
    if (j > 1e3 * initial + 1e-300)
      throw NumericalError("completion diverged at step " + std::to_string(step) +
                           " (loss grew from " + std::to_string(initial) + " to " +
                           std::to_string(j) + "); try a smaller learning rate");
    out.loss_history.push_back(j);
    if (observer && observe_every > 0 && step % observe_every == 0) observer(step, out.params, j);
    if (j < config.stop_factor * n) {
      out.stopped_early = true;
      out.steps = step;
      if (observer && observe_every > 0 && step % observe_every != 0) observer(step, out.params, j);
      return out;
    }
    theta -= config.learning_rate * scale * grad;
    out.params.assign(theta);
    if (!out.params.all_finite())
      throw NumericalError("completion diverged at step " + std::to_string(step) +
                           "; try a smaller learning rate");
  }
  out.steps = config.max_steps;
  const double j = model.loss(out.params, data);
  if (!std::isfinite(j)) throw NumericalError("completion diverged; try a smaller learning rate");
  out.loss_history.push_back(j);
  if (observer && observe_every > 0) observer(config.max_steps, out.params, j);
  return out;
}

std::vector<Vec> aligned_shifts(const NetworkParams& student, const NetworkParams& teacher,
                                const Vec& x) {
  if (student.widths() != teacher.widths())
    throw DimensionError("aligned_shifts: architectures differ");
  const auto es = entangled_weights(student, x).normalized();
  const auto et = entangled_weights(teacher, x).normalized();
  std::vector<Vec> out;
  for (int l = 0; l < teacher.depth(); ++l) {
    std::vector<int> match;
    worst_case_error(es[l], et[l], &match);
    Vec aligned(teacher.shifts[l].size());
    for (std::size_t i = 0; i < match.size(); ++i) {
      const double s = es[l].col(static_cast<Eigen::Index>(i)).dot(et[l].col(match[i])) < 0.0 ? -1.0 : 1.0;
      aligned[match[i]] = s * student.shifts[l][static_cast<Eigen::Index>(i)];
    }
    out.push_back(std::move(aligned));
  }
  return out;
}

NetworkParams random_init(const std::vector<int>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw ConfigError("random_init: need input and at least one layer");
  Rng rng(seed);
  NetworkParams net;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l - 1]));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Mat w(widths[l - 1], widths[l]);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = unif(rng);
    Vec t(widths[l]);
    for (Eigen::Index k = 0; k < t.size(); ++k) t[k] = unif(rng);
    net.weights.push_back(std::move(w));
    net.shifts.push_back(std::move(t));
  }
  return net;
}

NetworkParams entangled_init(const std::vector<Mat>& v_hat, Activation activation) {
  NetworkParams net;
  net.activation = activation;
  for (std::size_t l = 0; l < v_hat.size(); ++l) {
    net.weights.push_back(l == 0 ? v_hat[0] : Mat(pseudo_inverse(v_hat[l - 1]) * v_hat[l]));
    net.shifts.push_back(Vec::Zero(v_hat[l].cols()));
  }
  return net;
}

double network_loss_and_gradient(const NetworkParams& net, const Mat& inputs, const Mat& targets,
                                 std::vector<Mat>& grad_w, std::vector<Vec>& grad_tau) {
  const int L = net.depth();
  std::vector<Mat> ys(L + 1);
  ys[0] = inputs;
  for (int l = 0; l < L; ++l) {
    Mat z = net.weights[l].transpose() * ys[l];
    z.colwise() += net.shifts[l];
    ys[l + 1] = activate(net.activation, z);
  }
  const double n = static_cast<double>(inputs.cols());
  const Mat resid = ys[L] - targets;
  Mat dy = (2.0 / n) * resid;
  grad_w.resize(L);
  grad_tau.resize(L);
  for (int l = L - 1; l >= 0; --l) {
    const Mat delta = dy.cwiseProduct(activation_slope(net.activation, ys[l + 1]));
    grad_w[l] = ys[l] * delta.transpose();
    grad_tau[l] = delta.rowwise().sum();
    if (l > 0) dy = net.weights[l] * delta;
  }
  return resid.squaredNorm() / n;
}

NetworkParams sgd_baseline(NetworkParams net, const TrainSet& data, const TrainSet& test,
                           const SgdConfig& config, std::uint64_t seed, SgdHistory* history) {
  net.validate();
  if (config.batch_size < 1) throw ConfigError("sgd: batch size must be positive");
  const Eigen::Index n = data.inputs.cols();
  Rng rng(seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Mat> gw;
  std::vector<Vec> gt;
  Mat xb, yb;
  auto record = [&](int epoch) {
    if (!history) return;
    const Mat pred = forward_batch(net, test.inputs);
    history->epoch.push_back(epoch);
    history->mse.push_back(relative_mse(pred, test.targets));
    history->linf.push_back(relative_linf(pred, test.targets));
  };
  record(0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(config.batch_size, n - start);
      xb.resize(data.inputs.rows(), len);
      yb.resize(data.targets.rows(), len);
      for (Eigen::Index k = 0; k < len; ++k) {
        xb.col(k) = data.inputs.col(order[start + k]);
        yb.col(k) = data.targets.col(order[start + k]);
      }
      const double j = network_loss_and_gradient(net, xb, yb, gw, gt);
      if (!std::isfinite(j)) throw NumericalError("sgd diverged; try a smaller learning rate");
      for (int l = 0; l < net.depth(); ++l) {
        net.weights[l] -= config.learning_rate * gw[l];
        net.shifts[l] -= config.learning_rate * gt[l];
      }
    }
    record(epoch);
  }
  return net;
}

}  // namespace entangle
