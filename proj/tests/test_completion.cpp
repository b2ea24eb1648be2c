#include "doctest.h"
#include "oracles.hpp"

#include "entangle/completion.hpp"
#include "entangle/metrics.hpp"
#include "entangle/random.hpp"

using namespace entangle;

namespace {

struct Scrambled {
  NetworkParams teacher;
  std::vector<Permutation> perms;
  std::vector<Vec> scales;
  std::vector<Mat> v_tilde;
};

// Entangled weights at the origin, shuffled and rescaled per layer.
Scrambled scrambled(const Architecture& arch, std::uint64_t seed) {
  Scrambled s;
  s.teacher = sample_network(arch, seed);
  const auto ew = entangled_weights(s.teacher, Vec::Zero(arch.input_dim));
  Rng rng(seed + 1);
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  for (int l = 0; l < s.teacher.depth(); ++l) {
    const int m = static_cast<int>(ew.layers[l].cols());
    Permutation p = identity_permutation(m);
    std::shuffle(p.begin(), p.end(), rng);
    Vec d(m);
    for (int i = 0; i < m; ++i) d[i] = ((rng() & 1) ? 1.0 : -1.0) * mag(rng);
    s.v_tilde.push_back(permute_columns(ew.layers[l], p) * d.asDiagonal());
    s.perms.push_back(std::move(p));
    s.scales.push_back(std::move(d));
  }
  return s;
}

CompletionParams perturbed(const CompletionParams& p, double size, std::uint64_t seed) {
  Rng rng(seed);
  CompletionParams q = p;
  q.assign(p.flatten() + size * random_gaussian(p.size(), 1, rng).col(0));
  return q;
}

}  // namespace

TEST_CASE("parameter count") {
  CHECK(completion_parameter_count({40, 20, 10}) == 3 * 60 + 2 * 10);
  CHECK(completion_parameter_count({7}) == 14);
  const CompletionParams p = CompletionParams::identity({5, 4, 2});
  CHECK(p.size() == completion_parameter_count({5, 4, 2}));
  CHECK(p.flatten().size() == p.size());
  CompletionParams q = p;
  CHECK_THROWS_AS(q.assign(Vec::Zero(3)), DimensionError);
}

TEST_CASE("exact parameters reproduce the teacher") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Scrambled s = scrambled({12, 3, 4, 20, 0.7}, 10 + seed);
    const CompletionModel model(s.v_tilde, s.perms.back());
    const CompletionParams exact = exact_completion_params(s.teacher, Vec::Zero(12), s.perms, s.scales);
    const TrainSet data = make_train_set(s.teacher, 500, seed);
    const Mat out = model.forward(exact, data.inputs);
    CHECK((out - model.permuted_targets(data.targets)).cwiseAbs().maxCoeff() <= 1e-9);
    Vec grad;
    const double j = model.loss_and_gradient(exact, data, grad);
    CHECK(j <= 1e-16 * 500 * 4);
    CHECK(grad.norm() <= 1e-6);
    // The equivalent plain network answers in teacher order.
    const NetworkParams net = model.to_network(exact);
    CHECK((forward_batch(net, data.inputs) - data.targets).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("gradient matches central differences") {
  const Scrambled s = scrambled({10, 3, 3, 15, 0.6}, 4);
  const CompletionModel model(s.v_tilde, s.perms.back());
  const TrainSet data = make_train_set(s.teacher, 200, 5);
  const CompletionParams p = perturbed(CompletionParams::identity(model.widths()), 0.3, 6);
  Vec grad;
  model.loss_and_gradient(p, data, grad);
  const Vec theta = p.flatten();
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    CompletionParams a = p, b = p;
    Vec e = Vec::Zero(theta.size());
    e[k] = h;
    a.assign(theta + e);
    b.assign(theta - e);
    const double fd = (model.loss(a, data) - model.loss(b, data)) / (2.0 * h);
    CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }
}

TEST_CASE("single neuron by hand") {
  // f(x) = tanh(T v.x + tau); dJ/dtau = sum 2 (f - y) (1 - f^2).
  const Vec v = (Vec(3) << 0.6, 0.0, 0.8).finished();
  const CompletionModel model({Mat(v)}, {0});
  TrainSet data;
  Rng rng(1);
  data.inputs = random_gaussian(3, 50, rng);
  data.targets = random_gaussian(1, 50, rng);
  CompletionParams p = CompletionParams::identity({1});
  p.shifts[0][0] = 0.2;
  p.scales[0][0] = -1.3;
  Vec grad;
  model.loss_and_gradient(p, data, grad);
  double d_tau = 0.0, d_scale = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double a = v.dot(data.inputs.col(i));
    const double f = std::tanh(-1.3 * a + 0.2);
    d_tau += 2.0 * (f - data.targets(0, i)) * (1.0 - f * f);
    d_scale += 2.0 * (f - data.targets(0, i)) * (1.0 - f * f) * a;
  }
  REQUIRE(grad.size() == 2);
  CHECK(grad[0] == doctest::Approx(d_tau).epsilon(1e-12));
  CHECK(grad[1] == doctest::Approx(d_scale).epsilon(1e-12));
}

TEST_CASE("identity parameters give the entangled plain network") {
  const Scrambled s = scrambled({8, 2, 3, 9, 1.0}, 7);
  const CompletionModel model(s.v_tilde, identity_permutation(3));
  const NetworkParams net = model.to_network(CompletionParams::identity(model.widths()));
  CHECK((net.weights[0] - s.v_tilde[0]).norm() <= 1e-12);
  CHECK((s.v_tilde[0] * net.weights[1] - s.v_tilde[1]).norm() <= 1e-10);
  CHECK(net.shifts[1].norm() == 0.0);
}

TEST_CASE("a mixing entry only touches its own neuron") {
  const Scrambled s = scrambled({10, 3, 3, 15, 0.6}, 8);
  const CompletionModel model(s.v_tilde, s.perms.back());
  const CompletionParams p = CompletionParams::identity(model.widths());
  CompletionParams q = p;
  q.mixing[0][2] = 1.7;
  const NetworkParams a = model.to_network(p), b = model.to_network(q);
  const Mat diff = b.weights[1] - a.weights[1];
  for (Eigen::Index i = 0; i < diff.rows(); ++i)
    if (i != 2) CHECK(diff.row(i).norm() == 0.0);
  CHECK(diff.row(2).norm() > 0.0);
  CHECK(a.weights[0] == b.weights[0]);
  CHECK(a.weights[2] == b.weights[2]);
}

TEST_CASE("gradient descent") {
  const Scrambled s = scrambled({10, 2, 3, 9, 0.6}, 9);
  const CompletionModel model(s.v_tilde, s.perms.back());
  const TrainSet data = make_train_set(s.teacher, 400, 10);
  SUBCASE("descends") {
    const FitResult r = fit(model, data, {0.025, 2000});
    int rises = 0;
    for (std::size_t k = 1; k < r.loss_history.size(); ++k) rises += r.loss_history[k] > r.loss_history[k - 1];
    CHECK(rises <= 0.01 * r.loss_history.size());
    CHECK(r.loss_history.back() < 0.1 * r.loss_history.front());
  }
  SUBCASE("large steps diverge with a message") {
    // tanh keeps the loss bounded, so a linear model is used to blow up.
    const CompletionModel linear(s.v_tilde, s.perms.back(), Activation::Identity);
    FitConfig c{10.0, 2000};
    c.mean_loss = false;
    CHECK_THROWS_WITH_AS(fit(linear, data, c), doctest::Contains("smaller learning rate"), NumericalError);
  }
  CHECK_THROWS_AS(fit(model, data, {0.0, 10}), ConfigError);
}

TEST_CASE("rank-deficient estimates are rejected") {
  Mat v = oracle::random_units(6, 3, 1);
  v.col(2) = v.col(0);
  CHECK_THROWS_AS(CompletionModel({v}, identity_permutation(3)), RankDeficiencyError);
  CHECK_THROWS_AS(CompletionModel({oracle::random_units(6, 3, 1)}, {0, 1}), DimensionError);
}

TEST_CASE("aligned shifts undo permutation and sign") {
  const NetworkParams teacher = sample_network({8, 2, 2, 7, 1.0}, 3);
  NetworkParams student = teacher;
  // Swap two first-layer neurons and flip one of them.
  const Permutation p{1, 0, 2, 3, 4};
  student.weights[0] = permute_columns(teacher.weights[0], p);
  student.shifts[0] = permute_transpose(p, teacher.shifts[0]);
  Mat w1 = student.weights[1];
  for (int i = 0; i < 5; ++i) student.weights[1].row(i) = w1.row(p[i]);
  student.weights[0].col(0) *= -1.0;
  student.shifts[0][0] *= -1.0;
  student.weights[1].row(0) *= -1.0;
  const Mat x = Mat::Random(8, 10);
  CHECK((forward_batch(student, x) - forward_batch(teacher, x)).cwiseAbs().maxCoeff() <= 1e-14);
  const auto shifts = aligned_shifts(student, teacher, Vec::Zero(8));
  CHECK((shifts[0] - teacher.shifts[0]).norm() <= 1e-15);
  CHECK((shifts[1] - teacher.shifts[1]).norm() <= 1e-15);
}

TEST_CASE("relative error metrics") {
  const Mat t = (Mat(1, 3) << 1.0, -2.0, 2.0).finished();
  CHECK(relative_mse(t, t) == 0.0);
  CHECK(relative_mse(Mat::Zero(1, 3), t) == doctest::Approx(1.0));
  CHECK(relative_mse(t + Mat::Constant(1, 3, 1.0), t) == doctest::Approx(3.0 / 9.0));
  CHECK(relative_linf(t + (Mat(1, 3) << 0.0, 0.5, 0.0).finished(), t) == doctest::Approx(0.25));
  CHECK(relative_shift_error(Vec::Zero(2), Vec::Ones(2)) == doctest::Approx(1.0));
  CHECK(relative_shift_error(Vec::Ones(2), Vec::Ones(2)) == 0.0);
}

TEST_CASE("baseline initializations") {
  const NetworkParams r = random_init({10, 6, 3}, 1);
  REQUIRE(r.depth() == 2);
  CHECK(r.weights[0].rows() == 10);
  CHECK(r.weights[1].cols() == 3);
  CHECK(r.weights[0].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(10.0));
  CHECK(r.weights[1].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
  CHECK_THROWS_AS(random_init({10}, 1), ConfigError);

  const Scrambled s = scrambled({10, 2, 3, 9, 0.6}, 2);
  const NetworkParams e = entangled_init(s.v_tilde);
  CHECK(e.weights[0] == s.v_tilde[0]);
  CHECK((s.v_tilde[0] * e.weights[1] - s.v_tilde[1]).norm() <= 1e-10);
  CHECK(e.shifts[1].norm() == 0.0);
}

TEST_CASE("plain-network gradient") {
  NetworkParams net = oracle::random_net({5, 4, 2}, 3, 0.2);
  Rng rng(4);
  const Mat x = random_gaussian(5, 30, rng), y = random_gaussian(2, 30, rng);
  std::vector<Mat> gw;
  std::vector<Vec> gt;
  network_loss_and_gradient(net, x, y, gw, gt);
  const double h = 1e-6;
  std::vector<Mat> ignore_w;
  std::vector<Vec> ignore_t;
  for (int l = 0; l < 2; ++l) {
    for (Eigen::Index k = 0; k < net.weights[l].size(); ++k) {
      NetworkParams a = net, b = net;
      a.weights[l].data()[k] += h;
      b.weights[l].data()[k] -= h;
      const double fd = (network_loss_and_gradient(a, x, y, ignore_w, ignore_t) -
                         network_loss_and_gradient(b, x, y, ignore_w, ignore_t)) / (2.0 * h);
      CHECK(gw[l].data()[k] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
    }
    for (Eigen::Index k = 0; k < net.shifts[l].size(); ++k) {
      NetworkParams a = net, b = net;
      a.shifts[l][k] += h;
      b.shifts[l][k] -= h;
      const double fd = (network_loss_and_gradient(a, x, y, ignore_w, ignore_t) -
                         network_loss_and_gradient(b, x, y, ignore_w, ignore_t)) / (2.0 * h);
      CHECK(gt[l][k] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
    }
  }
}
