#include "doctest.h"
#include "oracles.hpp"

#include "entangle/derivatives.hpp"
#include "entangle/network.hpp"
#include "entangle/random.hpp"

#include <numeric>

using namespace entangle;

namespace {

Vec unit(int dim, int i) {
  Vec e = Vec::Zero(dim);
  e[i] = 1.0;
  return e;
}

Permutation shuffled(int n, Rng& rng) {
  Permutation p = identity_permutation(n);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

Vec random_signs(int n, Rng& rng) {
  Vec s(n);
  for (int i = 0; i < n; ++i) s[i] = (rng() & 1) ? 1.0 : -1.0;
  return s;
}

}  // namespace

TEST_CASE("forward on trivial networks") {
  NetworkParams id;
  id.weights = {Mat::Identity(2, 2)};
  id.shifts = {Vec::Zero(2)};
  CHECK(forward(id, Vec::Zero(2)).output().norm() == 0.0);

  NetworkParams zero;
  zero.weights = {Mat::Zero(3, 4), Mat::Zero(4, 2)};
  zero.shifts = {Vec::Zero(4), Vec::Zero(2)};
  const Vec x = Vec::LinSpaced(3, -2.0, 5.0);
  CHECK(forward(zero, x).output().norm() == 0.0);
  CHECK(forward(zero, x).activations.size() == 3);
}

TEST_CASE("forward matches the straight-line evaluator") {
  const NetworkParams net = oracle::random_net({5, 4, 3}, 7);
  const Vec y = forward(net, unit(5, 0)).output();
  const auto ref = oracle::straight_line_forward(net, {1, 0, 0, 0, 0});
  // Frozen from the straight-line evaluator.
  const double frozen[3] = {0.73798448586476151, 0.20619328515968929, -0.11005099529386025};
  for (int p = 0; p < 3; ++p) {
    CHECK(y[p] == doctest::Approx(ref[p]).epsilon(1e-14));
    CHECK(y[p] == doctest::Approx(frozen[p]).epsilon(1e-14));
  }

  const Mat X = Mat::Random(5, 20);
  const Mat Y = forward_batch(net, X);
  for (int i = 0; i < 20; ++i) {
    const auto r = oracle::straight_line_forward(net, std::vector<double>(X.col(i).data(), X.col(i).data() + 5));
    for (int p = 0; p < 3; ++p) CHECK(Y(p, i) == doctest::Approx(r[p]).epsilon(1e-13));
  }
}

TEST_CASE("forward rejects inputs of the wrong length") {
  const NetworkParams net = oracle::random_net({5, 4, 3}, 1);
  CHECK_THROWS_AS(forward(net, Vec::Zero(4)), DimensionError);
  NetworkParams broken = net;
  broken.weights[1] = Mat::Zero(3, 3);
  CHECK_THROWS_WITH_AS(broken.validate(), doctest::Contains("layer 2"), DimensionError);
}

TEST_CASE("architecture widths") {
  for (int L : {1, 2, 3, 4})
    for (double c : {0.3, 0.5, 0.8, 1.0})
      for (int m : {10, 70, 110, 400, 901}) {
        Architecture a{50, L, 10, L == 1 ? 10 : m, c};
        if (L > 1 && m - 10 < L - 1) continue;
        const auto w = a.layer_widths();
        CHECK(static_cast<int>(w.size()) == L);
        CHECK(std::accumulate(w.begin(), w.end(), 0) == a.neurons);
        CHECK(w.back() == 10);
        for (std::size_t k = 0; k < w.size(); ++k) {
          CHECK(w[k] > 0);
          if (k > 0) CHECK(w[k] <= w[k - 1]);
        }
      }
  CHECK(Architecture{50, 3, 10, 70, 0.5}.layer_widths() == std::vector<int>{40, 20, 10});
  CHECK_THROWS_AS(Architecture({50, 2, 10, 70, 1.5}).validate(), ConfigError);
  CHECK_THROWS_AS(Architecture({50, 1, 10, 70, 1.0}).validate(), ConfigError);
}

TEST_CASE("sampled networks") {
  const Architecture arch{20, 3, 5, 45, 0.7};
  const NetworkParams a = sample_network(arch, 42), b = sample_network(arch, 42);
  for (int l = 0; l < a.depth(); ++l) {
    CHECK((a.weights[l].array() == b.weights[l].array()).all());
    CHECK((a.shifts[l].array() == b.shifts[l].array()).all());
    for (Eigen::Index i = 0; i < a.weights[l].cols(); ++i)
      CHECK(std::abs(a.weights[l].col(i).norm() - 1.0) <= 1e-12);
  }
  CHECK(sample_network(arch, 43).weights[0] != a.weights[0]);

  // Shift entries are N(0, 0.05^2): standard deviation 0.05.
  const NetworkParams wide = sample_network({2, 1, 100000, 100000, 1.0}, 5);
  const Vec& t = wide.shifts[0];
  const double mean = t.mean();
  const double sd = std::sqrt((t.array() - mean).square().sum() / (t.size() - 1));
  CHECK(sd >= 0.045);
  CHECK(sd <= 0.055);
}

TEST_CASE("entangled weights") {
  SUBCASE("one layer") {
    const NetworkParams net = oracle::random_net({6, 4}, 2);
    CHECK(entangled_weights(net, Vec::Random(6)).layers[0] == net.weights[0]);
  }
  SUBCASE("first layer is constant in x") {
    const NetworkParams net = oracle::random_net({6, 5, 3}, 3);
    for (int k = 0; k < 10; ++k) {
      const auto ew = entangled_weights(net, Vec::Random(6));
      CHECK(ew.layers[0] == net.weights[0]);
      CHECK(ew.layers[1].cols() == 3);
    }
  }
  SUBCASE("identity Jacobian") {
    NetworkParams net = oracle::random_net({6, 5, 3}, 4);
    net.shifts[0].setZero();
    const auto ew = entangled_weights(net, Vec::Zero(6));
    CHECK((ew.layers[1] - net.weights[0] * net.weights[1]).norm() <= 1e-15);
  }
  SUBCASE("second-layer columns are the rank-one factors of the Hessians") {
    // f_p = tanh(w2_p . y1 + t2_p): the Hessian is the first-layer sum
    // plus g''(z2_p) v_p v_p^T with v_p = W1 G1 w2_p.
    const NetworkParams net = oracle::random_net({4, 3, 2}, 5, 0.3);
    const Vec x = Vec::Zero(4);
    const auto ew = entangled_weights(net, x);
    const Vec z1 = net.weights[0].transpose() * x + net.shifts[0];
    Vec y1(3);
    for (int i = 0; i < 3; ++i) y1[i] = std::tanh(z1[i]);
    for (int p = 0; p < 2; ++p) {
      const double z2 = net.weights[1].col(p).dot(y1) + net.shifts[1][p];
      Mat first = Mat::Zero(4, 4);
      for (int i = 0; i < 3; ++i)
        first += oracle::tanh_d2(z1[i]) * oracle::tanh_d1(z2) * net.weights[1](i, p) *
                 net.weights[0].col(i) * net.weights[0].col(i).transpose();
      const Mat rest = analytic_hessian(net, x, p) - first;
      Eigen::SelfAdjointEigenSolver<Mat> es(rest);
      const Vec& ev = es.eigenvalues();
      const int top = std::abs(ev[0]) > std::abs(ev[3]) ? 0 : 3;
      const Vec factor = es.eigenvectors().col(top);
      CHECK(oracle::sign_free(factor, ew.layers[1].col(p).normalized()) <= 1e-10);
      CHECK(std::abs(ev[top]) == doctest::Approx(std::abs(oracle::tanh_d2(z2)) * ew.layers[1].col(p).squaredNorm()));
    }
  }
}

TEST_CASE("reparametrization reproduces the permuted teacher") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const NetworkParams teacher = sample_network({12, 3, 4, 20, 0.7}, 100 + seed);
    Rng rng(seed);
    const Vec x_star = 0.1 * random_unit_vector(12, rng);
    const auto ew = entangled_weights(teacher, x_star);
    const ForwardPass pass = forward(teacher, x_star);
    ReparametrizationInput in;
    for (int l = 0; l < teacher.depth(); ++l) {
      const int m = static_cast<int>(teacher.shifts[l].size());
      in.perms.push_back(shuffled(m, rng));
      in.scales.push_back(random_signs(m, rng));
      in.v_tilde.push_back(permute_columns(ew.layers[l], in.perms[l]) * in.scales[l].asDiagonal());
      in.shifts.push_back(teacher.shifts[l]);
      if (l + 1 < teacher.depth()) {
        Vec g(m);
        for (int i = 0; i < m; ++i) g[i] = oracle::tanh_d1(pass.preactivations[l][i]);
        in.diagonals.push_back(g);
      }
    }
    const NetworkParams student = reparametrize(in);
    const Mat X = random_gaussian(12, 1000, rng);
    const Mat yt = forward_batch(teacher, X), ys = forward_batch(student, X);
    double worst = 0.0;
    for (int p = 0; p < 4; ++p)
      worst = std::max(worst, (ys.row(p) - yt.row(in.perms.back()[p])).cwiseAbs().maxCoeff());
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("reparametrization edge cases") {
  const NetworkParams net = oracle::random_net({5, 3}, 9);
  ReparametrizationInput one{{net.weights[0]}, {Vec::Ones(3)}, {}, {net.shifts[0]}, {identity_permutation(3)}};
  const NetworkParams same = reparametrize(one);
  CHECK(same.weights[0] == net.weights[0]);
  CHECK(same.shifts[0] == net.shifts[0]);

  const NetworkParams deep = oracle::random_net({6, 4, 3}, 10);
  const auto ew = entangled_weights(deep, Vec::Zero(6));
  Mat dup = ew.layers[1];
  dup.col(2) = dup.col(0);
  ReparametrizationInput bad{{ew.layers[0], dup},
                             {Vec::Ones(4), Vec::Ones(3)},
                             {Vec::Ones(4)},
                             deep.shifts,
                             {identity_permutation(4), identity_permutation(3)}};
  CHECK_THROWS_AS(reparametrize(bad), RankDeficiencyError);
}

TEST_CASE("json round trip is bit exact") {
  const NetworkParams net = sample_network({7, 3, 2, 9, 0.6}, 77);
  const NetworkParams back = network_from_json(nlohmann::json::parse(to_json(net).dump()));
  REQUIRE(back.depth() == net.depth());
  for (int l = 0; l < net.depth(); ++l) {
    CHECK((back.weights[l].array() == net.weights[l].array()).all());
    CHECK((back.shifts[l].array() == net.shifts[l].array()).all());
  }
  CHECK(back.seed == net.seed);
  auto broken = to_json(net);
  broken["widths"][1] = broken["widths"][1].get<int>() + 1;
  CHECK_THROWS_AS(network_from_json(broken), DimensionError);
}

TEST_CASE("activations are Lipschitz in the input") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NetworkParams net = sample_network({10, 3, 3, 15, 0.8}, seed);
    Rng rng(seed);
    for (int k = 0; k < 100; ++k) {
      const Vec x = random_gaussian(10, 1, rng).col(0), y = random_gaussian(10, 1, rng).col(0);
      const ForwardPass a = forward(net, x), b = forward(net, y);
      double bound = 1.0;
      for (int l = 0; l < net.depth(); ++l) {
        bound *= net.weights[l].operatorNorm();
        CHECK((a.activations[l + 1] - b.activations[l + 1]).norm() <= bound * (x - y).norm() + 1e-12);
      }
    }
  }
}

TEST_CASE("permutation helpers") {
  const Permutation p{2, 0, 1};
  CHECK(is_permutation(p, 3));
  CHECK_FALSE(is_permutation({0, 0, 1}, 3));
  const Vec v = Vec::LinSpaced(3, 10, 12);
  CHECK(permute_transpose(p, v) == Vec((Vec(3) << 12, 10, 11).finished()));
  const Mat m = Mat::Identity(3, 3);
  CHECK(permute_columns(m, p).col(0) == m.col(2));
}
