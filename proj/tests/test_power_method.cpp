#include "doctest.h"
#include "oracles.hpp"

#include "entangle/context.hpp"
#include "entangle/power_method.hpp"
#include "entangle/random.hpp"
#include "entangle/symmetric.hpp"
#include "entangle/theory_checks.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace entangle;

namespace {

const SubspaceProjector& diagonal_plane() {
  static const SubspaceProjector p = exact_projector(Mat::Identity(2, 2));
  return p;
}

Vec angle(double theta) { return Vec((Vec(2) << std::cos(theta), std::sin(theta)).finished()); }

double nearest_spike(const Mat& spikes, const Vec& u) {
  double best = 2.0;
  for (Eigen::Index i = 0; i < spikes.cols(); ++i) best = std::min(best, oracle::sign_free(spikes.col(i), u));
  return best;
}

}  // namespace

TEST_CASE("objective values") {
  SUBCASE("closed form on the diagonal plane") {
    for (double theta : {0.0, 0.3, 0.7, 1.1, 2.5}) {
      const double c = std::cos(theta), s = std::sin(theta);
      CHECK(phi(diagonal_plane(), angle(theta)) == doctest::Approx(c * c * c * c + s * s * s * s).epsilon(1e-14));
    }
    CHECK(phi(diagonal_plane(), angle(std::numbers::pi / 4)) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("members and orthogonal directions") {
    const Mat q = Eigen::HouseholderQR<Mat>(Mat::Random(6, 6)).householderQ();
    const SubspaceProjector p = exact_projector(q.leftCols(3));
    for (int i = 0; i < 3; ++i) CHECK(phi(p, q.col(i)) == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 3; i < 6; ++i) CHECK(phi(p, q.col(i)) <= 1e-24);
  }
  SUBCASE("bounded by one") {
    const SubspaceProjector p = exact_projector(oracle::random_units(10, 12, 3));
    Rng rng(1);
    for (int k = 0; k < 1000; ++k) {
      const double v = phi(p, random_unit_vector(10, rng));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("gradient") {
  const SubspaceProjector p = exact_projector(oracle::random_units(8, 10, 4));
  Rng rng(2);
  const double h = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const Vec u = random_unit_vector(8, rng), v = random_unit_vector(8, rng);
    auto raw = [&](const Vec& x) {
      Vec o(packed_size(8));
      pack_outer(x, o);
      return p.coefficients(o).squaredNorm();
    };
    const double fd = (raw(u + h * v) - raw(u - h * v)) / (2.0 * h);
    CHECK(grad_phi(p, u).dot(v) == doctest::Approx(fd).epsilon(1e-5));
  }
  const Vec e1 = Vec::Unit(2, 0);
  const Vec g = grad_phi(diagonal_plane(), e1);
  CHECK(((Mat::Identity(2, 2) - e1 * e1.transpose()) * g).norm() <= 1e-10);

  SubspaceProjector empty;
  empty.dim = 4;
  empty.basis.resize(packed_size(4), 0);
  CHECK(grad_phi(empty, Vec::Unit(4, 1)).norm() == 0.0);
}

TEST_CASE("stationarity and second-order conditions") {
  const Vec e1 = Vec::Unit(2, 0);
  const Vec saddle = Vec::Ones(2).normalized();
  CHECK(stationarity_residual(diagonal_plane(), e1) <= 1e-15);
  CHECK(stationarity_residual(diagonal_plane(), saddle) <= 1e-15);
  CHECK(phi(diagonal_plane(), saddle) == doctest::Approx(0.5));
  CHECK(second_order_check(diagonal_plane(), e1, 100));
  CHECK(second_order_check(diagonal_plane(), -e1, 100));
  CHECK_FALSE(second_order_check(diagonal_plane(), saddle, 100));
  CHECK(second_order_margin(diagonal_plane(), saddle) < -0.1);
  CHECK(second_order_margin(diagonal_plane(), e1) >= -1e-12);

  // A local maximizer with value delta, far from every spike.
  for (double delta : {1e-2, 1e-4}) {
    const SubspaceProjector spurious = spurious_subspace(Vec::Unit(10, 0), Vec::Unit(10, 1), delta);
    const Vec u = Vec::Unit(10, 1);
    CHECK(phi(spurious, u) == doctest::Approx(delta).epsilon(1e-12));
    CHECK(stationarity_residual(spurious, u) <= 1e-12);
    CHECK(second_order_check(spurious, u, 1000));
    CHECK(second_order_margin(spurious, u) >= -1e-12);
    const IterationResult stay = power_iterate(spurious, u, 1.5, 100);
    CHECK((stay.u - u).norm() <= 1e-12);
  }
}

TEST_CASE("power iteration") {
  SUBCASE("single spike") {
    const SubspaceProjector p = exact_projector(Vec::Unit(5, 0));
    const Vec u0 = Vec::Constant(5, 1.0).normalized();
    const IterationResult r = power_iterate(p, u0, 1.5, 15000);
    CHECK(r.converged);
    CHECK(oracle::sign_free(r.u, Vec::Unit(5, 0)) <= 1e-8);
    CHECK(r.phi == doctest::Approx(1.0));
    CHECK(r.residual <= 1e-8);
  }
  SUBCASE("ascent is monotone") {
    const SubspaceProjector p = exact_projector(oracle::random_units(20, 30, 5));
    for (double step : {0.5, 1.5}) {
      Rng rng(6);
      int violations = 0;
      for (int run = 0; run < 100; ++run) {
        const IterationResult r = power_iterate(p, random_unit_vector(20, rng), step, 500, 1e-10, true);
        for (std::size_t j = 1; j < r.trace.size(); ++j) violations += r.trace[j] < r.trace[j - 1] - 1e-12;
      }
      CHECK(violations == 0);
    }
  }
  CHECK_THROWS_AS(power_iterate(diagonal_plane(), Vec::Unit(3, 0), 1.5, 10), DimensionError);
  CHECK_THROWS_AS(power_iterate(diagonal_plane(), Vec::Unit(2, 0), 0.0, 10), ConfigError);
}

TEST_CASE("limit points on an exact subspace of incoherent spikes") {
  const Mat spikes = oracle::random_units(50, 30, 8);
  const SubspaceProjector p = exact_projector(spikes);
  const CandidateSet set = recover_candidates(p, {1.5, 15000, 1000, 1e-10}, 9);
  REQUIRE(set.size() == 1000);
  int accepted = 0;
  for (const Candidate& c : set.items) {
    CHECK(std::abs(c.u.norm() - 1.0) <= 1e-12);
    const bool spike = nearest_spike(spikes, c.u) <= 1e-6;
    CHECK((spike || c.phi < 0.5));
    accepted += spike;
    if (c.converged) CHECK(c.residual <= 1e-8);
  }
  CHECK(accepted > 900);
  const auto cov = oracle::ball_coverage(set.accepted(0.5).vectors(), spikes, 0.05);
  CHECK(cov.recovered == 1.0);
  CHECK(cov.false_positive == 0.0);
}

TEST_CASE("coupon-collector restart count") {
  const int m = 30;
  const int n = static_cast<int>(std::ceil(m * std::log(m))) + 3 * m;
  int complete = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Mat spikes = oracle::random_units(50, m, 1000 + trial);
    const CandidateSet set = recover_candidates(exact_projector(spikes), {1.5, 15000, n, 1e-10}, trial);
    complete += oracle::ball_coverage(set.accepted(0.5).vectors(), spikes, 1e-6).recovered == 1.0;
  }
  CHECK(complete >= 95);
}

TEST_CASE("candidate sets") {
  const SubspaceProjector p = exact_projector(oracle::random_units(6, 4, 10));
  const CandidateSet one = recover_candidates(p, {1.5, 1000, 1, 1e-10}, 3);
  REQUIRE(one.size() == 1);
  CHECK(one.items[0].seed_index == 0);

  const CandidateSet a = recover_candidates(p, {1.5, 1000, 100, 1e-10}, 4);
  const CandidateSet b = recover_candidates(p, {1.5, 1000, 100, 1e-10}, 4);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK((a.items[k].u.array() == b.items[k].u.array()).all());
    CHECK(a.items[k].seed_index == k);
    Eigen::Index idx = 0;
    a.items[k].u.cwiseAbs().maxCoeff(&idx);
    CHECK(a.items[k].u[idx] > 0.0);
  }
  CHECK_THROWS_AS(recover_candidates(p, {1.5, 1000, 0, 1e-10}, 4), ConfigError);

  std::ostringstream csv;
  write_csv(a, csv);
  const std::string text = csv.str();
  CHECK(text.rfind("seed_index,phi,residual,iterations,u0,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 101);
}
