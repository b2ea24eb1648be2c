#include "doctest.h"
#include "oracles.hpp"

#include "entangle/context.hpp"
#include "entangle/derivatives.hpp"
#include "entangle/symmetric.hpp"

using namespace entangle;

namespace {

Mat projector_matrix(const SubspaceProjector& p) { return p.basis * p.basis.transpose(); }

SubspaceProjector context_at_radius(const NetworkParams& net, double radius, int locations,
                                    std::uint64_t seed) {
  const SamplingLaw law = SamplingLaw::sphere(net.input_dim(), radius);
  const Mat pts = sample_points(law, net.input_dim(), locations, seed);
  return build_context(analytic_hessian_batch(net, pts, law), net.neuron_count());
}

Mat truth_at_origin(const NetworkParams& net) {
  return entangled_weights(net, Vec::Zero(net.input_dim())).stacked_normalized();
}

}  // namespace

TEST_CASE("shallow networks are recovered exactly") {
  const NetworkParams net = oracle::random_net({12, 8}, 1, 0.3);
  const SamplingLaw law = SamplingLaw::sphere(12, 0.5);
  const Mat pts = sample_points(law, 12, 8, 4);
  const SubspaceProjector p = build_context(analytic_hessian_batch(net, pts, law), 8);
  CHECK(p.rank() == 8);
  CHECK((p.basis.transpose() * p.basis - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(subspace_distance(p, exact_projector(net.weights[0])) <= 1e-8);
  const Mat P = projector_matrix(p);
  CHECK((P * P - P).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(p.spectral_gap() > 1e6);
}

TEST_CASE("copies of one rank-one matrix") {
  const Vec w = Vec::LinSpaced(5, 1, 5).normalized();
  Mat cols(packed_size(5), 6);
  for (int k = 0; k < 6; ++k) cols.col(k) = (k + 1.0) * pack(w * w.transpose());
  const SubspaceProjector p = build_context(cols, 5, 1);
  CHECK(oracle::sign_free(p.basis.col(0), pack(w * w.transpose())) <= 1e-12);
  CHECK(p.spectral_gap() > 1e6);
}

TEST_CASE("context errors") {
  const Mat cols = Mat::Random(packed_size(4), 3);
  CHECK_THROWS_AS(build_context(cols, 4, 4), ConfigError);
  CHECK_THROWS_AS(build_context(cols, 5, 2), DimensionError);
  CHECK_THROWS_WITH_AS(build_context(Mat::Zero(packed_size(4), 6), 4, 2),
                       doctest::Contains("no second-order information"), NumericalError);
}

TEST_CASE("exact projectors") {
  SUBCASE("coordinate vectors") {
    const SubspaceProjector p = exact_projector(Mat::Identity(2, 2));
    CHECK(p.rank() == 2);
    const Mat e11 = Vec::Unit(2, 0) * Vec::Unit(2, 0).transpose();
    CHECK((p.apply(pack(e11)) - pack(e11)).norm() <= 1e-15);
    const Mat off = (Mat(2, 2) << 0, 1, 1, 0).finished();
    CHECK(p.apply(pack(off)).norm() <= 1e-15);
  }
  SUBCASE("orthonormal basis") {
    const Mat q = Eigen::HouseholderQR<Mat>(Mat::Random(6, 6)).householderQ();
    const SubspaceProjector p = exact_projector(q);
    CHECK(p.rank() == 6);
    for (int i = 0; i < 6; ++i) {
      const Vec o = pack(q.col(i) * q.col(i).transpose());
      CHECK((p.apply(o) - o).norm() <= 1e-12);
    }
  }
  SUBCASE("random unit vectors") {
    const Mat w = oracle::random_units(50, 30, 7);
    const SubspaceProjector p = exact_projector(w);
    CHECK(p.rank() == 30);
    for (int i = 0; i < 30; ++i) {
      const Vec o = pack(w.col(i) * w.col(i).transpose());
      CHECK((p.apply(o) - o).norm() <= 1e-10);
    }
  }
  SUBCASE("dependent outer products are reported") {
    Mat w = oracle::random_units(4, 3, 8);
    w.col(2) = -w.col(0);
    try {
      exact_projector(w);
      FAIL("no exception");
    } catch (const RankDeficiencyError& e) {
      CHECK(e.indices().size() == 1);
    }
  }
}

TEST_CASE("subspace distances") {
  const SubspaceProjector a = exact_projector(oracle::random_units(8, 5, 1));
  CHECK(subspace_distance(a, a) <= 1e-12);
  CHECK(operator_distance(a, a) <= 1e-7);
  const SubspaceProjector e1 = exact_projector(Vec::Unit(3, 0));
  const SubspaceProjector e2 = exact_projector(Vec::Unit(3, 1));
  CHECK(subspace_distance(e1, e2) == doctest::Approx(std::sqrt(2.0)));
  CHECK(operator_distance(e1, e2) == doctest::Approx(1.0));
  // Frobenius distance of the projectors, formed explicitly.
  const SubspaceProjector b = exact_projector(oracle::random_units(8, 5, 2));
  const double direct = (projector_matrix(a) - projector_matrix(b)).norm() / std::sqrt(5.0);
  CHECK(subspace_distance(a, b) == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("projector json round trip") {
  const SubspaceProjector a = exact_projector(oracle::random_units(6, 4, 3));
  const SubspaceProjector b = projector_from_json(nlohmann::json::parse(to_json(a).dump()));
  CHECK(b.dim == 6);
  CHECK((a.basis - b.basis).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(b.singular_values.size() == a.singular_values.size());
}

TEST_CASE("error grows with the sampling radius") {
  const NetworkParams net = sample_network({20, 3, 4, 24, 0.5}, 11);
  const Mat truth = truth_at_origin(net);
  const SubspaceProjector exact = exact_projector(truth);
  double previous = 0.0;
  for (double radius : {0.01, 0.1, 1.0, 10.0}) {
    const double d = subspace_distance(context_at_radius(net, radius, 120, 5), exact);
    CHECK(d > previous);
    previous = d;
  }
}

TEST_CASE("finite-difference noise floor on the reference teacher") {
  const NetworkParams net = sample_network({50, 3, 10, 70, 0.5}, 1);
  const SamplingLaw law = SamplingLaw::sphere(50, 0.01);
  const Mat pts = sample_points(law, 50, 140, 2);
  const SubspaceProjector exact = exact_projector(truth_at_origin(net));
  const double analytic = subspace_distance(build_context(analytic_hessian_batch(net, pts, law), 70), exact);
  const double fd = subspace_distance(build_context(fd_hessian_batch(NetworkOracle(net), pts, 1e-3, law), 70), exact);
  MESSAGE("analytic " << analytic << ", finite differences " << fd);
  CHECK(fd - analytic < 1e-2);
  CHECK(fd <= 0.1);
}
