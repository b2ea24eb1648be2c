// Acceptance criteria. `acceptance <n>` runs criterion n, `acceptance` runs
// all of them; each prints one PASS/FAIL line and the exit code reflects the
// result.

#include "entangle/context.hpp"
#include "entangle/derivatives.hpp"
#include "entangle/experiments.hpp"
#include "entangle/metrics.hpp"
#include "entangle/pipeline.hpp"
#include "entangle/power_method.hpp"
#include "entangle/random.hpp"
#include "entangle/theory_checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

using namespace entangle;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

Outcome from_summary(const ExperimentSummary& s) {
  std::ostringstream os;
  for (const Check& c : s.checks)
    if (!c.passed) os << "[" << c.name << " = " << fmt(c.value) << " vs " << fmt(c.threshold) << "] ";
  return {s.passed(), s.passed() ? std::to_string(s.checks.size()) + " checks" : os.str()};
}

ExperimentOptions options(int trials) {
  ExperimentOptions o;
  o.trials = trials;
  o.seed = 0;
  o.log = &std::cout;
  return o;
}

double max_fd_error(const NetworkParams& net, const Mat& pts, double eps) {
  const NetworkOracle oracle(net);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const auto fd = fd_hessians(oracle, pts.col(i), eps);
    const auto exact = analytic_hessians(net, pts.col(i));
    for (std::size_t p = 0; p < fd.size(); ++p) worst = std::max(worst, (fd[p] - exact[p]).cwiseAbs().maxCoeff());
  }
  return worst;
}

Outcome hessian_correctness() {
  double worst = 0.0, min_slope = 1e9, max_slope = -1e9;
  for (int i = 0; i < 10; ++i) {
    const int dim = 3 + i % 8, depth = 1 + i % 4;
    const Architecture arch{dim, depth, 2, depth == 1 ? 2 : 2 + 4 * (depth - 1), 0.8};
    const NetworkParams net = sample_network(arch, 1000 + i);
    Rng rng(i);
    const Mat pts = random_gaussian(dim, 10, rng);
    const double e1 = max_fd_error(net, pts, 1e-3), e4 = max_fd_error(net, pts, 4e-3);
    const double slope = std::log(e4 / e1) / std::log(4.0);
    worst = std::max(worst, e1);
    min_slope = std::min(min_slope, slope);
    max_slope = std::max(max_slope, slope);
  }
  return {worst <= 5e-4 && min_slope >= 1.7 && max_slope <= 2.3,
          "max entry error " + fmt(worst) + ", slopes in [" + fmt(min_slope) + ", " + fmt(max_slope) + "]"};
}

Outcome reparametrization() {
  double worst = 0.0;
  const Architecture archs[5] = {{20, 2, 4, 16, 1.0}, {20, 3, 4, 24, 0.6}, {30, 3, 5, 45, 0.8},
                                 {25, 4, 3, 30, 0.7}, {40, 2, 10, 40, 1.0}};
  for (int t = 0; t < 5; ++t) {
    const NetworkParams teacher = sample_network(archs[t], 500 + t);
    const int dim = teacher.input_dim();
    Rng rng(t);
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    const Vec x_star = 0.1 * random_unit_vector(dim, rng);
    const auto ew = entangled_weights(teacher, x_star);
    const ForwardPass pass = forward(teacher, x_star);
    ReparametrizationInput in;
    for (int l = 0; l < teacher.depth(); ++l) {
      const int m = static_cast<int>(teacher.shifts[l].size());
      Permutation p = identity_permutation(m);
      std::shuffle(p.begin(), p.end(), rng);
      Vec s(m);
      for (int i = 0; i < m; ++i) s[i] = ((rng() & 1) ? 1.0 : -1.0) * mag(rng);
      in.v_tilde.push_back(permute_columns(ew.layers[l], p) * s.asDiagonal());
      in.perms.push_back(std::move(p));
      in.scales.push_back(std::move(s));
      in.shifts.push_back(teacher.shifts[l]);
      if (l + 1 < teacher.depth()) {
        Vec g(m);
        for (int i = 0; i < m; ++i) g[i] = activate_d1(teacher.activation, pass.preactivations[l][i]);
        in.diagonals.push_back(g);
      }
    }
    const NetworkParams student = reparametrize(in);
    const Mat x = random_gaussian(dim, 1000, rng);
    const Mat yt = forward_batch(teacher, x), ys = forward_batch(student, x);
    for (std::size_t p = 0; p < in.perms.back().size(); ++p)
      worst = std::max(worst, (ys.row(p) - yt.row(in.perms.back()[p])).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-9, "max output error " + fmt(worst)};
}

Outcome shallow_exactness() {
  PipelineConfig c = PipelineConfig::desk({50, 1, 30, 30, 1.0});
  c.hessian_mode = HessianMode::Analytic;
  c.run_assignment = false;
  c.run_completion = false;
  const PipelineResult r = run_pipeline(c);
  const Mat truth = r.teacher.weights[0];
  const double tight = recovery_rate(r.candidates.accepted(c.accept_threshold).vectors(), truth, 1e-5);
  const RecoveryReport& rep = r.report;
  return {rep.subspace_distance <= 1e-6 && tight == 1.0 && rep.false_positive_rate == 0.0,
          "distance " + fmt(rep.subspace_distance) + ", recovered within 1e-5 " + fmt(tight) +
              ", false positives " + fmt(rep.false_positive_rate)};
}

Outcome theory_suite() {
  std::ostringstream os;
  bool ok = true;
  // Gram identity.
  {
    Rng rng(1);
    Mat w(40, 25);
    for (int k = 0; k < 25; ++k) w.col(k) = random_unit_vector(40, rng);
    const SubspaceProjector p = exact_projector(w);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const Vec u = random_unit_vector(40, rng);
      worst = std::max(worst, std::abs(gram_phi(w, u) - phi(p, u)));
    }
    ok &= worst <= 1e-10;
    os << "gram " << fmt(worst);
  }
  // Spurious maximizers.
  {
    double worst = 0.0;
    bool conditions = true;
    for (double delta : {1e-2, 1e-4}) {
      const Vec w = Vec::Unit(10, 0), u = Vec::Unit(10, 1);
      const SubspaceProjector s = spurious_subspace(w, u, delta);
      worst = std::max(worst, std::abs(phi(s, u) - delta));
      conditions &= stationarity_residual(s, u) <= 1e-12 && second_order_check(s, u, 1000);
    }
    ok &= worst <= 1e-12 && conditions;
    os << ", spurious " << fmt(worst) << (conditions ? " (optimal)" : " (not optimal)");
  }
  // Size and smoothness bounds.
  {
    double worst = 0.0;
    const Architecture archs[5] = {{20, 2, 4, 16, 1.0}, {20, 3, 4, 30, 0.6}, {50, 3, 10, 70, 0.5},
                                   {15, 4, 3, 27, 0.7}, {30, 2, 5, 25, 1.0}};
    for (int t = 0; t < 5; ++t) {
      const NetworkParams net = sample_network(archs[t], 700 + t);
      Rng rng(t);
      const int dim = net.input_dim();
      const Mat a = random_gaussian(dim, 1000, rng) / std::sqrt(dim);
      const Mat b = random_gaussian(dim, 1000, rng) / std::sqrt(dim);
      const LipschitzReport r = lipschitz_bound_check(net, a, b);
      worst = std::max({worst, r.norm_ratio, r.difference_ratio, r.curvature_ratio});
    }
    ok &= worst <= 1.0;
    os << ", bound ratio " << fmt(worst);
  }
  // Monotone ascent.
  {
    Rng rng(3);
    Mat w(20, 30);
    for (int k = 0; k < 30; ++k) w.col(k) = random_unit_vector(20, rng);
    const SubspaceProjector p = exact_projector(w);
    int violations = 0;
    for (int run = 0; run < 100; ++run) {
      const IterationResult r = power_iterate(p, random_unit_vector(20, rng), 1.5, 2000, 1e-10, true);
      for (std::size_t j = 1; j < r.trace.size(); ++j) violations += r.trace[j] < r.trace[j - 1] - 1e-12;
    }
    ok &= violations == 0;
    os << ", ascent violations " << violations;
  }
  return {ok, os.str()};
}

Outcome determinism() {
  const Architecture arch{100, 2, 10, 200, 0.5};
  PipelineConfig c = PipelineConfig::desk(arch);
  c.seed = derive_seed(0, "L2-c0.5-m200", 0);
  c.run_assignment = false;
  c.run_completion = false;
  const std::string a = to_json(run_pipeline(c).report, false).dump();
  const std::string b = to_json(run_pipeline(c).report, false).dump();
  return {a == b, a == b ? "reports identical" : "reports differ"};
}

const std::map<int, std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Outcome()>>> all = {
      {1, {"Hessian correctness", hessian_correctness}},
      {2, {"reparametrization exactness", reparametrization}},
      {3, {"shallow exactness", shallow_exactness}},
      {4, {"recovery regime", [] { return from_summary(recovery_figures(options(5))); }}},
      {5, {"assignment errors", [] { return from_summary(table3(options(5))); }}},
      {6, {"completion from exact weights", [] { return from_summary(exact_completion(options(1))); }}},
      {7, {"baseline ordering", [] { return from_summary(gd_comparison(options(5))); }}},
      {8, {"theory suite", theory_suite}},
      {9, {"determinism", determinism}},
  };
  return all;
}

bool run(int n) {
  const auto& [name, fn] = criteria().at(n);
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "criterion " << n << " (" << name << "): " << (o.passed ? "PASS" : "FAIL") << " -- " << o.detail
            << " [" << fmt(secs) << " s]" << std::endl;
  return o.passed;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 2) {
    std::cerr << "usage: acceptance [criterion]\n";
    return 2;
  }
  if (argc == 2) {
    const int n = std::atoi(argv[1]);
    if (!criteria().count(n)) {
      std::cerr << "unknown criterion " << argv[1] << "\n";
      return 2;
    }
    return run(n) ? 0 : 1;
  }
  bool ok = true;
  for (const auto& [n, unused] : criteria()) ok &= run(n);
  return ok ? 0 : 1;
}
