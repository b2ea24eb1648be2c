#include "entangle/power_method.hpp"

#include "entangle/linalg.hpp"
#include "entangle/parallel.hpp"
#include "entangle/random.hpp"
#include "entangle/symmetric.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace entangle {

namespace {

void check_unit(const Vec& u, const SubspaceProjector& p) {
  if (u.size() != p.dim)
    throw DimensionError("vector has length " + std::to_string(u.size()) + ", expected " +
                         std::to_string(p.dim));
}

Vec packed_outer(const Vec& u) {
  Vec h(packed_size(static_cast<int>(u.size())));
  pack_outer(u, h);
  return h;
}

struct BatchState {
  Mat u;  // D x b
  std::vector<int> iterations;
  std::vector<char> converged;
  std::vector<std::vector<double>> traces;
};

// Runs all columns of `state.u` to convergence or the step cap.
void iterate_batch(const SubspaceProjector& p, BatchState& state, double step, int max_steps,
                   double tol, bool record_trace) {
  const int d = p.dim;
  const Eigen::Index b = state.u.cols();
  state.iterations.assign(b, 0);
  state.converged.assign(b, 0);
  state.traces.assign(record_trace ? b : 0, {});
  std::vector<Eigen::Index> active(b);
  for (Eigen::Index k = 0; k < b; ++k) active[k] = k;

  Mat h, c, y;
  Vec r(d), next(d);
  for (int it = 0; it < max_steps && !active.empty(); ++it) {
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());
    h.resize(p.basis.rows(), na);
    for (Eigen::Index a = 0; a < na; ++a) pack_outer(state.u.col(active[a]), h.col(a));
    c.noalias() = p.basis.transpose() * h;
    y.noalias() = p.basis * c;
    std::vector<Eigen::Index> still;
    still.reserve(active.size());
    for (Eigen::Index a = 0; a < na; ++a) {
      const Eigen::Index k = active[a];
      if (record_trace) state.traces[k].push_back(c.col(a).squaredNorm());
      packed_matvec(y.col(a), state.u.col(k), r);
      next = state.u.col(k) + 2.0 * step * r;
      const double nrm = next.norm();
      if (!std::isfinite(nrm) || nrm == 0.0)
        throw NumericalError("power iteration produced a non-finite iterate");
      next /= nrm;
      const double disp = (next - state.u.col(k)).norm();
      state.u.col(k) = next;
      ++state.iterations[k];
      if (disp <= tol)
        state.converged[k] = 1;
      else
        still.push_back(k);
    }
    active.swap(still);
  }
  if (record_trace)
    for (Eigen::Index k = 0; k < b; ++k) state.traces[k].push_back(phi(p, state.u.col(k)));
}

}  // namespace

double phi(const SubspaceProjector& p, const Vec& u) {
  check_unit(u, p);
  if (p.rank() == 0) return 0.0;
  return p.coefficients(packed_outer(u)).squaredNorm();
}

Vec projected_outer_apply(const SubspaceProjector& p, const Vec& u) {
  check_unit(u, p);
  Vec out = Vec::Zero(u.size());
  if (p.rank() == 0) return out;
  packed_matvec(p.apply(packed_outer(u)), u, out);
  return out;
}

Vec grad_phi(const SubspaceProjector& p, const Vec& u) { return 4.0 * projected_outer_apply(p, u); }

double stationarity_residual(const SubspaceProjector& p, const Vec& u) {
  return (projected_outer_apply(p, u) - phi(p, u) * u).norm();
}

bool second_order_check(const SubspaceProjector& p, const Vec& u, int trials, std::uint64_t seed) {
  check_unit(u, p);
  const Vec pu = p.apply(packed_outer(u));
  const double value = pu.squaredNorm();
  Rng rng(seed);
  Vec pv(u.size());
  for (int t = 0; t < trials; ++t) {
    Vec v = random_unit_vector(static_cast<int>(u.size()), rng);
    v -= u.dot(v) * u;
    if (v.norm() < 1e-12) continue;
    v.normalize();
    const Mat sym = 0.5 * (u * v.transpose() + v * u.transpose());
    const double cross = p.coefficients(pack(sym)).squaredNorm();
    packed_matvec(pu, v, pv);
    if (value < 2.0 * cross + v.dot(pv) - 1e-9) return false;
  }
  return true;
}

double second_order_margin(const SubspaceProjector& p, const Vec& u) {
  check_unit(u, p);
  const int d = p.dim;
  // ||P(sym(u v^T))||^2 = sum_k (u^T B_k v)^2 for the orthonormal basis B_k.
  Mat bu(d, p.rank());
  Vec col(d);
  for (int k = 0; k < p.rank(); ++k) {
    packed_matvec(p.basis.col(k), u, col);
    bu.col(k) = col;
  }
  const Vec pu = p.apply(packed_outer(u));
  Mat q = 2.0 * bu * bu.transpose() + unpack(pu, d);
  const Mat proj = Mat::Identity(d, d) - u * u.transpose();
  q = proj * q * proj;
  q = 0.5 * (q + q.transpose()).eval();
  const double top = symmetric_eigenvalues(q).maxCoeff();
  return pu.squaredNorm() - top;
}

IterationResult power_iterate(const SubspaceProjector& p, const Vec& u0, double step,
                              int max_steps, double tol, bool record_trace) {
  check_unit(u0, p);
  if (!(step > 0.0)) throw ConfigError("power iteration: step must be positive");
  BatchState state;
  state.u = u0.normalized();
  iterate_batch(p, state, step, max_steps, tol, record_trace);
  IterationResult out;
  out.u = state.u.col(0);
  out.phi = phi(p, out.u);
  out.residual = stationarity_residual(p, out.u);
  out.iterations = state.iterations[0];
  out.converged = state.converged[0] != 0;
  if (record_trace) out.trace = std::move(state.traces[0]);
  return out;
}

Mat CandidateSet::vectors() const {
  Mat out(dim, static_cast<Eigen::Index>(items.size()));
  for (std::size_t k = 0; k < items.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = items[k].u;
  return out;
}

CandidateSet CandidateSet::accepted(double threshold) const {
  CandidateSet out;
  out.dim = dim;
  for (const auto& c : items)
    if (c.phi >= threshold) out.items.push_back(c);
  return out;
}

CandidateSet recover_candidates(const SubspaceProjector& p, const PowerConfig& config,
                                std::uint64_t seed) {
  if (config.restarts < 1) throw ConfigError("power method: need at least one restart");
  if (!(config.step > 0.0)) throw ConfigError("power method: step must be positive");
  if (config.max_steps < 1) throw ConfigError("power method: need at least one step");
  // Each chunk keeps up to kPool iterates in flight and refills a slot as soon
  // as its iterate stops, so the products stay wide.
  constexpr int kChunk = 4096;
  constexpr int kPool = 1024;
  const int n = config.restarts;
  const int chunks = (n + kChunk - 1) / kChunk;
  CandidateSet out;
  out.dim = p.dim;
  out.items.resize(n);
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t ci) {
    const int first = static_cast<int>(ci) * kChunk;
    const int last = std::min(n, first + kChunk);
    const int width = std::min(kPool, last - first);
    Mat u(p.dim, width), h, c, y;
    std::vector<int> slot_restart(width), slot_steps(width, 0);
    Vec r(p.dim), next(p.dim);
    int next_restart = first;
    int live = 0;
    auto start = [&](int slot) {
      Rng rng(derive_seed(seed, "restart", static_cast<std::uint64_t>(next_restart)));
      u.col(slot) = random_unit_vector(p.dim, rng);
      slot_restart[slot] = next_restart++;
      slot_steps[slot] = 0;
    };
    auto finish = [&](int slot, bool converged) {
      Candidate& cd = out.items[slot_restart[slot]];
      cd.u = u.col(slot);
      canonicalize_sign(cd.u);
      cd.iterations = slot_steps[slot];
      cd.converged = converged;
      cd.seed_index = static_cast<std::uint64_t>(slot_restart[slot]);
    };
    for (; live < width; ++live) start(live);
    while (live > 0) {
      h.resize(p.basis.rows(), live);
      for (int k = 0; k < live; ++k) pack_outer(u.col(k), h.col(k));
      c.noalias() = p.basis.transpose() * h;
      y.noalias() = p.basis * c;
      int k = 0;
      for (int a = 0; a < live; ++a) {
        packed_matvec(y.col(a), u.col(k), r);
        next = u.col(k) + 2.0 * config.step * r;
        const double nrm = next.norm();
        if (!std::isfinite(nrm) || nrm == 0.0)
          throw NumericalError("power iteration produced a non-finite iterate");
        next /= nrm;
        const double disp = (next - u.col(k)).norm();
        u.col(k) = next;
        ++slot_steps[k];
        const bool converged = disp <= config.tol;
        if (!converged && slot_steps[k] < config.max_steps) {
          ++k;
          continue;
        }
        finish(k, converged);
        if (next_restart < last) {
          start(k);
          ++k;
        } else {
          // Close the gap: move the remaining iterates down by one slot.
          for (int b = k; b + 1 < live; ++b) {
            u.col(b) = u.col(b + 1);
            slot_restart[b] = slot_restart[b + 1];
            slot_steps[b] = slot_steps[b + 1];
          }
        }
      }
      live = k;
    }
    // Objective values and residuals of the limit points, a block at a time.
    for (int b0 = first; b0 < last; b0 += kPool) {
      const int len = std::min(kPool, last - b0);
      h.resize(p.basis.rows(), len);
      for (int k = 0; k < len; ++k) pack_outer(out.items[b0 + k].u, h.col(k));
      c.noalias() = p.basis.transpose() * h;
      y.noalias() = p.basis * c;
      for (int k = 0; k < len; ++k) {
        Candidate& cd = out.items[b0 + k];
        cd.phi = c.col(k).squaredNorm();
        packed_matvec(y.col(k), cd.u, r);
        cd.residual = (r - cd.phi * cd.u).norm();
      }
    }
  });
  return out;
}

void write_csv(const CandidateSet& set, std::ostream& os) {
  os << "seed_index,phi,residual,iterations";
  for (int i = 0; i < set.dim; ++i) os << ",u" << i;
  os << "\n" << std::setprecision(17);
  for (const auto& c : set.items) {
    os << c.seed_index << "," << c.phi << "," << c.residual << "," << c.iterations;
    for (Eigen::Index i = 0; i < c.u.size(); ++i) os << "," << c.u[i];
    os << "\n";
  }
}

}  // namespace entangle
