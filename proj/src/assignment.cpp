#include "entangle/assignment.hpp"

#include "entangle/linalg.hpp"
#include "entangle/metrics.hpp"
#include "entangle/parallel.hpp"
#include "entangle/random.hpp"
#include "entangle/symmetric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace entangle {

namespace {

struct LloydRun {
  Mat centers;
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

// Squared sign-free distances from every point (columns) to every center.
Mat squared_distances(const Mat& points, const Mat& centers, const Vec& point_sq) {
  const Mat dots = centers.transpose() * points;  // k x n
  const Vec center_sq = centers.colwise().squaredNorm().transpose();
  Mat d(dots.rows(), dots.cols());
  for (Eigen::Index j = 0; j < dots.cols(); ++j)
    for (Eigen::Index i = 0; i < dots.rows(); ++i)
      d(i, j) = std::max(0.0, point_sq[j] + center_sq[i] - 2.0 * std::abs(dots(i, j)));
  return d;
}

Mat seed_centers(const Mat& points, const Vec& point_sq, int k, Rng& rng) {
  const Eigen::Index n = points.cols();
  Mat centers(points.rows(), k);
  std::vector<char> chosen(n, 0);
  Eigen::Index first = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  centers.col(0) = points.col(first);
  chosen[first] = 1;
  Vec nearest = squared_distances(points, centers.leftCols(1), point_sq).row(0).transpose();
  for (int c = 1; c < k; ++c) {
    Eigen::Index pick = -1;
    const double total = nearest.sum();
    if (total > 0.0) {
      std::uniform_real_distribution<double> unif(0.0, total);
      double target = unif(rng);
      for (Eigen::Index j = 0; j < n; ++j) {
        target -= nearest[j];
        if (target <= 0.0 && nearest[j] > 0.0) {
          pick = j;
          break;
        }
      }
      if (pick < 0)
        for (Eigen::Index j = n - 1; j >= 0; --j)
          if (nearest[j] > 0.0) {
            pick = j;
            break;
          }
    }
    if (pick < 0) {
      // Every remaining point coincides with a center: take an unused one.
      std::vector<Eigen::Index> unused;
      for (Eigen::Index j = 0; j < n; ++j)
        if (!chosen[j]) unused.push_back(j);
      pick = unused[std::uniform_int_distribution<std::size_t>(0, unused.size() - 1)(rng)];
    }
    chosen[pick] = 1;
    centers.col(c) = points.col(pick);
    const Vec d = squared_distances(points, centers.col(c), point_sq).row(0).transpose();
    nearest = nearest.cwiseMin(d);
  }
  return centers;
}

LloydRun lloyd(const Mat& points, const Vec& point_sq, int k, const ClusterConfig& config,
               Rng& rng) {
  const Eigen::Index n = points.cols();
  LloydRun run;
  run.centers = seed_centers(points, point_sq, k, rng);
  run.labels.assign(n, 0);
  for (int round = 0; round < config.max_rounds; ++round) {
    const Mat d = squared_distances(points, run.centers, point_sq);
    const Mat dots = run.centers.transpose() * points;
    std::vector<int> count(k, 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index best = 0;
      d.col(j).minCoeff(&best);
      run.labels[j] = static_cast<int>(best);
      ++count[best];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      // Reseed an empty cluster with the point farthest from its center.
      Eigen::Index far = 0;
      double worst = -1.0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (count[run.labels[j]] > 1 && d(run.labels[j], j) > worst) {
          worst = d(run.labels[j], j);
          far = j;
        }
      --count[run.labels[far]];
      run.labels[far] = c;
      count[c] = 1;
    }
    Mat next = Mat::Zero(points.rows(), k);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int c = run.labels[j];
      const double s = dots(c, j) < 0.0 ? -1.0 : 1.0;
      next.col(c) += s * points.col(j);
    }
    for (int c = 0; c < k; ++c) next.col(c) /= static_cast<double>(count[c]);
    const double shift = (next - run.centers).colwise().norm().maxCoeff();
    run.centers = std::move(next);
    if (shift <= config.tol) break;
  }
  const Mat d = squared_distances(points, run.centers, point_sq);
  run.inertia = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index best = 0;
    run.inertia += d.col(j).minCoeff(&best);
    run.labels[j] = static_cast<int>(best);
  }
  return run;
}

Mat packed_outers(const Mat& vectors) {
  Mat out(packed_size(static_cast<int>(vectors.rows())), vectors.cols());
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) pack_outer(vectors.col(c), out.col(c));
  return out;
}

std::vector<int> slots_from_scores(const Mat& s, bool* used_matching) {
  const int mL = static_cast<int>(s.rows());
  const int k = static_cast<int>(s.cols());
  std::vector<int> slot(k);
  std::vector<char> seen(mL, 0);
  bool perm = k == mL;
  for (int i = 0; i < k; ++i) {
    Eigen::Index best = 0;
    s.col(i).minCoeff(&best);
    slot[i] = static_cast<int>(best);
    if (seen[best]) perm = false;
    seen[best] = 1;
  }
  *used_matching = false;
  if (!perm && k <= mL) {
    slot = hungarian(s.transpose());
    *used_matching = true;
  }
  return slot;
}

}  // namespace

Clustering cluster(const Mat& points, int k, const ClusterConfig& config, std::uint64_t seed) {
  const Eigen::Index n = points.cols();
  if (k < 1) throw ConfigError("cluster: k must be positive");
  if (n < k)
    throw ConfigError("cluster: " + std::to_string(n) + " candidates for " + std::to_string(k) +
                      " clusters");
  const Vec point_sq = points.colwise().squaredNorm().transpose();
  const int restarts = std::max(1, config.restarts);
  std::vector<LloydRun> runs(restarts);
  parallel_for(static_cast<std::size_t>(restarts), [&](std::size_t r) {
    Rng rng(derive_seed(seed, "kmeans", r));
    runs[r] = lloyd(points, point_sq, k, config, rng);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;

  Clustering out;
  out.centers = runs[best].centers;
  out.labels = runs[best].labels;
  out.inertia = runs[best].inertia;
  for (int c = 0; c < k; ++c) {
    const double nrm = out.centers.col(c).norm();
    if (nrm > 0.0) out.centers.col(c) /= nrm;
  }
  canonicalize_column_signs(out.centers);
  out.population.assign(k, 0);
  for (int l : out.labels) ++out.population[l];
  return out;
}

Vec first_layer_scores(const Mat& centers, const HessianBatch& hessians) {
  if (centers.rows() != hessians.dim) throw DimensionError("first layer: dimension mismatch");
  const Vec norms = hessians.packed.colwise().norm().transpose();
  if (norms.size() == 0 || norms.maxCoeff() <= 1e-12)
    throw NumericalError("saturated sampling law: all Hessians are numerically zero");
  const Mat normalized = hessians.normalized_packed();
  const Mat outers = packed_outers(centers);
  Vec scores = Vec::Zero(centers.cols());
  constexpr Eigen::Index kChunk = 1024;
  for (Eigen::Index start = 0; start < normalized.cols(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, normalized.cols() - start);
    const Mat s = outers.transpose() * normalized.middleCols(start, len);
    scores = scores.cwiseMax(s.cwiseAbs().rowwise().maxCoeff());
  }
  return scores;
}

std::vector<int> top_by_score(const Vec& scores, int count, const std::vector<int>& population,
                              bool largest) {
  if (count < 0 || count > scores.size())
    throw ConfigError("cannot select " + std::to_string(count) + " of " +
                      std::to_string(scores.size()) + " centers");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto pop = [&](int i) { return i < static_cast<int>(population.size()) ? population[i] : 0; };
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return largest ? scores[a] > scores[b] : scores[a] < scores[b];
    return pop(a) > pop(b);
  });
  idx.resize(count);
  return idx;
}

std::vector<SubspaceProjector> leave_one_out_projectors(const HessianBatch& hessians, int m) {
  if (hessians.outputs < 2)
    throw ConfigError("leave-one-out projectors need at least two outputs");
  std::vector<SubspaceProjector> out(hessians.outputs);
  parallel_for(static_cast<std::size_t>(hessians.outputs), [&](std::size_t p) {
    out[p] = build_context(hessians.packed_without_output(static_cast<int>(p)), hessians.dim, m - 1);
  });
  return out;
}

namespace {
Mat leave_one_out_scores(const std::vector<SubspaceProjector>& projectors, const Mat& centers,
                         const std::vector<int>& considered) {
  Mat chosen(centers.rows(), static_cast<Eigen::Index>(considered.size()));
  for (std::size_t k = 0; k < considered.size(); ++k) chosen.col(k) = centers.col(considered[k]);
  const Mat outers = packed_outers(chosen);
  Mat s(static_cast<Eigen::Index>(projectors.size()), chosen.cols());
  for (std::size_t p = 0; p < projectors.size(); ++p)
    s.row(p) = (projectors[p].basis.transpose() * outers).colwise().norm();
  return s;
}

void order_by_slot(LastLayerDetection& det) {
  std::vector<int> order(det.indices.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return det.output_slot[a] < det.output_slot[b]; });
  std::vector<int> idx, slot;
  for (int o : order) {
    idx.push_back(det.indices[o]);
    slot.push_back(det.output_slot[o]);
  }
  det.indices = std::move(idx);
  det.output_slot = std::move(slot);
}
}  // namespace

LastLayerDetection detect_last_layer(const std::vector<SubspaceProjector>& projectors,
                                     const Mat& centers, const std::vector<int>& considered,
                                     const std::vector<int>& population) {
  const int mL = static_cast<int>(projectors.size());
  if (mL < 2) throw ConfigError("last layer detection needs at least two outputs");
  if (static_cast<int>(considered.size()) < mL)
    throw ConfigError("last layer detection: fewer candidate centers than outputs");
  LastLayerDetection det;
  det.considered = considered;
  det.scores = leave_one_out_scores(projectors, centers, considered);
  det.similarity.resize(det.scores.cols());
  for (Eigen::Index i = 0; i < det.scores.cols(); ++i) {
    const double nrm = det.scores.col(i).norm();
    det.similarity[i] = nrm > 0.0 ? det.scores.col(i).sum() / nrm : 0.0;
  }
  std::vector<int> pop(considered.size(), 0);
  for (std::size_t k = 0; k < considered.size(); ++k)
    if (considered[k] < static_cast<int>(population.size())) pop[k] = population[considered[k]];
  const auto chosen = top_by_score(det.similarity, mL, pop, false);
  Mat sub(mL, mL);
  for (int k = 0; k < mL; ++k) {
    det.indices.push_back(considered[chosen[k]]);
    sub.col(k) = det.scores.col(chosen[k]);
  }
  det.output_slot = slots_from_scores(sub, &det.slots_from_matching);
  order_by_slot(det);
  return det;
}

LastLayerDetection assign_output_slots(const std::vector<SubspaceProjector>& projectors,
                                       const Mat& centers, const std::vector<int>& last) {
  LastLayerDetection det;
  det.considered = last;
  det.indices = last;
  det.scores = leave_one_out_scores(projectors, centers, last);
  det.similarity.resize(det.scores.cols());
  for (Eigen::Index i = 0; i < det.scores.cols(); ++i) {
    const double nrm = det.scores.col(i).norm();
    det.similarity[i] = nrm > 0.0 ? det.scores.col(i).sum() / nrm : 0.0;
  }
  det.output_slot = slots_from_scores(det.scores, &det.slots_from_matching);
  order_by_slot(det);
  return det;
}

std::vector<int> AssignmentResult::inner() const {
  std::vector<int> out;
  for (std::size_t l = 1; l + 1 < layers.size(); ++l)
    out.insert(out.end(), layers[l].begin(), layers[l].end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> AssignmentResult::labels() const {
  std::vector<int> out(centers.cols(), -1);
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (int i : layers[l]) out[i] = static_cast<int>(l);
  return out;
}

Mat AssignmentResult::layer_matrix(int layer) const {
  const auto& idx = layers.at(layer);
  Mat out(centers.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(k) = centers.col(idx[k]);
  return out;
}

AssignmentResult oracle_assignment(const Mat& centers, const std::vector<int>& population,
                                   const EntangledWeights& truth) {
  const Mat t = truth.stacked_normalized();
  if (t.cols() != centers.cols())
    throw ConfigError("oracle assignment: " + std::to_string(centers.cols()) + " centers for " +
                      std::to_string(t.cols()) + " weights");
  const auto layer_of = truth.layer_of_column();
  std::vector<int> match;
  worst_case_error(centers, t, &match);
  AssignmentResult out;
  out.centers = centers;
  out.population = population;
  out.oracle = true;
  out.layers.assign(truth.layers.size(), {});
  // Order every layer by the matched true index, so the last layer is in slot order.
  std::vector<int> by_truth(t.cols(), -1);
  for (std::size_t i = 0; i < match.size(); ++i) by_truth[match[i]] = static_cast<int>(i);
  for (Eigen::Index j = 0; j < t.cols(); ++j) out.layers[layer_of[j]].push_back(by_truth[j]);
  out.last.indices = out.layers.back();
  out.last.output_slot.resize(out.last.indices.size());
  std::iota(out.last.output_slot.begin(), out.last.output_slot.end(), 0);
  return out;
}

nlohmann::json to_json(const AssignmentResult& a) {
  nlohmann::json j;
  auto centers = nlohmann::json::array();
  for (Eigen::Index c = 0; c < a.centers.cols(); ++c)
    centers.push_back(std::vector<double>(a.centers.col(c).data(),
                                          a.centers.col(c).data() + a.centers.rows()));
  j["centers"] = std::move(centers);
  j["population"] = a.population;
  j["layers"] = a.layers;
  j["labels"] = a.labels();
  j["oracle"] = a.oracle;
  if (a.first_scores.size())
    j["sim_first"] = std::vector<double>(a.first_scores.data(),
                                         a.first_scores.data() + a.first_scores.size());
  nlohmann::json last;
  last["indices"] = a.last.indices;
  last["output_slot"] = a.last.output_slot;
  last["considered"] = a.last.considered;
  last["slots_from_matching"] = a.last.slots_from_matching;
  if (a.last.similarity.size())
    last["sim_last"] = std::vector<double>(a.last.similarity.data(),
                                           a.last.similarity.data() + a.last.similarity.size());
  auto rows = nlohmann::json::array();
  for (Eigen::Index p = 0; p < a.last.scores.rows(); ++p) {
    const Vec r = a.last.scores.row(p).transpose();
    rows.push_back(std::vector<double>(r.data(), r.data() + r.size()));
  }
  last["scores"] = std::move(rows);
  j["last_layer"] = std::move(last);
  return j;
}

}  // namespace entangle
