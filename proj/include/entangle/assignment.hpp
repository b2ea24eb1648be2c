#pragma once

#include "entangle/common.hpp"
#include "entangle/context.hpp"
#include "entangle/derivatives.hpp"
#include "entangle/network.hpp"

#include "json.hpp"

#include <vector>

namespace entangle {

struct ClusterConfig {
  int restarts = 10;
  int max_rounds = 200;
  double tol = 1e-8;
};

/// k-means on the projective sphere: points u and -u are identified.
struct Clustering {
  Mat centers;                 // D x k, unit norm, sign-canonicalized
  std::vector<int> labels;     // per input column
  std::vector<int> population; // per center
  double inertia = 0.0;        // within-cluster sum of squared distances
};

/// k-means++ seeding, Lloyd rounds, best of `restarts` by inertia.
Clustering cluster(const Mat& points, int k, const ClusterConfig& config, std::uint64_t seed);

/// Sim_1(u) = max_H |<u u^T, H / ||H||_F>| for each center.
Vec first_layer_scores(const Mat& centers, const HessianBatch& hessians);

/// Indices of the `count` largest scores; ties go to the larger population.
std::vector<int> top_by_score(const Vec& scores, int count, const std::vector<int>& population,
                              bool largest = true);

/// P_{-p}: projectors of dimension m - 1 built without output p's Hessians.
std::vector<SubspaceProjector> leave_one_out_projectors(const HessianBatch& hessians, int m);

struct LastLayerDetection {
  std::vector<int> indices;       // into the center matrix, ordered by output slot
  std::vector<int> output_slot;   // output index of indices[k]
  std::vector<int> considered;    // centers scored, columns of `scores`
  Mat scores;                     // m_L x considered.size(), S_{p,i}
  Vec similarity;                 // Sim_L per considered center
  bool slots_from_matching = false;  // argmin hint was not a permutation
};

/// Scores candidate centers against the leave-one-out projectors and returns
/// the m_L least similar ones with their output slots.
LastLayerDetection detect_last_layer(const std::vector<SubspaceProjector>& projectors,
                                     const Mat& centers, const std::vector<int>& considered,
                                     const std::vector<int>& population);

/// Output slots for a known last-layer set (scores from the same projectors).
LastLayerDetection assign_output_slots(const std::vector<SubspaceProjector>& projectors,
                                       const Mat& centers, const std::vector<int>& last);

struct AssignmentResult {
  Mat centers;
  std::vector<int> population;
  std::vector<std::vector<int>> layers;  // center indices per layer; last layer in slot order
  Vec first_scores;                      // Sim_1 per center (empty if not computed)
  LastLayerDetection last;
  bool oracle = false;

  const std::vector<int>& first_layer() const { return layers.front(); }
  const std::vector<int>& last_layer() const { return layers.back(); }
  /// Centers of every layer except the first and the last.
  std::vector<int> inner() const;
  /// Layer index of each center, -1 if unassigned.
  std::vector<int> labels() const;
  /// D x m_l matrix of the centers of layer l, in stored order.
  Mat layer_matrix(int layer) const;
};

/// Assigns centers to the layers of the nearest true normalized entangled
/// weight; last-layer centers are ordered by the matched output.
AssignmentResult oracle_assignment(const Mat& centers, const std::vector<int>& population,
                                   const EntangledWeights& truth);

nlohmann::json to_json(const AssignmentResult& a);

}  // namespace entangle
