#pragma once

#include "entangle/assignment.hpp"
#include "entangle/completion.hpp"
#include "entangle/context.hpp"
#include "entangle/derivatives.hpp"
#include "entangle/network.hpp"
#include "entangle/power_method.hpp"
#include "entangle/theory_checks.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>

namespace entangle {

enum class HessianMode { Analytic, FiniteDifference };

std::string to_string(HessianMode mode);
HessianMode hessian_mode_from_string(const std::string& name);

/// Every knob of an identification run. Defaults are the full-scale values;
/// desk() shrinks the expensive ones.
struct PipelineConfig {
  Architecture architecture;
  std::uint64_t seed = 0;
  /// Teacher sampling seed; derived from `seed` when absent.
  std::optional<std::uint64_t> teacher_seed;

  // Building the context.
  double radius = 0.01;  // R of the uniform sphere law
  Vec center;            // x*; empty means the origin
  /// Locations N_H; 0 selects hessian_factor * ceil(m / m_L).
  int hessian_locations = 0;
  int hessian_factor = 20;
  double epsilon = 1e-3;
  HessianMode hessian_mode = HessianMode::FiniteDifference;

  // Weight recovery.
  double step = 1.5;
  int max_steps = 15000;
  /// Restarts n; 0 selects max(min_restarts, ceil(2m (ln m + 3))).
  int restarts = 10000;
  int min_restarts = 2000;
  double tol = 1e-10;
  double accept_threshold = 0.5;
  double recovery_radius = 0.05;

  // Weight assignment.
  bool run_assignment = true;
  bool oracle_assignment = false;
  /// First-layer law radius = multiplier * sqrt(D).
  double first_layer_radius_multiplier = 20.0;
  int first_layer_hessians = 400;
  int cluster_restarts = 10;

  // Network completion.
  bool run_completion = true;
  double learning_rate = 0.025;
  int train_samples = 10000;
  int completion_steps = 50000;
  int test_samples = 100000;

  /// Automatic restarts, K = 3000, N_H = 2 ceil(m / m_L), 10^4 completion
  /// steps and 10^4 test points.
  static PipelineConfig desk(const Architecture& arch);

  int resolved_hessian_locations() const;
  int resolved_restarts() const;
  SamplingLaw law() const;
  /// Throws ConfigError on the first invalid field.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
/// Missing fields keep their defaults except the architecture, which must be
/// complete. Throws ConfigError with the name of the offending field.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

struct RecoveryReport {
  std::vector<int> widths;          // m_1..m_L
  std::uint64_t teacher_seed = 0;
  int hessian_locations = 0;
  int restarts = 0;

  double subspace_distance = 0.0;
  double spectral_gap = 0.0;
  int accepted = 0;
  double recovery_rate = 0.0;
  /// Over all candidates, and over those with phi >= accept_threshold.
  double false_positive_rate = 0.0;
  double false_positive_rate_accepted = 0.0;
  double matched_recovery_rate = 0.0;
  double mean_iterations = 0.0;

  bool assigned = false;
  bool oracle_assignment = false;
  /// Worst distance of an assigned center to the nearest true weight of its
  /// layer, and the same after one-to-one matching.
  std::vector<double> layer_errors;
  std::vector<double> layer_errors_matched;
  double first_layer_error = 0.0;    // E_1
  double last_layer_error = 0.0;     // E_L

  bool completed = false;
  double completion_loss = 0.0;
  int completion_steps = 0;
  double test_mse = 0.0;
  double test_linf = 0.0;
  std::vector<double> shift_errors;  // E_theta per layer

  std::map<std::string, std::uint64_t> queries;  // per stage
  std::uint64_t expected_context_queries = 0;
  std::map<std::string, double> seconds;         // per stage

  std::uint64_t total_queries() const;
};

/// Timings are left out unless requested, so equal runs give equal JSON.
nlohmann::json to_json(const RecoveryReport& r, bool include_timings = true);

struct PipelineResult {
  RecoveryReport report;
  NetworkParams teacher;
  SubspaceProjector projector;
  CandidateSet candidates;
  std::optional<AssignmentResult> assignment;
  std::optional<NetworkParams> student;
  std::vector<double> loss_history;
};

/// Context, recovery, assignment and completion against a teacher sampled from
/// the configuration. Errors are rethrown as StageError.
PipelineResult run_pipeline(const PipelineConfig& config);
/// Same against a given teacher.
PipelineResult run_pipeline(const PipelineConfig& config, const NetworkParams& teacher);

}  // namespace entangle
