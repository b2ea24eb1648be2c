#pragma once

#include "entangle/network.hpp"

#include "json.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace entangle {

struct ExperimentOptions {
  std::string out_dir;  // CSV and summary files go here; empty writes nothing
  int trials = 5;
  std::uint64_t seed = 0;
  /// Full-scale restarts, steps and location counts instead of desk values.
  bool full_scale = false;
  std::ostream* log = nullptr;  // one line per run when set
};

struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct ExperimentSummary {
  std::string name;
  std::vector<Check> checks;
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json notes = nlohmann::json::object();  // diagnostics outside the checks

  bool passed() const;
};

nlohmann::json to_json(const ExperimentSummary& s);

/// Recovery rate and false positives over a grid of architectures.
struct RecoveryGrid {
  int input_dim = 100;
  int outputs = 10;
  double radius = 0.01;
  std::vector<int> depths{2, 3};
  std::vector<double> contractions{0.5, 1.0};
  std::vector<int> neurons{200, 400};
  /// A cell passes when this fraction of trials has full recovery and no
  /// false positives.
  double required_fraction = 0.8;
};

ExperimentSummary recovery_figures(const ExperimentOptions& opts, const RecoveryGrid& grid = {});

/// First- and last-layer assignment errors E_1, E_L with analytic Hessians.
struct AssignmentGrid {
  int input_dim = 50;
  int outputs = 10;
  std::vector<int> depths{2, 3};
  /// Contractions tried for L >= 3; two-layer nets use 1.0.
  std::vector<double> contractions{0.6, 1.0};
  std::vector<int> neurons{100, 200};
  double threshold = 0.08;
};

ExperimentSummary table3(const ExperimentOptions& opts, const AssignmentGrid& grid = {});

/// Completion from the exact entangled weights V_l(0).
struct CompletionSetup {
  Architecture architecture{50, 3, 10, 70, 0.5};
  int train_samples = 10000;
  int test_samples = 100000;
  double learning_rate = 0.025;
  int steps = 50000;
  int observe_every = 1000;
  double mse_threshold = 1e-4;
  double linf_threshold = 1e-2;
  double shift_threshold = 1e-2;
};

ExperimentSummary exact_completion(const ExperimentOptions& opts, const CompletionSetup& setup = {});

/// Final errors of SGD from random weights (M1), SGD from recovered entangled
/// weights (M2), the full pipeline (M3) and completion from exact weights (M4).
/// M1 and M2 train on as many samples as the pipeline made queries.
struct ComparisonSetup {
  Architecture architecture{50, 3, 10, 70, 0.5};
  int sgd_epochs = 5;
  int completion_steps = 5000;
  int test_samples = 10000;
  bool include_exact = true;
  double required_fraction = 0.8;
};

ExperimentSummary gd_comparison(const ExperimentOptions& opts, const ComparisonSetup& setup = {});

/// Runs one of "table3", "recovery-figures", "gd-comparison", "completion".
ExperimentSummary reproduce(const std::string& experiment, const ExperimentOptions& opts);

}  // namespace entangle
