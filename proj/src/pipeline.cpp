#include "entangle/pipeline.hpp"

#include "entangle/metrics.hpp"
#include "entangle/random.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace entangle {

std::string to_string(HessianMode mode) {
  return mode == HessianMode::Analytic ? "analytic" : "fd";
}

HessianMode hessian_mode_from_string(const std::string& name) {
  if (name == "analytic") return HessianMode::Analytic;
  if (name == "fd" || name == "finite-difference") return HessianMode::FiniteDifference;
  throw ConfigError("unknown Hessian mode '" + name + "' (expected analytic or fd)");
}

PipelineConfig PipelineConfig::desk(const Architecture& arch) {
  PipelineConfig c;
  c.architecture = arch;
  c.hessian_factor = 2;
  c.max_steps = 3000;
  c.restarts = 0;
  c.completion_steps = 10000;
  c.test_samples = 10000;
  return c;
}

int PipelineConfig::resolved_hessian_locations() const {
  if (hessian_locations > 0) return hessian_locations;
  const int per_output = (architecture.neurons + architecture.output_dim - 1) / architecture.output_dim;
  return hessian_factor * per_output;
}

int PipelineConfig::resolved_restarts() const {
  if (restarts > 0) return restarts;
  const double m = architecture.neurons;
  const int coupon = static_cast<int>(std::ceil(2.0 * m * (std::log(std::max(m, 1.0)) + 3.0)));
  return std::max(min_restarts, coupon);
}

SamplingLaw PipelineConfig::law() const {
  SamplingLaw law = SamplingLaw::sphere(architecture.input_dim, radius);
  law.center = center;
  return law;
}

void PipelineConfig::validate() const {
  architecture.validate();
  const int dim = architecture.input_dim;
  if (!(radius > 0.0)) throw ConfigError("radius must be positive");
  if (center.size() != 0 && center.size() != dim)
    throw ConfigError("center must have length D = " + std::to_string(dim));
  if (hessian_locations < 0) throw ConfigError("hessian_locations must be nonnegative");
  if (hessian_factor < 1) throw ConfigError("hessian_factor must be at least 1");
  if (resolved_hessian_locations() * architecture.output_dim < architecture.neurons)
    throw ConfigError("hessian_locations * m_L must be at least m");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(step > 0.0)) throw ConfigError("step must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be positive");
  if (restarts < 0 || min_restarts < 1) throw ConfigError("restarts must be nonnegative");
  if (!(tol >= 0.0)) throw ConfigError("tol must be nonnegative");
  if (!(accept_threshold >= 0.0 && accept_threshold <= 1.0))
    throw ConfigError("accept_threshold must lie in [0, 1]");
  if (!(recovery_radius > 0.0)) throw ConfigError("recovery_radius must be positive");
  if (!(first_layer_radius_multiplier > 0.0))
    throw ConfigError("first_layer_radius_multiplier must be positive");
  if (first_layer_hessians < 1) throw ConfigError("first_layer_hessians must be positive");
  if (cluster_restarts < 1) throw ConfigError("cluster_restarts must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (train_samples < 1 || test_samples < 1) throw ConfigError("sample counts must be positive");
  if (completion_steps < 0) throw ConfigError("completion_steps must be nonnegative");
  if (run_completion && !run_assignment)
    throw ConfigError("completion needs the assignment stage");
}

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["architecture"] = {{"D", c.architecture.input_dim},
                       {"L", c.architecture.depth},
                       {"m_L", c.architecture.output_dim},
                       {"m", c.architecture.neurons},
                       {"c", c.architecture.contraction}};
  j["seed"] = c.seed;
  if (c.teacher_seed) j["teacher_seed"] = *c.teacher_seed;
  j["radius"] = c.radius;
  j["center"] = std::vector<double>(c.center.data(), c.center.data() + c.center.size());
  j["hessian_locations"] = c.hessian_locations;
  j["hessian_factor"] = c.hessian_factor;
  j["epsilon"] = c.epsilon;
  j["hessian_mode"] = to_string(c.hessian_mode);
  j["step"] = c.step;
  j["max_steps"] = c.max_steps;
  j["restarts"] = c.restarts;
  j["min_restarts"] = c.min_restarts;
  j["tol"] = c.tol;
  j["accept_threshold"] = c.accept_threshold;
  j["recovery_radius"] = c.recovery_radius;
  j["run_assignment"] = c.run_assignment;
  j["oracle_assignment"] = c.oracle_assignment;
  j["first_layer_radius_multiplier"] = c.first_layer_radius_multiplier;
  j["first_layer_hessians"] = c.first_layer_hessians;
  j["cluster_restarts"] = c.cluster_restarts;
  j["run_completion"] = c.run_completion;
  j["learning_rate"] = c.learning_rate;
  j["train_samples"] = c.train_samples;
  j["completion_steps"] = c.completion_steps;
  j["test_samples"] = c.test_samples;
  return j;
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T required_field(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError("missing field '" + path + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("field '" + path + key + "' has the wrong type");
  }
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  if (!j.contains("architecture")) throw ConfigError("missing field 'architecture'");
  const auto& a = j.at("architecture");
  PipelineConfig c;
  c.architecture.input_dim = required_field<int>(a, "D", "architecture.");
  c.architecture.depth = required_field<int>(a, "L", "architecture.");
  c.architecture.output_dim = required_field<int>(a, "m_L", "architecture.");
  c.architecture.neurons = required_field<int>(a, "m", "architecture.");
  c.architecture.contraction = a.contains("c") ? required_field<double>(a, "c", "architecture.") : 1.0;

  read_field(j, "seed", c.seed);
  if (j.contains("teacher_seed") && !j.at("teacher_seed").is_null()) {
    std::uint64_t s = 0;
    read_field(j, "teacher_seed", s);
    c.teacher_seed = s;
  }
  read_field(j, "radius", c.radius);
  if (j.contains("center")) {
    std::vector<double> v;
    read_field(j, "center", v);
    c.center = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  read_field(j, "hessian_locations", c.hessian_locations);
  read_field(j, "hessian_factor", c.hessian_factor);
  read_field(j, "epsilon", c.epsilon);
  if (j.contains("hessian_mode")) {
    std::string mode;
    read_field(j, "hessian_mode", mode);
    c.hessian_mode = hessian_mode_from_string(mode);
  }
  read_field(j, "step", c.step);
  read_field(j, "max_steps", c.max_steps);
  read_field(j, "restarts", c.restarts);
  read_field(j, "min_restarts", c.min_restarts);
  read_field(j, "tol", c.tol);
  read_field(j, "accept_threshold", c.accept_threshold);
  read_field(j, "recovery_radius", c.recovery_radius);
  read_field(j, "run_assignment", c.run_assignment);
  read_field(j, "oracle_assignment", c.oracle_assignment);
  read_field(j, "first_layer_radius_multiplier", c.first_layer_radius_multiplier);
  read_field(j, "first_layer_hessians", c.first_layer_hessians);
  read_field(j, "cluster_restarts", c.cluster_restarts);
  read_field(j, "run_completion", c.run_completion);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "train_samples", c.train_samples);
  read_field(j, "completion_steps", c.completion_steps);
  read_field(j, "test_samples", c.test_samples);
  c.validate();
  return c;
}

std::uint64_t RecoveryReport::total_queries() const {
  std::uint64_t total = 0;
  for (const auto& [stage, n] : queries) total += n;
  return total;
}

nlohmann::json to_json(const RecoveryReport& r, bool include_timings) {
  nlohmann::json j;
  j["widths"] = r.widths;
  j["teacher_seed"] = r.teacher_seed;
  j["hessian_locations"] = r.hessian_locations;
  j["restarts"] = r.restarts;
  j["subspace_distance"] = r.subspace_distance;
  j["spectral_gap"] = std::isfinite(r.spectral_gap) ? nlohmann::json(r.spectral_gap) : nlohmann::json(nullptr);
  j["accepted"] = r.accepted;
  j["recovery_rate"] = r.recovery_rate;
  j["false_positive_rate"] = r.false_positive_rate;
  j["false_positive_rate_accepted"] = r.false_positive_rate_accepted;
  j["matched_recovery_rate"] = r.matched_recovery_rate;
  j["mean_iterations"] = r.mean_iterations;
  if (r.assigned) {
    j["assignment"] = {{"oracle", r.oracle_assignment},
                       {"layer_errors", r.layer_errors},
                       {"layer_errors_matched", r.layer_errors_matched},
                       {"E_1", r.first_layer_error},
                       {"E_L", r.last_layer_error}};
  }
  if (r.completed) {
    j["completion"] = {{"loss", r.completion_loss},
                       {"steps", r.completion_steps},
                       {"mse", r.test_mse},
                       {"linf", r.test_linf},
                       {"shift_errors", r.shift_errors}};
  }
  j["queries"] = r.queries;
  j["queries"]["total"] = r.total_queries();
  j["expected_context_queries"] = r.expected_context_queries;
  if (include_timings) j["seconds"] = r.seconds;
  return j;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
auto in_stage(const std::string& stage, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

HessianBatch sample_hessians(const NetworkParams& teacher, const NetworkOracle& oracle,
                             const Mat& points, const SamplingLaw& law, const PipelineConfig& c) {
  return c.hessian_mode == HessianMode::Analytic
             ? analytic_hessian_batch(teacher, points, law)
             : fd_hessian_batch(oracle, points, c.epsilon, law);
}

AssignmentResult assign_layers(const PipelineConfig& c, const NetworkParams& teacher,
                               const NetworkOracle& oracle, const HessianBatch& context,
                               const Mat& centers, const std::vector<int>& population) {
  const int depth = teacher.depth();
  const int dim = teacher.input_dim();
  const std::vector<int> widths = teacher.widths();
  const int neurons = teacher.neuron_count();

  AssignmentResult a;
  a.centers = centers;
  a.population = population;

  if (depth == 1) {
    std::vector<int> all(static_cast<std::size_t>(neurons));
    std::iota(all.begin(), all.end(), 0);
    if (teacher.output_dim() < 2) {
      a.layers = {all};
      return a;
    }
    a.last = assign_output_slots(leave_one_out_projectors(context, neurons), centers, all);
    a.layers = {a.last.indices};
    return a;
  }

  const SamplingLaw wide =
      SamplingLaw::sphere(dim, c.first_layer_radius_multiplier * std::sqrt(static_cast<double>(dim)));
  const Mat pts = sample_points(wide, dim, c.first_layer_hessians, derive_seed(c.seed, "first-layer"));
  const HessianBatch probe = sample_hessians(teacher, oracle, pts, wide, c);
  a.first_scores = first_layer_scores(centers, probe);
  const std::vector<int> first = top_by_score(a.first_scores, widths[1], population, true);

  std::vector<bool> taken(static_cast<std::size_t>(neurons), false);
  for (int i : first) taken[i] = true;
  std::vector<int> rest;
  for (int i = 0; i < neurons; ++i)
    if (!taken[i]) rest.push_back(i);

  a.last = detect_last_layer(leave_one_out_projectors(context, neurons), centers, rest, population);
  for (int i : a.last.indices) taken[i] = true;
  std::vector<int> inner;
  for (int i = 0; i < neurons; ++i)
    if (!taken[i]) inner.push_back(i);

  a.layers = {first};
  if (depth == 3) a.layers.push_back(inner);
  a.layers.push_back(a.last.indices);
  return a;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  const std::uint64_t tseed = config.teacher_seed.value_or(derive_seed(config.seed, "teacher"));
  NetworkParams teacher = sample_network(config.architecture, tseed);
  return run_pipeline(config, teacher);
}

PipelineResult run_pipeline(const PipelineConfig& config, const NetworkParams& teacher) {
  config.validate();
  teacher.validate();
  const int dim = teacher.input_dim();
  const int depth = teacher.depth();
  const int neurons = teacher.neuron_count();
  if (dim != config.architecture.input_dim || depth != config.architecture.depth ||
      teacher.output_dim() != config.architecture.output_dim ||
      neurons != config.architecture.neurons)
    throw ConfigError("teacher does not match the configured architecture");
  if (config.run_assignment && depth > 3 && !config.oracle_assignment)
    throw StageError("assignment", "oracle assignment required for networks deeper than 3 layers");

  PipelineResult out;
  out.teacher = teacher;
  RecoveryReport& rep = out.report;
  {
    const auto w = teacher.widths();
    rep.widths.assign(w.begin() + 1, w.end());
  }
  rep.teacher_seed = teacher.seed.value_or(0);
  rep.hessian_locations = config.resolved_hessian_locations();
  rep.restarts = config.resolved_restarts();

  const NetworkOracle oracle(teacher);
  const SamplingLaw law = config.law();
  const Vec x_star = law.center_or_zero(dim);
  const EntangledWeights truth = entangled_weights(teacher, x_star);
  const Mat truth_stacked = truth.stacked_normalized();

  // Building the context.
  auto t0 = Clock::now();
  const HessianBatch context = in_stage("context", [&] {
    const Mat pts = sample_points(law, dim, rep.hessian_locations, derive_seed(config.seed, "context"));
    return sample_hessians(teacher, oracle, pts, law, config);
  });
  out.projector = in_stage("context", [&] { return build_context(context, neurons); });
  rep.queries["context"] = oracle.query_count();
  if (config.hessian_mode == HessianMode::FiniteDifference)
    rep.expected_context_queries =
        static_cast<std::uint64_t>(rep.hessian_locations) * (2ull * dim * dim + 2ull * dim);
  rep.spectral_gap = out.projector.spectral_gap();
  try {
    rep.subspace_distance = subspace_distance(exact_projector(truth_stacked), out.projector);
  } catch (const RankDeficiencyError&) {
    rep.subspace_distance = std::numeric_limits<double>::quiet_NaN();
  }
  rep.seconds["context"] = elapsed(t0);

  // Weight recovery.
  t0 = Clock::now();
  out.candidates = in_stage("recovery", [&] {
    PowerConfig pc;
    pc.step = config.step;
    pc.max_steps = config.max_steps;
    pc.restarts = rep.restarts;
    pc.tol = config.tol;
    return recover_candidates(out.projector, pc, derive_seed(config.seed, "recovery"));
  });
  const CandidateSet accepted = out.candidates.accepted(config.accept_threshold);
  rep.accepted = static_cast<int>(accepted.size());
  {
    const Mat all = out.candidates.vectors();
    rep.recovery_rate = recovery_rate(all, truth_stacked, config.recovery_radius);
    rep.false_positive_rate = false_positive_rate(all, truth_stacked, config.recovery_radius);
    rep.matched_recovery_rate = matched_recovery_rate(all, truth_stacked, config.recovery_radius);
    rep.false_positive_rate_accepted =
        accepted.size() ? false_positive_rate(accepted.vectors(), truth_stacked, config.recovery_radius) : 0.0;
    double its = 0.0;
    for (const auto& cd : out.candidates.items) its += cd.iterations;
    rep.mean_iterations = out.candidates.size() ? its / static_cast<double>(out.candidates.size()) : 0.0;
  }
  rep.seconds["recovery"] = elapsed(t0);
  if (!config.run_assignment) return out;

  // Weight assignment.
  t0 = Clock::now();
  const std::uint64_t before_assignment = oracle.query_count();
  out.assignment = in_stage("assignment", [&] {
    if (static_cast<int>(accepted.size()) < neurons)
      throw NumericalError(std::to_string(accepted.size()) + " accepted candidates for " +
                           std::to_string(neurons) + " neurons");
    ClusterConfig cc;
    cc.restarts = config.cluster_restarts;
    const Clustering cl = cluster(accepted.vectors(), neurons, cc, derive_seed(config.seed, "assignment"));
    if (config.oracle_assignment) return oracle_assignment(cl.centers, cl.population, truth);
    return assign_layers(config, teacher, oracle, context, cl.centers, cl.population);
  });
  rep.queries["assignment"] = oracle.query_count() - before_assignment;
  rep.assigned = true;
  rep.oracle_assignment = out.assignment->oracle;
  {
    const std::vector<Mat> truth_layers = truth.normalized();
    for (int l = 0; l < depth; ++l) {
      const Mat est = out.assignment->layer_matrix(l);
      rep.layer_errors.push_back(worst_nearest_error(est, truth_layers[l]));
      rep.layer_errors_matched.push_back(est.cols() == truth_layers[l].cols()
                                             ? worst_case_error(est, truth_layers[l])
                                             : std::numeric_limits<double>::quiet_NaN());
    }
    rep.first_layer_error = rep.layer_errors.front();
    rep.last_layer_error = rep.layer_errors.back();
  }
  rep.seconds["assignment"] = elapsed(t0);
  if (!config.run_completion) return out;

  // Network completion.
  t0 = Clock::now();
  in_stage("completion", [&] {
    std::vector<Mat> v_tilde;
    for (int l = 0; l < depth; ++l) v_tilde.push_back(out.assignment->layer_matrix(l));
    const CompletionModel model(v_tilde, identity_permutation(teacher.output_dim()), teacher.activation);
    const TrainSet train = make_train_set(teacher, config.train_samples, derive_seed(config.seed, "train"));
    FitConfig fc;
    fc.learning_rate = config.learning_rate;
    fc.max_steps = config.completion_steps;
    const FitResult fr = fit(model, train, fc);
    out.loss_history = fr.loss_history;
    out.student = model.to_network(fr.params);
    rep.completion_loss = fr.loss_history.empty() ? 0.0 : fr.loss_history.back();
    rep.completion_steps = fr.steps;
    const TrainSet test = make_train_set(teacher, config.test_samples, derive_seed(config.seed, "test"));
    const Mat pred = forward_batch(*out.student, test.inputs);
    rep.test_mse = relative_mse(pred, test.targets);
    rep.test_linf = relative_linf(pred, test.targets);
    const auto shifts = aligned_shifts(*out.student, teacher, x_star);
    for (int l = 0; l < depth; ++l)
      rep.shift_errors.push_back(relative_shift_error(shifts[l], teacher.shifts[l]));
    return 0;
  });
  rep.queries["completion"] = static_cast<std::uint64_t>(config.train_samples);
  rep.completed = true;
  rep.seconds["completion"] = elapsed(t0);
  return out;
}

}  // namespace entangle
