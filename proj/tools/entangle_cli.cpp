// Command-line front end: teacher generation, identification runs,
// experiment reproduction, report inspection and theory diagnostics.

#include "entangle/experiments.hpp"
#include "entangle/parallel.hpp"
#include "entangle/pipeline.hpp"
#include "entangle/random.hpp"
#include "entangle/theory_checks.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace entangle;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << std::setw(2) << j << "\n";
}

struct ArchFlags {
  int dim = 0, depth = 0, outputs = 0, neurons = 0;
  double contraction = -1.0;

  void add(CLI::App* app) {
    app->add_option("--D", dim, "input dimension");
    app->add_option("--L", depth, "number of layers");
    app->add_option("--m-L", outputs, "number of outputs");
    app->add_option("--m", neurons, "total number of neurons");
    app->add_option("--c", contraction, "contraction factor in (0, 1]");
  }
  void apply(Architecture& a) const {
    if (dim) a.input_dim = dim;
    if (depth) a.depth = depth;
    if (outputs) a.output_dim = outputs;
    if (neurons) a.neurons = neurons;
    if (contraction > 0.0) a.contraction = contraction;
  }
};

void print_report(const nlohmann::json& r, std::ostream& os) {
  auto num = [&](const nlohmann::json& j, const char* k) -> std::string {
    if (!j.contains(k) || j.at(k).is_null()) return "n/a";
    std::ostringstream s;
    s << j.at(k).get<double>();
    return s.str();
  };
  os << "widths:              ";
  for (int w : r.at("widths")) os << w << " ";
  os << "\nsubspace distance:   " << num(r, "subspace_distance")
     << "\nspectral gap:        " << num(r, "spectral_gap")
     << "\nrecovery rate:       " << num(r, "recovery_rate")
     << "\nfalse positive rate: " << num(r, "false_positive_rate")
     << " (accepted only: " << num(r, "false_positive_rate_accepted") << ")"
     << "\nmatched recovery:    " << num(r, "matched_recovery_rate") << "\n";
  if (r.contains("assignment")) {
    const auto& a = r.at("assignment");
    os << "E_1 / E_L:           " << num(a, "E_1") << " / " << num(a, "E_L")
       << (a.at("oracle").get<bool>() ? " (oracle assignment)" : "") << "\n";
  }
  if (r.contains("completion")) {
    const auto& c = r.at("completion");
    os << "test MSE / E_inf:    " << num(c, "mse") << " / " << num(c, "linf") << "\nshift errors:        ";
    for (double e : c.at("shift_errors")) os << e << " ";
    os << "\n";
  }
  os << "queries:             " << r.at("queries").at("total").get<std::uint64_t>() << "\n";
  if (r.contains("seconds"))
    for (const auto& [stage, t] : r.at("seconds").items())
      os << "  " << std::setw(10) << std::left << stage << " " << t.get<double>() << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identification of feedforward tanh networks from point queries"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker count (default: ENTANGLE_THREADS or all cores)");

  // gen-net
  auto* gen = app.add_subcommand("gen-net", "sample a random teacher network");
  ArchFlags gen_arch;
  gen_arch.add(gen);
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_option("-o,--output", gen_out, "output file (default: stdout)");

  // run
  auto* run = app.add_subcommand("run", "run the identification pipeline");
  std::string run_config, run_teacher, run_out = "run_out";
  ArchFlags run_arch;
  run_arch.add(run);
  bool desk = false, analytic = false, no_assign = false, no_complete = false, oracle = false;
  bool save_projector = false;
  std::optional<std::uint64_t> seed_flag, teacher_seed_flag;
  std::optional<double> radius_flag, lr_flag, eps_flag;
  std::optional<int> nh_flag, restarts_flag, steps_flag, completion_flag, train_flag;
  run->add_option("--config", run_config, "JSON configuration file");
  run->add_option("--teacher", run_teacher, "teacher network JSON (default: sampled from the seed)");
  run->add_option("-o,--out", run_out, "output directory");
  run->add_flag("--desk", desk, "desk-scale defaults (fewer restarts, steps and locations)");
  run->add_flag("--analytic", analytic, "use analytic instead of finite-difference Hessians");
  run->add_flag("--no-assignment", no_assign, "stop after weight recovery");
  run->add_flag("--no-completion", no_complete, "stop after weight assignment");
  run->add_flag("--oracle-assignment", oracle, "assign layers using the teacher");
  run->add_flag("--save-projector", save_projector, "write the estimated subspace basis");
  run->add_option("--seed", seed_flag, "master seed");
  run->add_option("--teacher-seed", teacher_seed_flag, "teacher sampling seed");
  run->add_option("--radius", radius_flag, "radius R of the Hessian location law");
  run->add_option("--hessian-locations", nh_flag, "number of Hessian locations N_H");
  run->add_option("--epsilon", eps_flag, "finite-difference step");
  run->add_option("--restarts", restarts_flag, "power-method restarts n (0: automatic)");
  run->add_option("--max-steps", steps_flag, "power-method steps K");
  run->add_option("--completion-steps", completion_flag, "gradient steps in the completion");
  run->add_option("--train-samples", train_flag, "completion training samples N_f");
  run->add_option("--lr", lr_flag, "completion learning rate");

  // reproduce
  auto* rep = app.add_subcommand("reproduce", "run a scaled experiment and write CSV and summaries");
  std::string rep_name, rep_out = "reproduce_out";
  ExperimentOptions rep_opts;
  rep->add_option("experiment", rep_name, "table3 | recovery-figures | gd-comparison | completion")->required();
  rep->add_option("-o,--out", rep_out, "output directory");
  rep->add_option("--trials", rep_opts.trials, "trials per cell");
  rep->add_option("--seed", rep_opts.seed, "master seed");
  rep->add_flag("--full", rep_opts.full_scale, "full-scale hyperparameters");

  // inspect
  auto* insp = app.add_subcommand("inspect", "print a report");
  std::string insp_path;
  insp->add_option("report", insp_path, "report JSON")->required();

  // theory-check
  auto* th = app.add_subcommand("theory-check", "evaluate the bounds and constants for a teacher");
  ArchFlags th_arch;
  th_arch.add(th);
  std::string th_teacher;
  std::uint64_t th_seed = 0;
  int th_pairs = 1000, th_moments = 10000;
  double th_radius = 0.01;
  th->add_option("--teacher", th_teacher, "teacher network JSON");
  th->add_option("--seed", th_seed, "seed for the teacher and all samples");
  th->add_option("--pairs", th_pairs, "point pairs for the smoothness bounds");
  th->add_option("--moment-samples", th_moments, "locations for the second-moment estimate");
  th->add_option("--radius", th_radius, "radius R of the location law");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_worker_count(threads);

  try {
    if (*gen) {
      Architecture arch;
      gen_arch.apply(arch);
      const NetworkParams net = sample_network(arch, gen_seed);
      if (gen_out.empty()) std::cout << std::setw(2) << to_json(net) << "\n";
      else write_json(gen_out, to_json(net));
      return 0;
    }

    if (*run) {
      PipelineConfig cfg;
      if (!run_config.empty()) cfg = pipeline_config_from_json(read_json(run_config));
      std::optional<NetworkParams> teacher;
      if (!run_teacher.empty()) {
        teacher = network_from_json(read_json(run_teacher));
        cfg.architecture = {teacher->input_dim(), teacher->depth(), teacher->output_dim(),
                            teacher->neuron_count(), cfg.architecture.contraction};
      }
      run_arch.apply(cfg.architecture);
      if (desk && run_config.empty()) cfg = PipelineConfig::desk(cfg.architecture);
      if (seed_flag) cfg.seed = *seed_flag;
      if (teacher_seed_flag) cfg.teacher_seed = *teacher_seed_flag;
      if (radius_flag) cfg.radius = *radius_flag;
      if (nh_flag) cfg.hessian_locations = *nh_flag;
      if (eps_flag) cfg.epsilon = *eps_flag;
      if (restarts_flag) cfg.restarts = *restarts_flag;
      if (steps_flag) cfg.max_steps = *steps_flag;
      if (completion_flag) cfg.completion_steps = *completion_flag;
      if (train_flag) cfg.train_samples = *train_flag;
      if (lr_flag) cfg.learning_rate = *lr_flag;
      if (analytic) cfg.hessian_mode = HessianMode::Analytic;
      if (no_assign) cfg.run_assignment = false;
      if (no_assign || no_complete) cfg.run_completion = false;
      if (oracle) cfg.oracle_assignment = true;
      cfg.validate();

      const PipelineResult res = teacher ? run_pipeline(cfg, *teacher) : run_pipeline(cfg);
      fs::create_directories(run_out);
      const fs::path dir(run_out);
      write_json(dir / "config.json", to_json(cfg));
      write_json(dir / "report.json", to_json(res.report));
      write_json(dir / "teacher.json", to_json(res.teacher));
      {
        std::ofstream os(dir / "candidates.csv");
        write_csv(res.candidates, os);
      }
      if (save_projector) write_json(dir / "projector.json", to_json(res.projector));
      if (res.assignment) write_json(dir / "assignment.json", to_json(*res.assignment));
      if (res.student) write_json(dir / "student.json", to_json(*res.student));
      if (!res.loss_history.empty()) {
        std::ofstream os(dir / "loss.csv");
        os << "step,loss\n" << std::setprecision(12);
        for (std::size_t k = 0; k < res.loss_history.size(); ++k) os << k << "," << res.loss_history[k] << "\n";
      }
      print_report(to_json(res.report), std::cout);
      return 0;
    }

    if (*rep) {
      rep_opts.out_dir = rep_out;
      rep_opts.log = &std::cerr;
      const ExperimentSummary s = reproduce(rep_name, rep_opts);
      for (const Check& c : s.checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.value << " (threshold " << c.threshold
                  << ")\n";
      return s.passed() ? 0 : 1;
    }

    if (*insp) {
      print_report(read_json(insp_path), std::cout);
      return 0;
    }

    if (*th) {
      NetworkParams net;
      if (!th_teacher.empty()) {
        net = network_from_json(read_json(th_teacher));
      } else {
        Architecture arch{50, 3, 10, 70, 0.5};
        th_arch.apply(arch);
        net = sample_network(arch, th_seed);
      }
      const int dim = net.input_dim();
      const SamplingLaw law = SamplingLaw::sphere(dim, th_radius);
      const Mat a = sample_points(law, dim, th_pairs, derive_seed(th_seed, "pairs", 0));
      const Mat b = sample_points(law, dim, th_pairs, derive_seed(th_seed, "pairs", 1));
      TheoremConfig tc;
      tc.moment_samples = th_moments;
      tc.seed = th_seed;
      nlohmann::json out;
      out["smoothness"] = to_json(lipschitz_bound_check(net, a, b));
      out["first_layer_frame"] = to_json(frame_constant(net.weights.front()));
      const TheoremReport tr = theorem_constants(net, law, tc);
      out["constants"] = to_json(tr);
      out["constants"]["normalized_bound"] = std::isfinite(tr.bound)
                                                 ? nlohmann::json(tr.normalized_bound(net.neuron_count()))
                                                 : nlohmann::json(nullptr);
      std::cout << std::setw(2) << out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
