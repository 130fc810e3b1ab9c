// Command-line front end for the experiment harness.

#include "mpg/harness.hpp"
#include "mpg/potential.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

struct RunFlags {
  std::string config_file;
  std::string env;
  std::vector<std::size_t> action_counts;
  std::size_t states = 0;
  double gamma = -1.0;
  double delta_star = -1.0;
  std::size_t congestion_n = 0;
  std::size_t facilities = 0;
  double penalty = -1.0;
  std::string learner;
  double eta = -1.0;
  double lambda = -1.0;
  double tau = -1.0;
  bool safe_eta = false;
  std::size_t iterations = 0;
  std::vector<std::uint64_t> seeds;
  double tie_tol = -1.0;
  std::size_t record_every = 0;
  bool no_bound = false;
  std::string reference;
  std::string output;
  std::string estimator;
  std::size_t mc_episodes = 0;
  std::size_t mc_horizon = 0;
  std::size_t workers = 0;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--config", f.config_file, "JSON config file; flags override its fields");
  app->add_option("--env", f.env, "synthetic | congestion | delta_matrix | random_mpg");
  app->add_option("--action-counts", f.action_counts, "Actions per agent");
  app->add_option("--states", f.states, "State count (random_mpg)");
  app->add_option("--gamma", f.gamma, "Discount factor");
  app->add_option("--delta-star", f.delta_star, "Suboptimality gap (delta_matrix)");
  app->add_option("--agents", f.congestion_n, "Agents (congestion)");
  app->add_option("--facilities", f.facilities, "Facilities (congestion)");
  app->add_option("--penalty", f.penalty, "Distancing penalty (congestion)");
  app->add_option("--learner", f.learner, "npg | pg_softmax | projected_q | npg_log_barrier | npg_entropy");
  app->add_option("--eta", f.eta, "Step size");
  app->add_option("--lambda", f.lambda, "Log-barrier weight");
  app->add_option("--tau", f.tau, "Entropy weight");
  app->add_flag("--theorem-safe-eta", f.safe_eta, "Use the provably safe step size");
  app->add_option("-K,--iterations", f.iterations, "Iterations");
  app->add_option("--seeds", f.seeds, "Seeds");
  app->add_option("--tie-tol", f.tie_tol, "Argmax tie tolerance");
  app->add_option("--record-every", f.record_every, "CSV row stride");
  app->add_flag("--no-bound", f.no_bound, "Skip the convergence bound");
  app->add_option("--reference-nash", f.reference, "'auto' or a profile JSON file");
  app->add_option("-o,--output", f.output, "Output directory (relative to $MPG_OUTPUT_ROOT if set)");
  app->add_option("--estimator", f.estimator, "exact | monte_carlo");
  app->add_option("--mc-episodes", f.mc_episodes, "Trajectories per Monte Carlo batch");
  app->add_option("--mc-horizon", f.mc_horizon, "Monte Carlo episode length");
  app->add_option("--workers", f.workers, "Parallel seed workers");
}

mpg::RunConfig to_config(const RunFlags& f) {
  json j = json::object();
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw std::runtime_error("cannot read config " + f.config_file);
    j = json::parse(in);
  }
  mpg::RunConfig cfg = mpg::run_config_from_json(j);
  if (!f.env.empty()) cfg.env.kind = mpg::env_kind_from_string(f.env);
  if (!f.action_counts.empty()) cfg.env.action_counts = f.action_counts;
  if (f.states) cfg.env.states = f.states;
  if (f.gamma >= 0.0) cfg.env.gamma = f.gamma;
  if (f.delta_star >= 0.0) cfg.env.delta_star = f.delta_star;
  if (f.congestion_n) cfg.env.congestion.n = f.congestion_n;
  if (f.facilities) cfg.env.congestion.facilities = f.facilities;
  if (f.penalty >= 0.0) cfg.env.congestion.distancing_penalty = f.penalty;
  if (!f.learner.empty()) cfg.learner.kind = mpg::learner_kind_from_string(f.learner);
  if (f.eta >= 0.0) cfg.learner.eta = f.eta;
  if (f.lambda >= 0.0) cfg.learner.lambda = f.lambda;
  if (f.tau >= 0.0) cfg.learner.tau = f.tau;
  if (f.safe_eta) cfg.theorem_safe_eta = true;
  if (f.iterations) cfg.iterations = f.iterations;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (f.tie_tol >= 0.0) cfg.tie_tol = f.tie_tol;
  if (f.record_every) cfg.record_every = f.record_every;
  if (f.no_bound) cfg.compute_bound = false;
  if (!f.reference.empty()) cfg.reference_nash = f.reference;
  if (!f.output.empty()) cfg.output = f.output;
  if (f.estimator == "exact") cfg.estimator = mpg::Estimator::exact;
  else if (f.estimator == "monte_carlo") cfg.estimator = mpg::Estimator::monte_carlo;
  else if (!f.estimator.empty()) throw std::domain_error("unknown estimator " + f.estimator);
  if (f.mc_episodes) cfg.mc_episodes = f.mc_episodes;
  if (f.mc_horizon) cfg.mc_horizon = f.mc_horizon;
  if (f.workers) cfg.workers = f.workers;
  if (cfg.env.kind == mpg::EnvKind::congestion && !cfg.reference_nash) cfg.reference_nash = "auto";
  if (cfg.output.empty()) cfg.output = "runs";
  cfg.validate();
  return cfg;
}

void print_run(const mpg::RunResult& r) {
  std::cout << r.env_name << " " << r.learner << "\n";
  for (const mpg::SeedRun& s : r.runs) {
    const mpg::IterationRecord& last = s.records.back();
    std::cout << "  seed " << s.seed << " eta " << s.eta << " final ne_gap " << last.ne_gap << " phi "
              << last.phi;
    if (last.l1_to_ref) std::cout << " l1 " << *last.l1_to_ref;
    if (s.bound) {
      std::cout << " bound " << (s.bound->applicable ? (s.bound->satisfied ? "holds" : "VIOLATED") : "n/a");
    }
    std::cout << "\n";
  }
  if (!r.summary.empty()) std::cout << "summary: " << r.summary.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular Markov potential game lab"};
  app.require_subcommand(1);

  RunFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "Run one learner over the configured seeds");
  add_run_flags(run_cmd, run_flags);

  std::vector<std::string> compare_learners;
  std::vector<double> compare_etas;
  std::vector<double> eta_grid;
  RunFlags compare_flags;
  CLI::App* compare_cmd = app.add_subcommand("compare", "Run several learners on one environment and rank them");
  add_run_flags(compare_cmd, compare_flags);
  compare_cmd->add_option("--learners", compare_learners, "Learners to compare")->required();
  compare_cmd->add_option("--etas", compare_etas, "Per-learner step sizes (default: --eta)");
  compare_cmd->add_option("--eta-grid", eta_grid, "Grid-search each learner's step size first");

  mpg::SweepConfig sweep;
  double sweep_eta = 0.1;
  std::string sweep_out = "runs";
  CLI::App* sweep_cmd = app.add_subcommand("sweep-delta", "Iterations to reach a gap threshold per delta*");
  sweep_cmd->add_option("--deltas", sweep.deltas, "delta* values");
  sweep_cmd->add_option("--eta", sweep_eta, "NPG step size");
  sweep_cmd->add_option("--threshold", sweep.threshold, "NE-gap threshold");
  sweep_cmd->add_option("--max-iterations", sweep.max_iterations, "Iteration cap per delta*");
  sweep_cmd->add_option("-o,--output", sweep_out, "Output directory");

  RunFlags verify_flags;
  std::size_t trials = 100;
  std::uint64_t verify_seed = 0;
  std::string game_file;
  CLI::App* verify_cmd = app.add_subcommand("verify-potential", "Check the potential identity on random deviations");
  add_run_flags(verify_cmd, verify_flags);
  verify_cmd->add_option("--trials", trials, "Random deviation trials");
  verify_cmd->add_option("--seed", verify_seed, "Seed for the environment and the trials");
  verify_cmd->add_option("--game", game_file, "Game JSON file with phi instead of --env");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      print_run(mpg::run(to_config(run_flags)));
    } else if (*compare_cmd) {
      const mpg::RunConfig base = to_config(compare_flags);
      if (!compare_etas.empty() && compare_etas.size() != compare_learners.size()) {
        throw std::domain_error("--etas needs one value per learner");
      }
      std::vector<mpg::RunConfig> cfgs;
      for (std::size_t i = 0; i < compare_learners.size(); ++i) {
        mpg::RunConfig cfg = base;
        cfg.learner.kind = mpg::learner_kind_from_string(compare_learners[i]);
        if (!compare_etas.empty()) cfg.learner.eta = compare_etas[i];
        if (!eta_grid.empty()) cfg.learner.eta = mpg::grid_search_eta(cfg, eta_grid);
        cfgs.push_back(cfg);
      }
      const mpg::ComparisonSummary summary = mpg::compare(cfgs);
      std::cout << summary.env_name << " by " << summary.metric << "\n";
      for (const auto& lc : summary.learners) {
        std::cout << "  " << lc.learner << " eta " << lc.eta << " auc " << lc.auc << " final median "
                  << lc.final_median << "\n";
      }
      std::cout << "ordering:";
      for (const auto& name : summary.ordering) std::cout << " " << name;
      std::cout << "\n";
    } else if (*sweep_cmd) {
      sweep.learner.eta = sweep_eta;
      sweep.output = sweep_out;
      const mpg::SweepResult result = mpg::sweep_delta(sweep);
      for (const auto& p : result.points) {
        std::cout << "delta* " << p.delta_star << ": ";
        if (p.iterations) std::cout << *p.iterations << " iterations\n";
        else std::cout << "not reached\n";
      }
      std::cout << "non-increasing: " << (result.non_increasing ? "yes" : "no") << "\n";
    } else if (*verify_cmd) {
      std::optional<mpg::Environment> env;
      std::optional<mpg::GameFile> file;
      const mpg::TabularGame* game = nullptr;
      const mpg::PotentialSpec* spec = nullptr;
      if (!game_file.empty()) {
        file = mpg::load_game(game_file);
        if (!file->potential) throw std::domain_error("game file has no phi");
        game = &file->game;
        spec = &*file->potential;
      } else {
        env = to_config(verify_flags).env.build(verify_seed);
        game = &env->game;
        spec = &env->potential;
      }
      const mpg::PotentialReport report = mpg::verify_potential(*game, *spec, trials, verify_seed);
      std::cout << "max violation " << report.max_violation << " (sampled " << report.sampled_violation
                << ", per-state reward " << mpg::unilateral_reward_violation(*game, *spec) << ", " << report.trials << " trials)\n";
      return report.max_violation < 1e-8 ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
