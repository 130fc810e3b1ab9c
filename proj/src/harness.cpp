#include "mpg/harness.hpp"

#include "mpg/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace mpg {

using nlohmann::json;

namespace {

constexpr std::string_view kCsvHeader = "k,ne_gap,phi,c_k,delta_k,l1,seed,learner,eta";

void append_double(std::string& out, double x) {
  if (std::isnan(x)) {
    out += "nan";
    return;
  }
  if (std::isinf(x)) {
    out += x > 0 ? "inf" : "-inf";
    return;
  }
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, end);
}

double parse_double(std::string_view field) {
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  double x = 0.0;
  auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
  if (ec != std::errc() || end != field.data() + field.size()) {
    throw std::domain_error("csv: bad number '" + std::string(field) + "'");
  }
  return x;
}

template <class T>
T parse_integer(std::string_view field) {
  T x{};
  auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
  if (ec != std::errc() || end != field.data() + field.size()) {
    throw std::domain_error("csv: bad integer '" + std::string(field) + "'");
  }
  return x;
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

PolicyProfile load_reference(const TabularGame& game, const std::string& spec) {
  if (spec == "auto") return best_response_dynamics(game, PolicyProfile::uniform(game, false));
  std::ifstream in(spec);
  if (!in) throw std::runtime_error("cannot read reference profile " + spec);
  PolicyProfile ref = profile_from_json(json::parse(in));
  ref.validate(game);
  return ref;
}

json curve_json(const CurveStats& c) {
  return {{"k", c.k},       {"median", c.median}, {"min", c.min},
          {"max", c.max},   {"mean", c.mean},     {"variance", c.variance}};
}

json bound_json(const BoundReport& b) {
  json j = {{"kind", b.kind == BoundKind::markov ? "markov" : "static"},
            {"lhs", b.lhs},
            {"rhs", b.rhs},
            {"K", b.K},
            {"n", b.params.n},
            {"phi_max", b.params.phi_max},
            {"gamma", b.params.gamma},
            {"c", b.c},
            {"delta_K", std::isfinite(b.delta_K) ? json(b.delta_K) : json("inf")},
            {"m_hat", b.m_hat},
            {"applicable", b.applicable},
            {"satisfied", b.satisfied}};
  if (b.delta_star_hat) j["delta_star_hat"] = *b.delta_star_hat;
  if (b.k_prime_hat) j["k_prime_hat"] = *b.k_prime_hat;
  if (b.rhs_asymptotic) j["rhs_asymptotic"] = *b.rhs_asymptotic;
  return j;
}

std::string file_stem(const std::string& env, std::string_view learner) {
  return env + "_" + std::string(learner);
}

// Runs f(i) for i in [0, count) on up to `workers` threads; results keep
// index order.
template <class F>
auto fan_out(std::size_t count, std::size_t workers, F f) {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> out;
  out.reserve(count);
  workers = std::max<std::size_t>(workers, 1);
  for (std::size_t begin = 0; begin < count; begin += workers) {
    const std::size_t end = std::min(count, begin + workers);
    if (end - begin == 1) {
      out.push_back(f(begin));
      continue;
    }
    std::vector<std::future<R>> jobs;
    for (std::size_t i = begin; i < end; ++i) jobs.push_back(std::async(std::launch::async, f, i));
    for (auto& job : jobs) out.push_back(job.get());
  }
  return out;
}

bool is_congestion(const RunConfig& cfg) { return cfg.env.kind == EnvKind::congestion; }

}  // namespace

std::string_view to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::synthetic: return "synthetic";
    case EnvKind::congestion: return "congestion";
    case EnvKind::delta_matrix: return "delta_matrix";
    case EnvKind::random_mpg: return "random_mpg";
  }
  return "unknown";
}

EnvKind env_kind_from_string(std::string_view name) {
  for (EnvKind kind : {EnvKind::synthetic, EnvKind::congestion, EnvKind::delta_matrix, EnvKind::random_mpg}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::domain_error("unknown environment: " + std::string(name));
}

Environment EnvConfig::build(std::uint64_t seed) const {
  const std::uint64_t s = instance_seed.value_or(seed);
  switch (kind) {
    case EnvKind::synthetic:
      return make_synthetic(action_counts.size(), action_counts, s, gamma.value_or(kStaticGamma));
    case EnvKind::random_mpg:
      return make_random_mpg(action_counts.size(), action_counts, states, s, gamma.value_or(0.9));
    case EnvKind::delta_matrix: return make_delta_matrix(delta_star, gamma.value_or(kStaticGamma));
    case EnvKind::congestion: {
      CongestionConfig c = congestion;
      if (gamma) c.gamma = *gamma;
      return make_congestion(c);
    }
  }
  throw std::domain_error("unknown environment");
}

void RunConfig::validate() const {
  if (iterations < 1) throw std::domain_error("run: iterations must be >= 1");
  if (seeds.empty()) throw std::domain_error("run: seeds must be nonempty");
  if (record_every < 1) throw std::domain_error("run: record_every must be >= 1");
  if (!(tie_tol >= 0.0)) throw std::domain_error("run: tie_tol must be >= 0");
  if (estimator == Estimator::monte_carlo && (mc_episodes < 1 || mc_horizon < 1)) {
    throw std::domain_error("run: Monte Carlo needs episodes and horizon >= 1");
  }
  if (!theorem_safe_eta) learner.validate();
}

RunConfig run_config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "env",        "learner",        "theorem_safe_eta", "iterations", "seeds",      "tie_tol",
      "record_every", "compute_bound", "reference_nash", "output",     "estimator",  "mc_episodes",
      "mc_horizon", "workers"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::domain_error("config: unknown key '" + key + "'");
    }
  }
  RunConfig cfg;
  if (j.contains("env")) {
    const json& e = j.at("env");
    if (e.contains("kind")) cfg.env.kind = env_kind_from_string(e.at("kind").get<std::string>());
    if (e.contains("action_counts")) cfg.env.action_counts = e.at("action_counts").get<std::vector<std::size_t>>();
    if (e.contains("states")) cfg.env.states = e.at("states").get<std::size_t>();
    if (e.contains("gamma")) cfg.env.gamma = e.at("gamma").get<double>();
    if (e.contains("delta_star")) cfg.env.delta_star = e.at("delta_star").get<double>();
    if (e.contains("instance_seed")) cfg.env.instance_seed = e.at("instance_seed").get<std::uint64_t>();
    if (e.contains("congestion")) {
      const json& c = e.at("congestion");
      CongestionConfig& cc = cfg.env.congestion;
      if (c.contains("n")) cc.n = c.at("n").get<std::size_t>();
      if (c.contains("facilities")) cc.facilities = c.at("facilities").get<std::size_t>();
      if (c.contains("weights_safe")) cc.weights_safe = c.at("weights_safe").get<std::vector<double>>();
      if (c.contains("weights_distancing")) {
        cc.weights_distancing = c.at("weights_distancing").get<std::vector<double>>();
      }
      if (c.contains("distancing_penalty")) cc.distancing_penalty = c.at("distancing_penalty").get<double>();
      if (c.contains("threshold")) cc.threshold = c.at("threshold").get<double>();
      if (c.contains("rho")) cc.rho = c.at("rho").get<std::vector<double>>();
    }
  }
  if (j.contains("learner")) {
    const json& l = j.at("learner");
    if (l.contains("kind")) cfg.learner.kind = learner_kind_from_string(l.at("kind").get<std::string>());
    if (l.contains("eta")) cfg.learner.eta = l.at("eta").get<double>();
    if (l.contains("lambda")) cfg.learner.lambda = l.at("lambda").get<double>();
    if (l.contains("tau")) cfg.learner.tau = l.at("tau").get<double>();
  }
  if (j.contains("theorem_safe_eta")) cfg.theorem_safe_eta = j.at("theorem_safe_eta").get<bool>();
  if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<std::size_t>();
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("tie_tol")) cfg.tie_tol = j.at("tie_tol").get<double>();
  if (j.contains("record_every")) cfg.record_every = j.at("record_every").get<std::size_t>();
  if (j.contains("compute_bound")) cfg.compute_bound = j.at("compute_bound").get<bool>();
  if (j.contains("reference_nash")) cfg.reference_nash = j.at("reference_nash").get<std::string>();
  if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
  if (j.contains("estimator")) {
    const auto name = j.at("estimator").get<std::string>();
    if (name == "exact") cfg.estimator = Estimator::exact;
    else if (name == "monte_carlo") cfg.estimator = Estimator::monte_carlo;
    else throw std::domain_error("config: unknown estimator '" + name + "'");
  }
  if (j.contains("mc_episodes")) cfg.mc_episodes = j.at("mc_episodes").get<std::size_t>();
  if (j.contains("mc_horizon")) cfg.mc_horizon = j.at("mc_horizon").get<std::size_t>();
  if (j.contains("workers")) cfg.workers = j.at("workers").get<std::size_t>();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const CongestionConfig& cc = cfg.env.congestion;
  json env = {{"kind", to_string(cfg.env.kind)},
              {"action_counts", cfg.env.action_counts},
              {"states", cfg.env.states},
              {"delta_star", cfg.env.delta_star},
              {"congestion",
               {{"n", cc.n},
                {"facilities", cc.facilities},
                {"weights_safe", cc.weights_safe},
                {"weights_distancing", cc.weights_distancing},
                {"distancing_penalty", cc.distancing_penalty},
                {"threshold", cc.threshold},
                {"rho", cc.rho}}}};
  if (cfg.env.gamma) env["gamma"] = *cfg.env.gamma;
  if (cfg.env.instance_seed) env["instance_seed"] = *cfg.env.instance_seed;
  json j = {{"env", env},
            {"learner",
             {{"kind", to_string(cfg.learner.kind)},
              {"eta", cfg.learner.eta},
              {"lambda", cfg.learner.lambda},
              {"tau", cfg.learner.tau}}},
            {"theorem_safe_eta", cfg.theorem_safe_eta},
            {"iterations", cfg.iterations},
            {"seeds", cfg.seeds},
            {"tie_tol", cfg.tie_tol},
            {"record_every", cfg.record_every},
            {"compute_bound", cfg.compute_bound},
            {"output", cfg.output.string()},
            {"estimator", cfg.estimator == Estimator::exact ? "exact" : "monte_carlo"},
            {"mc_episodes", cfg.mc_episodes},
            {"mc_horizon", cfg.mc_horizon},
            {"workers", cfg.workers}};
  if (cfg.reference_nash) j["reference_nash"] = *cfg.reference_nash;
  return j;
}

SeedRun run_seed(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Environment env = cfg.env.build(seed);
  const TabularGame& game = env.game;
  LearnerConfig learner = cfg.learner;
  if (cfg.theorem_safe_eta) learner.eta = theorem_safe_eta(game, env.potential.phi_max());
  learner.validate();

  std::optional<PolicyProfile> reference;
  if (cfg.reference_nash) reference = load_reference(game, *cfg.reference_nash);

  SeedRun out;
  out.seed = seed;
  out.eta = learner.eta;
  out.records.reserve(cfg.iterations);
  const double unit = game.is_static() ? 1.0 - game.gamma() : 1.0;

  PolicyProfile profile = PolicyProfile::uniform(game, learner.uses_logits());
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    const auto start = std::chrono::steady_clock::now();
    try {
      EvaluationBundle bundle = evaluate(game, profile, &env.potential);
      IterationRecord rec;
      rec.k = k;
      rec.ne_gap = unit * ne_gap(game, profile).value;
      rec.phi = unit * *bundle.phi_value;
      const GapDiagnostics diag = gap_diagnostics(profile, bundle, cfg.tie_tol);
      rec.c_k = diag.c_k;
      rec.delta_k = diag.delta_infinite ? std::numeric_limits<double>::infinity() : diag.delta_k;
      if (reference) rec.l1_to_ref = l1_distance(profile, *reference);
      accumulate_mismatch(out.m_hat, bundle.d_rho);

      if (cfg.estimator == Estimator::monte_carlo) {
        bundle = mc_estimate(game, profile, cfg.mc_episodes, cfg.mc_horizon, derive_seed(seed, k)).as_bundle();
      }
      profile = learner_step(learner, game, profile, bundle);
      rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                        std::chrono::steady_clock::now() - start).count();
      out.records.push_back(rec);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(k) + ": " + e.what());
    }
  }
  // M is a supremum over pi^0..pi^K, so the last iterate counts too.
  accumulate_mismatch(out.m_hat, evaluate(game, profile).d_rho);
  out.final_profile = std::move(profile);

  if (cfg.compute_bound) {
    const BoundParams params{game.agents(), env.potential.phi_max(), game.gamma()};
    const BoundKind kind = game.is_static() ? BoundKind::static_game : BoundKind::markov;
    const double m = out.m_hat.infinite ? std::numeric_limits<double>::infinity() : out.m_hat.value;
    out.bound = theorem_bound(out.records, params, m, kind);
  }
  return out;
}

CurveStats curve_stats(const std::vector<std::vector<double>>& curves, const std::vector<std::size_t>& k) {
  if (curves.empty()) throw std::domain_error("curve_stats: no curves");
  CurveStats out;
  out.k = k;
  for (const auto& c : curves) {
    if (c.size() != k.size()) throw std::domain_error("curve_stats: curve length mismatch");
  }
  std::vector<double> column(curves.size());
  for (std::size_t t = 0; t < k.size(); ++t) {
    for (std::size_t r = 0; r < curves.size(); ++r) column[r] = curves[r][t];
    double mean = 0.0;
    for (double x : column) mean += x;
    mean /= static_cast<double>(column.size());
    double var = 0.0;
    for (double x : column) var += (x - mean) * (x - mean);
    var /= static_cast<double>(column.size());
    out.mean.push_back(mean);
    out.variance.push_back(var);
    out.min.push_back(*std::min_element(column.begin(), column.end()));
    out.max.push_back(*std::max_element(column.begin(), column.end()));
    out.median.push_back(median_of(column));
  }
  return out;
}

RunResult run(const RunConfig& cfg) {
  cfg.validate();
  const std::filesystem::path dir = cfg.output.empty() ? cfg.output : resolve_output(cfg.output);
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || ::access(dir.c_str(), W_OK) != 0) {
      throw std::runtime_error("output directory not writable: " + dir.string());
    }
  }

  RunResult result;
  result.env_name = cfg.env.build(cfg.seeds.front()).name;
  result.learner = std::string(to_string(cfg.learner.kind));
  const std::string stem = file_stem(result.env_name, result.learner);

  result.runs = fan_out(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
    SeedRun r = run_seed(cfg, cfg.seeds[i]);
    if (!dir.empty()) {
      r.csv = dir / (stem + "_seed" + std::to_string(r.seed) + ".csv");
      write_atomic(r.csv, format_csv(r.records, cfg.record_every, r.seed, result.learner, r.eta));
    }
    return r;
  });

  std::vector<std::size_t> ks;
  for (std::size_t k = 0; k < cfg.iterations; k += cfg.record_every) ks.push_back(k);
  std::vector<std::vector<double>> gaps, ergodic, l1s;
  for (const SeedRun& r : result.runs) {
    std::vector<double> g, e, l;
    double total = 0.0;
    for (std::size_t k = 0; k < r.records.size(); ++k) {
      total += r.records[k].ne_gap;
      if (k % cfg.record_every) continue;
      g.push_back(r.records[k].ne_gap);
      e.push_back(total / static_cast<double>(k + 1));
      if (r.records[k].l1_to_ref) l.push_back(*r.records[k].l1_to_ref);
    }
    gaps.push_back(std::move(g));
    ergodic.push_back(std::move(e));
    if (!l.empty()) l1s.push_back(std::move(l));
  }
  result.ne_gap = curve_stats(gaps, ks);
  result.ergodic_ne_gap = curve_stats(ergodic, ks);
  if (!l1s.empty()) result.l1 = curve_stats(l1s, ks);

  if (!dir.empty()) {
    json seeds = json::array();
    for (const SeedRun& r : result.runs) {
      const IterationRecord& last = r.records.back();
      json s = {{"seed", r.seed},
                {"eta", r.eta},
                {"final_ne_gap", last.ne_gap},
                {"final_phi", last.phi},
                {"m_hat", r.m_hat.value},
                {"m_hat_infinite", r.m_hat.infinite},
                {"csv", r.csv.filename().string()}};
      if (last.l1_to_ref) s["final_l1"] = *last.l1_to_ref;
      if (r.bound) s["bound"] = bound_json(*r.bound);
      seeds.push_back(std::move(s));
    }
    json summary = {{"env", result.env_name},
                    {"learner", result.learner},
                    {"config", to_json(cfg)},
                    {"seeds", seeds},
                    {"ne_gap", curve_json(result.ne_gap)},
                    {"ergodic_ne_gap", curve_json(result.ergodic_ne_gap)}};
    if (result.l1) summary["l1"] = curve_json(*result.l1);
    result.summary = dir / (stem + "_summary.json");
    write_atomic(result.summary, summary.dump(2) + "\n");
  }
  return result;
}

ComparisonSummary compare_results(const std::vector<RunConfig>& cfgs, const std::vector<RunResult>& results) {
  if (cfgs.empty() || cfgs.size() != results.size()) throw std::domain_error("compare: no runs");
  const json env = to_json(cfgs.front())["env"];
  for (const RunConfig& c : cfgs) {
    if (to_json(c)["env"] != env) throw std::domain_error("compare: configs use different environments");
    if (c.seeds != cfgs.front().seeds) throw std::domain_error("compare: configs use different seeds");
    if (c.iterations != cfgs.front().iterations || c.record_every != cfgs.front().record_every) {
      throw std::domain_error("compare: configs use different iteration grids");
    }
  }
  ComparisonSummary out;
  out.env_name = results.front().env_name;
  const bool by_l1 = is_congestion(cfgs.front());
  out.metric = by_l1 ? "l1" : "ne_gap";
  for (const RunResult& r : results) {
    if (by_l1 && !r.l1) throw std::domain_error("compare: congestion runs need a reference profile");
    LearnerComparison lc;
    lc.learner = r.learner;
    lc.eta = r.runs.front().eta;
    lc.curve = by_l1 ? *r.l1 : r.ne_gap;
    for (double x : lc.curve.median) lc.auc += x;
    lc.final_median = lc.curve.median.back();
    out.learners.push_back(std::move(lc));
  }
  std::vector<std::size_t> order(out.learners.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.learners[a].auc < out.learners[b].auc; });
  for (std::size_t i : order) out.ordering.push_back(out.learners[i].learner);

  if (!cfgs.front().output.empty()) {
    json learners = json::array();
    for (const LearnerComparison& lc : out.learners) {
      learners.push_back({{"learner", lc.learner},
                          {"eta", lc.eta},
                          {"auc", lc.auc},
                          {"final_median", lc.final_median},
                          {"curve", curve_json(lc.curve)}});
    }
    json summary = {{"env", out.env_name}, {"metric", out.metric}, {"learners", learners}, {"ordering", out.ordering}};
    out.summary = resolve_output(cfgs.front().output) / (out.env_name + "_comparison.json");
    write_atomic(out.summary, summary.dump(2) + "\n");
  }
  return out;
}

ComparisonSummary compare(const std::vector<RunConfig>& cfgs) {
  if (cfgs.empty()) throw std::domain_error("compare: no configs");
  // Check compatibility before paying for any run.
  const json env = to_json(cfgs.front())["env"];
  for (const RunConfig& c : cfgs) {
    if (to_json(c)["env"] != env) throw std::domain_error("compare: configs use different environments");
  }
  const std::size_t workers = cfgs.front().workers;
  std::vector<RunResult> results =
      fan_out(cfgs.size(), workers > 1 ? cfgs.size() : 1, [&](std::size_t i) { return run(cfgs[i]); });
  return compare_results(cfgs, results);
}

double grid_search_eta(const RunConfig& base, const std::vector<double>& grid) {
  if (grid.empty()) throw std::domain_error("grid_search_eta: empty grid");
  const bool by_l1 = is_congestion(base);
  double best_eta = grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (double eta : grid) {
    RunConfig cfg = base;
    cfg.learner.eta = eta;
    cfg.theorem_safe_eta = false;
    cfg.output.clear();
    cfg.compute_bound = false;
    const RunResult r = run(cfg);
    if (by_l1 && !r.l1) throw std::domain_error("grid_search_eta: congestion runs need a reference profile");
    const double score = by_l1 ? r.l1->median.back() : r.ne_gap.median.back();
    if (score < best) {
      best = score;
      best_eta = eta;
    }
  }
  return best_eta;
}

SweepResult sweep_delta(const SweepConfig& cfg) {
  if (cfg.deltas.empty()) throw std::domain_error("sweep_delta: no deltas");
  cfg.learner.validate();
  const std::filesystem::path dir = cfg.output.empty() ? cfg.output : resolve_output(cfg.output);
  if (!dir.empty()) std::filesystem::create_directories(dir);

  SweepResult out;
  json summary = json::array();
  for (double delta : cfg.deltas) {
    const Environment env = make_delta_matrix(delta);
    const TabularGame& game = env.game;
    const double unit = 1.0 - game.gamma();
    SweepPoint point;
    point.delta_star = delta;
    PolicyProfile profile = PolicyProfile::uniform(game, cfg.learner.uses_logits());
    for (std::size_t k = 0; k < cfg.max_iterations; ++k) {
      const EvaluationBundle bundle = evaluate(game, profile, &env.potential);
      IterationRecord rec;
      rec.k = k;
      rec.ne_gap = unit * ne_gap(game, profile).value;
      rec.phi = unit * *bundle.phi_value;
      const GapDiagnostics diag = gap_diagnostics(profile, bundle);
      rec.c_k = diag.c_k;
      rec.delta_k = diag.delta_infinite ? std::numeric_limits<double>::infinity() : diag.delta_k;
      point.records.push_back(rec);
      if (rec.ne_gap <= cfg.threshold) {
        point.iterations = k;
        break;
      }
      profile = learner_step(cfg.learner, game, profile, bundle);
    }
    if (!dir.empty()) {
      std::ostringstream name;
      name << "delta_sweep_" << delta << ".csv";
      write_atomic(dir / name.str(),
                   format_csv(point.records, 1, 0, to_string(cfg.learner.kind), cfg.learner.eta));
    }
    summary.push_back({{"delta_star", delta},
                       {"iterations", point.iterations ? json(*point.iterations) : json(nullptr)}});
    out.points.push_back(std::move(point));
  }

  out.non_increasing = true;
  for (std::size_t i = 1; i < out.points.size(); ++i) {
    const auto& prev = out.points[i - 1].iterations;
    const auto& cur = out.points[i].iterations;
    // An unreached threshold counts as infinitely many iterations.
    if (!cur) {
      if (prev) out.non_increasing = false;
    } else if (prev && *cur > *prev) {
      out.non_increasing = false;
    }
  }
  if (!dir.empty()) {
    json j = {{"threshold", cfg.threshold},
              {"eta", cfg.learner.eta},
              {"learner", to_string(cfg.learner.kind)},
              {"points", summary},
              {"non_increasing", out.non_increasing}};
    write_atomic(dir / "delta_sweep_summary.json", j.dump(2) + "\n");
  }
  return out;
}

PolicyProfile best_response_dynamics(const TabularGame& game, const PolicyProfile& start, std::size_t max_rounds) {
  start.validate(game);
  PolicyProfile profile;
  profile.dists = start.dists;
  for (std::size_t round = 0; round < max_rounds; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < game.agents(); ++i) {
      // Only switch on strict improvement, so ties cannot cycle.
      if (ne_gap(game, profile).per_agent[i] <= 1e-12) continue;
      const BestResponse br = best_response(game, profile, i);
      Matrix& pi = profile.dists[i];
      pi.setZero();
      for (std::size_t s = 0; s < br.actions.size(); ++s) {
        pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(br.actions[s])) = 1.0;
      }
      changed = true;
    }
    if (!changed) return profile;
  }
  throw NumericError("best_response_dynamics: no fixed point within the round limit");
}

json profile_to_json(const PolicyProfile& profile) {
  json agents = json::array();
  for (const Matrix& pi : profile.dists) {
    json rows = json::array();
    for (Eigen::Index s = 0; s < pi.rows(); ++s) {
      std::vector<double> row(pi.row(s).data(), pi.row(s).data() + pi.cols());
      rows.push_back(row);
    }
    agents.push_back(std::move(rows));
  }
  return {{"dists", agents}};
}

PolicyProfile profile_from_json(const json& j) {
  PolicyProfile out;
  for (const json& rows : j.at("dists")) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    if (r == 0) throw std::domain_error("profile: agent without states");
    const auto c = static_cast<Eigen::Index>(rows.at(0).size());
    Matrix pi(r, c);
    for (Eigen::Index s = 0; s < r; ++s) {
      const auto row = rows.at(static_cast<std::size_t>(s)).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != c) throw std::domain_error("profile: ragged rows");
      for (Eigen::Index a = 0; a < c; ++a) pi(s, a) = row[static_cast<std::size_t>(a)];
    }
    out.dists.push_back(std::move(pi));
  }
  return out;
}

std::string format_csv(const std::vector<IterationRecord>& records, std::size_t stride, std::uint64_t seed,
                       std::string_view learner, double eta) {
  if (stride < 1) throw std::domain_error("format_csv: stride must be >= 1");
  std::string out(kCsvHeader);
  out += '\n';
  for (std::size_t idx = 0; idx < records.size(); idx += stride) {
    const IterationRecord& r = records[idx];
    out += std::to_string(r.k);
    out += ',';
    append_double(out, r.ne_gap);
    out += ',';
    append_double(out, r.phi);
    out += ',';
    append_double(out, r.c_k);
    out += ',';
    append_double(out, r.delta_k);
    out += ',';
    if (r.l1_to_ref) append_double(out, *r.l1_to_ref);
    out += ',';
    out += std::to_string(seed);
    out += ',';
    out += learner;
    out += ',';
    append_double(out, eta);
    out += '\n';
  }
  return out;
}

std::vector<CsvRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::domain_error("csv: unexpected header");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1)) {
      f.push_back(rest.substr(0, pos));
    }
    f.push_back(rest);
    if (f.size() != 9) throw std::domain_error("csv: expected 9 fields");
    CsvRow row;
    row.record.k = parse_integer<std::size_t>(f[0]);
    row.record.ne_gap = parse_double(f[1]);
    row.record.phi = parse_double(f[2]);
    row.record.c_k = parse_double(f[3]);
    row.record.delta_k = parse_double(f[4]);
    if (!f[5].empty()) row.record.l1_to_ref = parse_double(f[5]);
    row.seed = parse_integer<std::uint64_t>(f[6]);
    row.learner = std::string(f[7]);
    row.eta = parse_double(f[8]);
    row.record.validate();
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::filesystem::path resolve_output(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("MPG_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / path;
  return path;
}

}  // namespace mpg
