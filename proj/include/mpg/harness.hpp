#pragma once

// Experiment runner: builds an environment, iterates evaluate/record/step
// for each seed, and writes CSV traces plus JSON summaries.

#include "mpg/environments.hpp"
#include "mpg/learners.hpp"
#include "mpg/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mpg {

enum class EnvKind { synthetic, congestion, delta_matrix, random_mpg };
std::string_view to_string(EnvKind kind);
EnvKind env_kind_from_string(std::string_view name);

struct EnvConfig {
  EnvKind kind = EnvKind::synthetic;
  std::vector<std::size_t> action_counts = {3, 4, 5};  // synthetic, random_mpg
  std::size_t states = 2;                              // random_mpg
  std::optional<double> gamma;                         // unset: constructor default
  double delta_star = 1.0;                             // delta_matrix
  CongestionConfig congestion;
  // Instance seed for the random generators. Unset: each run seed draws its
  // own instance.
  std::optional<std::uint64_t> instance_seed;

  Environment build(std::uint64_t seed) const;
};

enum class Estimator { exact, monte_carlo };

struct RunConfig {
  EnvConfig env;
  LearnerConfig learner;
  // Replace learner.eta by theorem_safe_eta for the built game.
  bool theorem_safe_eta = false;
  std::size_t iterations = 100;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  double tie_tol = kTieTol;
  std::size_t record_every = 1;
  bool compute_bound = true;
  // "auto" runs best-response dynamics from the uniform profile; anything
  // else is a profile JSON file. Unset disables the L1 column.
  std::optional<std::string> reference_nash;
  std::filesystem::path output;  // empty: no files written
  Estimator estimator = Estimator::exact;
  std::size_t mc_episodes = 20;
  std::size_t mc_horizon = 20;
  std::size_t workers = 1;

  /// Throws std::domain_error on K = 0, no seeds, stride 0 or a bad learner.
  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

struct SeedRun {
  std::uint64_t seed = 0;
  double eta = 0.0;
  std::vector<IterationRecord> records;  // every iteration, including unstrided ones
  PolicyProfile final_profile;
  MismatchEstimate m_hat;
  std::optional<BoundReport> bound;
  std::filesystem::path csv;
};

struct CurveStats {
  std::vector<std::size_t> k;
  std::vector<double> median, min, max, mean, variance;
};

/// Per-index statistics over seeds; curves must have equal length.
CurveStats curve_stats(const std::vector<std::vector<double>>& curves,
                       const std::vector<std::size_t>& k);

struct RunResult {
  std::string env_name;
  std::string learner;
  std::vector<SeedRun> runs;
  CurveStats ergodic_ne_gap;  // running average of NE-gap over recorded k
  CurveStats ne_gap;
  std::optional<CurveStats> l1;
  std::filesystem::path summary;
};

/// Single-state games record NE-gap and phi in per-stage units, i.e. the
/// value-based quantity times (1 - gamma).
RunResult run(const RunConfig& cfg);

/// One seed, no files written.
SeedRun run_seed(const RunConfig& cfg, std::uint64_t seed);

struct LearnerComparison {
  std::string learner;
  double eta = 0.0;
  double auc = 0.0;           // sum of the median curve
  double final_median = 0.0;  // last point of the median curve
  CurveStats curve;
};

struct ComparisonSummary {
  std::string env_name;
  std::string metric;  // "ne_gap" or "l1"
  std::vector<LearnerComparison> learners;
  std::vector<std::string> ordering;  // ascending AUC
  std::filesystem::path summary;
};

/// Runs every config and ranks the learners. All configs must share the
/// environment and seeds. Congestion configs compare the L1 distance to
/// the reference.
ComparisonSummary compare(const std::vector<RunConfig>& cfgs);
ComparisonSummary compare_results(const std::vector<RunConfig>& cfgs,
                                  const std::vector<RunResult>& results);

/// Picks the step size with the lowest final median of the comparison
/// metric. Ties keep the earlier grid entry.
double grid_search_eta(const RunConfig& base, const std::vector<double>& grid);

struct SweepConfig {
  std::vector<double> deltas = {1e-3, 1e-2, 1e-1, 1.0, 10.0};
  LearnerConfig learner;  // npg, eta 0.1
  std::size_t max_iterations = 100000;
  double threshold = 1e-3;
  std::filesystem::path output;
};

struct SweepPoint {
  double delta_star = 0.0;
  std::optional<std::size_t> iterations;  // first k with NE-gap <= threshold
  std::vector<IterationRecord> records;   // trace up to and including that k
};

struct SweepResult {
  std::vector<SweepPoint> points;
  bool non_increasing = false;  // over the deltas in the given order
};

SweepResult sweep_delta(const SweepConfig& cfg);

/// Sequential exact best responses from `start` until no agent changes.
/// Throws NumericError if no fixed point is reached within max_rounds.
PolicyProfile best_response_dynamics(const TabularGame& game, const PolicyProfile& start,
                                     std::size_t max_rounds = 1000);

nlohmann::json profile_to_json(const PolicyProfile& profile);
PolicyProfile profile_from_json(const nlohmann::json& j);

/// Header `k,ne_gap,phi,c_k,delta_k,l1,seed,learner,eta`, shortest
/// round-trip decimals.
std::string format_csv(const std::vector<IterationRecord>& records, std::size_t stride,
                       std::uint64_t seed, std::string_view learner, double eta);

struct CsvRow {
  IterationRecord record;
  std::uint64_t seed = 0;
  std::string learner;
  double eta = 0.0;
};
std::vector<CsvRow> parse_csv(const std::string& text);

/// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

/// Relative paths are resolved against $MPG_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& path);

}  // namespace mpg
