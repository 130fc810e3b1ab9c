#pragma once

// Equilibrium metrics and convergence diagnostics: NE-gap via exact best
// responses, the argmax-mass c^k and suboptimality gap delta^k, the tilted
// improvement f^k(alpha), the ergodic convergence bounds, and L1 distances.

#include "mpg/game.hpp"
#include "mpg/oracle.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mpg {

inline constexpr double kTieTol = 1e-9;

struct BestResponse {
  std::vector<std::size_t> actions;  // deterministic action per state
  Vector values;                     // V_i^{BR, pi_-i}(s)
  double value = 0.0;                // at rho
  std::size_t iterations = 0;
};

/// Optimal deterministic policy of an MDP by policy iteration with exact
/// evaluation. Ties within `tol` resolve to the lowest action index.
BestResponse solve_mdp(const MarginalMdp& mdp, double gamma, std::span<const double> rho,
                       double tol = 1e-10);

BestResponse best_response(const TabularGame& game, const PolicyProfile& profile,
                           std::size_t agent, double tol = 1e-10);

struct NeGap {
  double value = 0.0;
  std::vector<double> per_agent;
};

/// max_i [max_{pi'_i} V_i^{pi'_i, pi_-i}(rho) - V_i^pi(rho)].
NeGap ne_gap(const TabularGame& game, const PolicyProfile& profile);

struct GapDiagnostics {
  double c_k = 1.0;
  double delta_k = 0.0;
  bool delta_infinite = false;  // every (i, s) had all actions tied
};

/// Per (i, s): the argmax set {a : Abar_i(s,a) >= max Abar_i(s,.) - tie_tol},
/// its probability mass (c) and the margin to the best action outside it
/// (delta). Both are minimized over (i, s); (i, s) with an empty complement
/// are skipped for delta.
GapDiagnostics gap_diagnostics(const PolicyProfile& profile, const EvaluationBundle& bundle,
                               double tie_tol = kTieTol);

/// f(alpha) = sum_i <pi_{i,alpha}(.|s) - pi_i(.|s), Abar_i(s,.)> with
/// pi_{i,alpha} proportional to pi_i exp(alpha Abar_i / (1 - gamma)).
/// Passing no state selects the single-state form with exponent alpha rbar_i.
double f_alpha(const TabularGame& game, const PolicyProfile& profile,
               const EvaluationBundle& bundle, std::optional<std::size_t> state, double alpha);

/// lim_{alpha -> inf} f(alpha) = sum_i (max over supp(pi_i) of Abar_i - <pi_i, Abar_i>).
double f_alpha_limit(const PolicyProfile& profile, const EvaluationBundle& bundle,
                     std::optional<std::size_t> state);

struct IterationRecord {
  std::size_t k = 0;
  double ne_gap = 0.0;
  double phi = 0.0;
  double c_k = 1.0;
  double delta_k = 0.0;  // +inf when every argmax set was the full action set
  std::optional<double> l1_to_ref;
  std::optional<std::int64_t> wall_ns;

  /// Throws std::domain_error if ne_gap < -1e-8 or c_k outside (0, 1].
  void validate() const;
};

enum class BoundKind { static_game, markov };

struct BoundParams {
  std::size_t n = 1;
  double phi_max = 1.0;
  double gamma = 0.5;
};

struct BoundReport {
  BoundKind kind = BoundKind::markov;
  double lhs = 0.0;  // (1/K) sum_k NE-gap(pi^k)
  double rhs = 0.0;
  std::size_t K = 0;
  BoundParams params;
  double c = 0.0;
  double delta_K = 0.0;
  double m_hat = 1.0;
  bool applicable = false;
  bool satisfied = false;
  // Run-level estimates of the asymptotic gap and the variant of the bound
  // that uses it (Markov kind only).
  std::optional<double> delta_star_hat;
  std::optional<std::size_t> k_prime_hat;
  std::optional<double> rhs_asymptotic;
};

/// Static:  (2 phi_max / K) (1 + 2 sqrt(n) / (c delta_K))
/// Markov:  (2 M phi_max / (K (1 - gamma))) (1 + 2 sqrt(n) phi_max / (c delta_K (1 - gamma)))
/// with c = min c^k and delta_K = min delta^k over the records. c and M are
/// empirical surrogates for the infimum over all iterations and policies.
BoundReport theorem_bound(std::span<const IterationRecord> records, const BoundParams& params,
                          double m_hat, BoundKind kind);

struct AsymptoticGap {
  double delta_star = 0.0;  // mean delta^k over the final 10% of records
  std::size_t k_prime = 0;  // first k after which delta^k >= delta_star / 2 for the rest of the run
  bool found = false;
};
AsymptoticGap estimate_asymptotic_gap(std::span<const IterationRecord> records);

/// sum_i sum_s sum_a |pi_i(a|s) - ref_i(a|s)|.
double l1_distance(const PolicyProfile& profile, const PolicyProfile& reference);

}  // namespace mpg
