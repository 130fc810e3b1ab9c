#pragma once

// Exact policy evaluation for product policies on tabular games, plus a
// Monte Carlo estimator used as an independent cross-check and for
// sampling-based learner runs.

#include "mpg/game.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mpg {

/// Everything a learner or metric needs about one policy profile.
struct EvaluationBundle {
  std::vector<Vector> v;                  // V_i(s)
  std::vector<double> v_rho;              // V_i(rho)
  std::vector<std::vector<double>> q;     // Q_i(s, a) at [s * |A| + a]; empty for estimates
  std::vector<Matrix> qbar;               // marginalized Q_i(s, a_i)
  std::vector<Matrix> abar;               // marginalized advantage A_i(s, a_i)
  Vector d_rho;                           // discounted visitation d_rho(s)
  std::optional<Vector> phi_state;        // Phi(s), when a potential is attached
  std::optional<double> phi_value;        // Phi(rho)
};

/// Agent i's view of the game with the other agents' policies folded in:
/// rbar(s, a_i) and Pbar(s' | s, a_i).
struct MarginalMdp {
  std::size_t state_count = 0;
  std::size_t action_count = 0;
  Matrix reward;                  // |S| x |A_i|
  std::vector<double> transition; // [(s * |A_i| + a_i) * |S| + s']

  double next(std::size_t s, std::size_t a, std::size_t s2) const {
    return transition[(s * action_count + a) * state_count + s2];
  }
};

Matrix induced_transition(const TabularGame& game, const PolicyProfile& profile);

EvaluationBundle evaluate(const TabularGame& game, const PolicyProfile& profile,
                          const PotentialSpec* potential = nullptr);

/// Exact V(s) of an arbitrary per-(state, joint action) reward tensor under
/// the profile; used for potentials and the h_i = r_i - phi decomposition.
Vector evaluate_reward(const TabularGame& game, const PolicyProfile& profile,
                       std::span<const double> reward);

/// Marginal MDPs for every agent in one pass over the joint-action space.
std::vector<MarginalMdp> marginal_mdps(const TabularGame& game, const PolicyProfile& profile);
MarginalMdp marginal_mdp(const TabularGame& game, const PolicyProfile& profile, std::size_t agent);

/// Marginalized Q and advantage of an arbitrary reward tensor for one agent.
struct MarginalizedValues {
  Matrix qbar;
  Matrix abar;
  Vector v;
};
MarginalizedValues marginalized_values(const TabularGame& game, const PolicyProfile& profile,
                                       std::size_t agent, std::span<const double> reward);

/// rbar_i(a_i) = E_{a_-i ~ pi_-i}[r_i(a_i, a_-i)] for a single-state game.
Vector marginalized_reward(const TabularGame& game, const PolicyProfile& profile,
                           std::size_t agent);

/// Empirical distribution-mismatch coefficient: max over the supplied
/// profiles of max_s 1 / d_rho(s). This is a lower estimate of the supremum
/// over all policies.
struct MismatchEstimate {
  double value = 1.0;
  bool infinite = false;  // some d_rho(s) == 0: exploration assumption violated
};
MismatchEstimate mismatch_coefficient(const TabularGame& game,
                                      std::span<const PolicyProfile> profiles);
void accumulate_mismatch(MismatchEstimate& estimate, const Vector& d_rho);

/// Iterative policy evaluation, kept as a cross-check of the linear solve.
Vector value_iteration(const TabularGame& game, const PolicyProfile& profile,
                       std::span<const double> reward, double tol = 1e-12,
                       std::size_t max_iterations = 1'000'000);

/// Truncation horizon ceil(log(eps_tail * (1 - gamma)) / log(gamma)).
std::size_t default_horizon(double gamma, double eps_tail = 1e-4);

struct McEstimate {
  std::size_t episodes = 0;
  std::size_t horizon = 0;
  std::vector<double> v_rho;
  std::vector<double> v_rho_stderr;
  std::vector<Vector> v;       // every-visit averages; 0 for unvisited states
  std::vector<Matrix> qbar;    // every-visit averages per (s, a_i)
  std::vector<Matrix> abar;
  Vector d_rho;
  Vector d_rho_stderr;

  /// Approximate bundle usable by the learners (q left empty).
  EvaluationBundle as_bundle() const;
};

/// Discounted truncated rollouts. Episode e draws from its own generator
/// seeded by (seed, e), so results depend only on (seed, episodes, horizon).
McEstimate mc_estimate(const TabularGame& game, const PolicyProfile& profile,
                       std::size_t episodes, std::size_t horizon, std::uint64_t seed);

/// Counter-based seed derivation shared by the estimator and the harness.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mpg
