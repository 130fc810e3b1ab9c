#pragma once

#include "mpg/game.hpp"

#include <cstdint>

namespace mpg {

struct PotentialReport {
  double max_violation = 0.0;
  bool is_static_check = false;     // reward-level identity also checked exhaustively
  double sampled_violation = 0.0;   // from random unilateral policy deviations
  double reward_violation = 0.0;    // per-state reward identity, exhaustive
  std::size_t trials = 0;
};

/// Checks the unilateral-deviation identity
///   V_i^{pi'_i, pi_-i}(s) - V_i^{pi_i, pi_-i}(s) = Phi^{pi'_i, pi_-i}(s) - Phi^{pi_i, pi_-i}(s)
/// at every state for `trials` random (i, pi, pi'_i). Single-state games also
/// get the exhaustive reward-level check.
PotentialReport verify_potential(const TabularGame& game, const PotentialSpec& spec,
                                 std::size_t trials = 100, std::uint64_t seed = 0);

/// max over (s, i, a, a'_i) of
///   |r_i(s, a) - r_i(s, a'_i, a_-i) - (phi(s, a) - phi(s, a'_i, a_-i))|.
/// Zero means every state is a static potential game for phi.
double unilateral_reward_violation(const TabularGame& game, const PotentialSpec& spec);

}  // namespace mpg
