#pragma once

// Game constructors: the synthetic cooperative potential game, the
// safe/distancing congestion game, the 2x2 suboptimality-gap matrix game and
// a random fully cooperative Markov game generator.

#include "mpg/game.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mpg {

/// normalized = (raw - offset) / scale
struct AffineMap {
  double offset = 0.0;
  double scale = 1.0;
  double apply(double raw) const { return (raw - offset) / scale; }
};

struct Environment {
  std::string name;
  TabularGame game;
  PotentialSpec potential;
  AffineMap reward_map;
};

inline constexpr double kStaticGamma = 0.5;

Environment make_synthetic(std::size_t n, const std::vector<std::size_t>& action_counts,
                           std::uint64_t seed, double gamma = kStaticGamma);

struct CongestionConfig {
  std::size_t n = 8;
  std::size_t facilities = 4;
  // Empty means (1, 2, ..., facilities) / facilities.
  std::vector<double> weights_safe;
  // Empty means the safe weights.
  std::vector<double> weights_distancing;
  double distancing_penalty = 2.0;
  double gamma = 0.99;
  double threshold = 0.5;
  // Initial-state distribution over (safe, distancing).
  std::vector<double> rho = {0.5, 0.5};
};

inline constexpr std::size_t kSafe = 0;
inline constexpr std::size_t kDistancing = 1;

/// Two-state congestion game. State transitions depend on the facility-load
/// histogram only:
///   max load > threshold * n          -> distancing
///   max load <= ceil(n / facilities)  -> safe
///   otherwise                         -> stay in the current state
Environment make_congestion(const CongestionConfig& cfg);

/// Common-payoff game [[1, 2], [3 + delta, 3]] / (3 + delta).
Environment make_delta_matrix(double delta_star, double gamma = kStaticGamma);

Environment make_random_mpg(std::size_t n, const std::vector<std::size_t>& action_counts,
                            std::size_t state_count, std::uint64_t seed, double gamma = 0.9);

}  // namespace mpg
