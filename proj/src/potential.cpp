#include "mpg/potential.hpp"

#include "mpg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mpg {

double unilateral_reward_violation(const TabularGame& game, const PotentialSpec& spec) {
  spec.check_compatible(game);
  const std::size_t J = game.joint_count();
  const auto& index = game.index();
  double worst = 0.0;
  for (std::size_t s = 0; s < game.state_count(); ++s) {
    for (std::size_t a = 0; a < J; ++a) {
      for (std::size_t i = 0; i < game.agents(); ++i) {
        const std::size_t own = index.component(a, i);
        for (std::size_t alt = own + 1; alt < game.action_counts()[i]; ++alt) {
          const std::size_t b = index.with_component(a, i, alt);
          const double dr = game.reward(i, s, a) - game.reward(i, s, b);
          const double dphi = spec(s, a, J) - spec(s, b, J);
          worst = std::max(worst, std::abs(dr - dphi));
        }
      }
    }
  }
  return worst;
}

PotentialReport verify_potential(const TabularGame& game, const PotentialSpec& spec,
                                 std::size_t trials, std::uint64_t seed) {
  spec.check_compatible(game);
  PotentialReport report;
  report.trials = trials;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.1, 5.0);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t agent = std::uniform_int_distribution<std::size_t>(0, game.agents() - 1)(rng);
    const PolicyProfile base = random_profile(game, rng(), scale(rng));
    PolicyProfile deviated = base;
    const PolicyProfile other = random_profile(game, rng(), scale(rng));
    deviated.dists[agent] = other.dists[agent];
    deviated.logits.reset();

    const auto& reward = game.reward_tensor(agent);
    const Vector dv = evaluate_reward(game, deviated, reward) - evaluate_reward(game, base, reward);
    const Vector dphi =
        evaluate_reward(game, deviated, spec.values()) - evaluate_reward(game, base, spec.values());
    report.sampled_violation = std::max(report.sampled_violation, (dv - dphi).cwiseAbs().maxCoeff());
  }
  report.max_violation = report.sampled_violation;
  if (game.is_static()) {
    report.is_static_check = true;
    report.reward_violation = unilateral_reward_violation(game, spec);
    report.max_violation = std::max(report.max_violation, report.reward_violation);
  }
  return report;
}

}  // namespace mpg
