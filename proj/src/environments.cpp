#include "mpg/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <random>
#include <stdexcept>

namespace mpg {

namespace {

std::size_t product_size(const std::vector<std::size_t>& counts) {
  std::size_t total = 1;
  for (std::size_t c : counts) {
    if (c == 0) throw std::domain_error("environment: every agent needs an action");
    if (total > kMaxJointActions / c) throw CapacityError("environment: joint action space too large");
    total *= c;
  }
  return total;
}

std::vector<double> uniform_draws(std::mt19937_64& rng, std::size_t count) {
  std::uniform_real_distribution<double> draw(0.0, 1.0);
  std::vector<double> out(count);
  for (double& v : out) v = draw(rng);
  return out;
}

Environment cooperative(std::string name, std::size_t state_count,
                        std::vector<std::size_t> counts, std::vector<double> transition,
                        std::vector<double> shared, double gamma, std::vector<double> rho) {
  const double phi_max = shared.empty() ? 0.0 : *std::max_element(shared.begin(), shared.end());
  std::vector<std::vector<double>> rewards(counts.size(), shared);
  TabularGame game(state_count, std::move(counts), std::move(transition), std::move(rewards), gamma,
                   std::move(rho));
  return {std::move(name), std::move(game), PotentialSpec(std::move(shared), phi_max), {}};
}

}  // namespace

Environment make_synthetic(std::size_t n, const std::vector<std::size_t>& action_counts,
                           std::uint64_t seed, double gamma) {
  if (n == 0 || action_counts.size() != n) {
    throw std::domain_error("make_synthetic: need one action count per agent");
  }
  const std::size_t joint = product_size(action_counts);
  std::mt19937_64 rng(seed);
  return cooperative("synthetic", 1, action_counts, std::vector<double>(joint, 1.0),
                     uniform_draws(rng, joint), gamma, {1.0});
}

Environment make_random_mpg(std::size_t n, const std::vector<std::size_t>& action_counts,
                            std::size_t state_count, std::uint64_t seed, double gamma) {
  if (n == 0 || action_counts.size() != n) {
    throw std::domain_error("make_random_mpg: need one action count per agent");
  }
  if (state_count == 0) throw std::domain_error("make_random_mpg: need at least one state");
  const std::size_t joint = product_size(action_counts);
  if (state_count * joint > kMaxJointActions) throw CapacityError("make_random_mpg: game too large");
  std::mt19937_64 rng(seed);
  // Shared reward first so a single-state game draws the same tensor as
  // make_synthetic with the same seed.
  std::vector<double> shared = uniform_draws(rng, state_count * joint);
  std::vector<double> transition(state_count * joint * state_count, 1.0);
  if (state_count > 1) {
    transition = uniform_draws(rng, transition.size());
    for (std::size_t row = 0; row < state_count * joint; ++row) {
      const auto first = transition.begin() + static_cast<std::ptrdiff_t>(row * state_count);
      const double total = std::accumulate(first, first + static_cast<std::ptrdiff_t>(state_count), 0.0);
      std::for_each(first, first + static_cast<std::ptrdiff_t>(state_count), [total](double& p) { p /= total; });
    }
  }
  std::vector<double> rho(state_count, 1.0 / static_cast<double>(state_count));
  return cooperative("random_mpg", state_count, action_counts, std::move(transition),
                     std::move(shared), gamma, std::move(rho));
}

Environment make_delta_matrix(double delta_star, double gamma) {
  if (!(delta_star > 0.0) || !std::isfinite(delta_star)) {
    throw std::domain_error("make_delta_matrix: delta_star must be positive");
  }
  const double top = 3.0 + delta_star;
  // Row-major over (row player, column player).
  std::vector<double> shared = {1.0 / top, 2.0 / top, 1.0, 3.0 / top};
  Environment env = cooperative("delta_matrix", 1, {2, 2}, std::vector<double>(4, 1.0),
                                std::move(shared), gamma, {1.0});
  env.reward_map = {0.0, top};
  return env;
}

Environment make_congestion(const CongestionConfig& cfg) {
  const std::size_t n = cfg.n;
  const std::size_t F = cfg.facilities;
  if (n == 0 || F == 0) throw std::domain_error("make_congestion: need agents and facilities");
  const std::vector<std::size_t> counts(n, F);
  const std::size_t J = product_size(counts);

  std::vector<double> w_safe = cfg.weights_safe;
  if (w_safe.empty()) {
    for (std::size_t k = 0; k < F; ++k) w_safe.push_back(static_cast<double>(k + 1) / static_cast<double>(F));
  }
  std::vector<double> w_dist = cfg.weights_distancing.empty() ? w_safe : cfg.weights_distancing;
  for (const auto* w : {&w_safe, &w_dist}) {
    if (w->size() != F) throw std::domain_error("make_congestion: one weight per facility");
    for (std::size_t k = 1; k < F; ++k) {
      if (!((*w)[k - 1] < (*w)[k])) throw std::domain_error("make_congestion: weights must increase");
    }
  }
  if (cfg.distancing_penalty < 0.0) throw std::domain_error("make_congestion: negative penalty");
  if (cfg.rho.size() != 2) throw std::domain_error("make_congestion: rho needs two entries");

  const std::vector<double>* weights[2] = {&w_safe, &w_dist};
  const double penalty[2] = {0.0, cfg.distancing_penalty};
  const std::size_t even_load = (n + F - 1) / F;

  std::vector<std::vector<double>> raw(n, std::vector<double>(2 * J));
  std::vector<double> raw_phi(2 * J);
  std::vector<double> transition(2 * J * 2, 0.0);
  std::vector<std::size_t> load(F);
  const JointActionIndex index(counts);
  index.for_each([&](std::size_t a, std::span<const std::size_t> digits) {
    std::fill(load.begin(), load.end(), 0);
    for (std::size_t k : digits) ++load[k];
    const std::size_t max_load = *std::max_element(load.begin(), load.end());
    for (std::size_t s = 0; s < 2; ++s) {
      const std::vector<double>& w = *weights[s];
      for (std::size_t i = 0; i < n; ++i) {
        raw[i][s * J + a] = w[digits[i]] * static_cast<double>(load[digits[i]] - 1) - penalty[s];
      }
      // Rosenthal potential sum_k w_k * (0 + 1 + ... + (load_k - 1)), shifted
      // by the same per-state penalty as the rewards.
      double phi = -penalty[s];
      for (std::size_t k = 0; k < F; ++k) {
        if (load[k] > 0) phi += w[k] * static_cast<double>(load[k] * (load[k] - 1)) / 2.0;
      }
      raw_phi[s * J + a] = phi;

      std::size_t next = s;
      if (static_cast<double>(max_load) > cfg.threshold * static_cast<double>(n)) {
        next = kDistancing;
      } else if (max_load <= even_load) {
        next = kSafe;
      }
      transition[(s * J + a) * 2 + next] = 1.0;
    }
  });

  double lo = raw[0][0], hi = raw[0][0];
  for (const auto& r : raw) {
    const auto [mn, mx] = std::minmax_element(r.begin(), r.end());
    lo = std::min(lo, *mn);
    hi = std::max(hi, *mx);
  }
  if (!(hi > lo)) throw std::domain_error("make_congestion: degenerate reward range");
  const AffineMap map{lo, hi - lo};
  for (auto& r : raw) {
    for (double& v : r) v = std::clamp(map.apply(v), 0.0, 1.0);
  }
  const double phi_lo = *std::min_element(raw_phi.begin(), raw_phi.end());
  double phi_max = 0.0;
  for (double& v : raw_phi) {
    v = (v - phi_lo) / map.scale;
    phi_max = std::max(phi_max, v);
  }

  TabularGame game(2, counts, std::move(transition), std::move(raw), cfg.gamma, cfg.rho);
  return {"congestion", std::move(game), PotentialSpec(std::move(raw_phi), phi_max), map};
}

}  // namespace mpg
