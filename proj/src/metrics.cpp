#include "mpg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mpg {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

Vector evaluate_deterministic(const MarginalMdp& mdp, double gamma,
                              const std::vector<std::size_t>& actions) {
  const std::size_t S = mdp.state_count;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(idx(S), idx(S));
  Vector r(idx(S));
  for (std::size_t s = 0; s < S; ++s) {
    r(idx(s)) = mdp.reward(idx(s), idx(actions[s]));
    for (std::size_t s2 = 0; s2 < S; ++s2) system(idx(s), idx(s2)) -= gamma * mdp.next(s, actions[s], s2);
  }
  Vector v = system.partialPivLu().solve(r);
  if (!v.allFinite()) throw NumericError("best response: non-finite value");
  return v;
}

Vector evaluate_stochastic(const MarginalMdp& mdp, double gamma, const Matrix& policy) {
  const std::size_t S = mdp.state_count;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(idx(S), idx(S));
  Vector r = Vector::Zero(idx(S));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < mdp.action_count; ++a) {
      const double p = policy(idx(s), idx(a));
      if (p == 0.0) continue;
      r(idx(s)) += p * mdp.reward(idx(s), idx(a));
      for (std::size_t s2 = 0; s2 < S; ++s2) system(idx(s), idx(s2)) -= gamma * p * mdp.next(s, a, s2);
    }
  }
  Vector v = system.partialPivLu().solve(r);
  if (!v.allFinite()) throw NumericError("policy value: non-finite value");
  return v;
}

double q_value(const MarginalMdp& mdp, double gamma, const Vector& v, std::size_t s, std::size_t a) {
  double future = 0.0;
  for (std::size_t s2 = 0; s2 < mdp.state_count; ++s2) future += mdp.next(s, a, s2) * v(idx(s2));
  return mdp.reward(idx(s), idx(a)) + gamma * future;
}

double dot_rho(std::span<const double> rho, const Vector& v) {
  double total = 0.0;
  for (std::size_t s = 0; s < rho.size(); ++s) total += rho[s] * v(idx(s));
  return total;
}

void check_state(const PolicyProfile& profile, const EvaluationBundle& bundle,
                 std::optional<std::size_t> state) {
  if (bundle.abar.size() != profile.agents()) throw std::domain_error("f_alpha: bundle does not match profile");
  if (state && *state >= profile.state_count()) throw std::domain_error("f_alpha: state out of range");
}

}  // namespace

BestResponse solve_mdp(const MarginalMdp& mdp, double gamma, std::span<const double> rho, double tol) {
  if (!(tol > 0.0)) throw std::domain_error("solve_mdp: tol must be positive");
  const std::size_t S = mdp.state_count;
  const std::size_t A = mdp.action_count;
  BestResponse br;
  br.actions.assign(S, 0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 1; a < A; ++a) {
      if (mdp.reward(idx(s), idx(a)) > mdp.reward(idx(s), idx(br.actions[s]))) br.actions[s] = a;
    }
  }
  // Each improvement strictly increases the value, so at most |A|^|S| rounds;
  // in practice a handful.
  constexpr std::size_t kMaxRounds = 100'000;
  Vector v;
  bool changed = true;
  while (changed) {
    if (++br.iterations > kMaxRounds) throw NumericError("best response: policy iteration did not stabilize");
    v = evaluate_deterministic(mdp, gamma, br.actions);
    changed = false;
    for (std::size_t s = 0; s < S; ++s) {
      const double current = q_value(mdp, gamma, v, s, br.actions[s]);
      std::size_t best = br.actions[s];
      double best_q = current;
      for (std::size_t a = 0; a < A; ++a) {
        const double q = q_value(mdp, gamma, v, s, a);
        if (q > best_q) {
          best_q = q;
          best = a;
        }
      }
      if (best_q > current + tol * std::max(1.0, std::abs(current))) {
        br.actions[s] = best;
        changed = true;
      }
    }
  }
  // Canonical lowest-index choice among near-optimal actions.
  bool relabeled = false;
  for (std::size_t s = 0; s < S; ++s) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < A; ++a) top = std::max(top, q_value(mdp, gamma, v, s, a));
    for (std::size_t a = 0; a < A; ++a) {
      if (q_value(mdp, gamma, v, s, a) >= top - tol * std::max(1.0, std::abs(top))) {
        relabeled = relabeled || a != br.actions[s];
        br.actions[s] = a;
        break;
      }
    }
  }
  br.values = relabeled ? evaluate_deterministic(mdp, gamma, br.actions) : v;
  br.value = dot_rho(rho, br.values);
  return br;
}

BestResponse best_response(const TabularGame& game, const PolicyProfile& profile,
                           std::size_t agent, double tol) {
  return solve_mdp(marginal_mdp(game, profile, agent), game.gamma(), game.rho(), tol);
}

NeGap ne_gap(const TabularGame& game, const PolicyProfile& profile) {
  const auto mdps = marginal_mdps(game, profile);
  NeGap gap;
  gap.value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < game.agents(); ++i) {
    const BestResponse br = solve_mdp(mdps[i], game.gamma(), game.rho());
    const double current = dot_rho(game.rho(), evaluate_stochastic(mdps[i], game.gamma(), profile.dists[i]));
    gap.per_agent.push_back(br.value - current);
    gap.value = std::max(gap.value, gap.per_agent.back());
  }
  return gap;
}

GapDiagnostics gap_diagnostics(const PolicyProfile& profile, const EvaluationBundle& bundle,
                               double tie_tol) {
  if (tie_tol < 0.0) throw std::domain_error("gap_diagnostics: tie_tol must be >= 0");
  if (bundle.abar.size() != profile.agents()) throw std::domain_error("gap_diagnostics: bundle mismatch");
  GapDiagnostics out;
  out.c_k = std::numeric_limits<double>::infinity();
  out.delta_k = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    const Matrix& adv = bundle.abar[i];
    const Matrix& pi = profile.dists[i];
    for (Index s = 0; s < adv.rows(); ++s) {
      const double top = adv.row(s).maxCoeff();
      double mass = 0.0;
      double runner_up = -std::numeric_limits<double>::infinity();
      for (Index a = 0; a < adv.cols(); ++a) {
        if (adv(s, a) >= top - tie_tol) {
          mass += pi(s, a);
        } else {
          runner_up = std::max(runner_up, adv(s, a));
        }
      }
      out.c_k = std::min(out.c_k, mass);
      if (std::isfinite(runner_up)) out.delta_k = std::min(out.delta_k, top - runner_up);
    }
  }
  out.delta_infinite = std::isinf(out.delta_k);
  return out;
}

double f_alpha(const TabularGame& game, const PolicyProfile& profile,
               const EvaluationBundle& bundle, std::optional<std::size_t> state, double alpha) {
  if (alpha < 0.0) throw std::domain_error("f_alpha: alpha must be >= 0");
  check_state(profile, bundle, state);
  if (!state && !game.is_static()) throw std::domain_error("f_alpha: static form needs a single-state game");
  const Index s = state ? idx(*state) : 0;
  const double scale = state ? alpha / (1.0 - game.gamma()) : alpha;
  double total = 0.0;
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    const auto pi = profile.dists[i].row(s);
    const auto adv = bundle.abar[i].row(s);
    double top = -std::numeric_limits<double>::infinity();
    for (Index a = 0; a < pi.size(); ++a) {
      if (pi(a) > 0.0) top = std::max(top, scale * adv(a));
    }
    double norm = 0.0, weighted = 0.0, base = 0.0;
    for (Index a = 0; a < pi.size(); ++a) {
      base += pi(a) * adv(a);
      if (pi(a) <= 0.0) continue;
      const double w = pi(a) * std::exp(scale * adv(a) - top);
      norm += w;
      weighted += w * adv(a);
    }
    total += weighted / norm - base;
  }
  return total;
}

double f_alpha_limit(const PolicyProfile& profile, const EvaluationBundle& bundle,
                     std::optional<std::size_t> state) {
  check_state(profile, bundle, state);
  const Index s = state ? idx(*state) : 0;
  double total = 0.0;
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    const auto pi = profile.dists[i].row(s);
    const auto adv = bundle.abar[i].row(s);
    double top = -std::numeric_limits<double>::infinity();
    double base = 0.0;
    for (Index a = 0; a < pi.size(); ++a) {
      base += pi(a) * adv(a);
      if (pi(a) > 0.0) top = std::max(top, adv(a));
    }
    total += top - base;
  }
  return total;
}

void IterationRecord::validate() const {
  if (ne_gap < -kDerivedTol) throw std::domain_error("record: negative NE-gap");
  if (!(c_k > 0.0) || c_k > 1.0 + kDerivedTol) throw std::domain_error("record: c_k outside (0, 1]");
}

AsymptoticGap estimate_asymptotic_gap(std::span<const IterationRecord> records) {
  AsymptoticGap out;
  if (records.empty()) return out;
  const std::size_t tail = std::max<std::size_t>(1, records.size() / 10);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = records.size() - tail; j < records.size(); ++j) {
    if (std::isfinite(records[j].delta_k)) {
      sum += records[j].delta_k;
      ++count;
    }
  }
  if (count == 0 || !(sum > 0.0)) return out;
  out.delta_star = sum / static_cast<double>(count);
  out.found = true;
  out.k_prime = records.front().k;
  for (std::size_t j = records.size(); j-- > 0;) {
    if (records[j].delta_k < out.delta_star / 2.0) {
      out.k_prime = j + 1 < records.size() ? records[j + 1].k : records[j].k + 1;
      break;
    }
  }
  return out;
}

BoundReport theorem_bound(std::span<const IterationRecord> records, const BoundParams& params,
                          double m_hat, BoundKind kind) {
  if (records.empty()) throw std::domain_error("theorem_bound: no records");
  BoundReport report;
  report.kind = kind;
  report.params = params;
  report.K = records.size();
  report.m_hat = m_hat;
  double total = 0.0;
  report.c = std::numeric_limits<double>::infinity();
  report.delta_K = std::numeric_limits<double>::infinity();
  for (const IterationRecord& r : records) {
    total += r.ne_gap;
    report.c = std::min(report.c, r.c_k);
    report.delta_K = std::min(report.delta_K, r.delta_k);
  }
  report.lhs = total / static_cast<double>(report.K);

  const double K = static_cast<double>(report.K);
  const double root_n = std::sqrt(static_cast<double>(params.n));
  const double gap = 1.0 - params.gamma;
  report.applicable = std::isfinite(report.delta_K) && report.delta_K > 0.0 && report.c > 0.0 &&
                      std::isfinite(m_hat);
  if (!report.applicable) return report;

  if (kind == BoundKind::static_game) {
    report.rhs = 2.0 * params.phi_max / K * (1.0 + 2.0 * root_n / (report.c * report.delta_K));
  } else {
    report.rhs = 2.0 * m_hat * params.phi_max / (K * gap) *
                 (1.0 + 2.0 * root_n * params.phi_max / (report.c * report.delta_K * gap));
    const AsymptoticGap asym = estimate_asymptotic_gap(records);
    if (asym.found) {
      report.delta_star_hat = asym.delta_star;
      report.k_prime_hat = asym.k_prime;
      report.rhs_asymptotic =
          2.0 * m_hat * params.phi_max / (K * gap) *
          (1.0 + 4.0 * root_n * params.phi_max / (report.c * asym.delta_star * gap) +
           static_cast<double>(asym.k_prime) / (2.0 * m_hat));
    }
  }
  report.satisfied = report.lhs <= report.rhs + 1e-9;
  return report;
}

double l1_distance(const PolicyProfile& profile, const PolicyProfile& reference) {
  if (profile.agents() != reference.agents()) throw std::domain_error("l1_distance: agent count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    const Matrix& a = profile.dists[i];
    const Matrix& b = reference.dists[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::domain_error("l1_distance: shape mismatch");
    total += (a - b).cwiseAbs().sum();
  }
  return total;
}

}  // namespace mpg
