#include "mpg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mpg {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

void check_shapes(const TabularGame& game, const PolicyProfile& profile) {
  if (profile.agents() != game.agents() || profile.state_count() != game.state_count()) {
    throw std::domain_error("profile shape does not match game");
  }
  for (std::size_t i = 0; i < game.agents(); ++i) {
    if (static_cast<std::size_t>(profile.dists[i].cols()) != game.action_counts()[i]) {
      throw std::domain_error("profile action count does not match game");
    }
  }
}

// pi(a|s) for every (s, a), laid out as [s * |A| + a].
std::vector<double> joint_probabilities(const TabularGame& game, const PolicyProfile& profile) {
  const std::size_t joint = game.joint_count();
  std::vector<double> probs(game.state_count() * joint);
  for (std::size_t s = 0; s < game.state_count(); ++s) {
    game.index().for_each([&](std::size_t a, std::span<const std::size_t> digits) {
      double p = 1.0;
      for (std::size_t i = 0; i < digits.size(); ++i) p *= profile.dists[i](idx(s), idx(digits[i]));
      probs[s * joint + a] = p;
    });
  }
  return probs;
}

// Calls f(a, digits, weights) per joint action of state s, where weights[i]
// is pi_-i(a_-i | s). Prefix/suffix products avoid dividing by pi_i.
template <class F>
void for_each_opponent_weight(const TabularGame& game, const PolicyProfile& profile,
                              std::size_t s, F&& f) {
  const std::size_t n = game.agents();
  std::vector<double> prefix(n + 1), suffix(n + 1), weights(n);
  game.index().for_each([&](std::size_t a, std::span<const std::size_t> digits) {
    prefix[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] * profile.dists[i](idx(s), idx(digits[i]));
    suffix[n] = 1.0;
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * profile.dists[i](idx(s), idx(digits[i]));
    for (std::size_t i = 0; i < n; ++i) weights[i] = prefix[i] * suffix[i + 1];
    f(a, digits, std::span<const double>(weights));
  });
}

Matrix induced_from_probs(const TabularGame& game, const std::vector<double>& probs) {
  const std::size_t S = game.state_count();
  const std::size_t J = game.joint_count();
  Matrix p = Matrix::Zero(idx(S), idx(S));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < J; ++a) {
      const double w = probs[s * J + a];
      if (w == 0.0) continue;
      const auto row = game.transition_row(s, a);
      for (std::size_t s2 = 0; s2 < S; ++s2) p(idx(s), idx(s2)) += w * row[s2];
    }
  }
  return p;
}

Vector expected_reward(const TabularGame& game, const std::vector<double>& probs,
                       std::span<const double> reward) {
  const std::size_t S = game.state_count();
  const std::size_t J = game.joint_count();
  Vector r = Vector::Zero(idx(S));
  for (std::size_t s = 0; s < S; ++s) {
    double acc = 0.0;
    for (std::size_t a = 0; a < J; ++a) acc += probs[s * J + a] * reward[s * J + a];
    r(idx(s)) = acc;
  }
  return r;
}

Eigen::PartialPivLU<Eigen::MatrixXd> factor_resolvent(const Matrix& p_pi, double gamma) {
  const Index S = p_pi.rows();
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - gamma * p_pi;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  // (I - gamma P) is strictly diagonally dominant for gamma < 1; a vanishing
  // determinant means the inputs were corrupted upstream.
  if (!std::isfinite(lu.determinant()) || std::abs(lu.determinant()) == 0.0) {
    throw NumericError("policy evaluation: singular resolvent");
  }
  return lu;
}

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("policy evaluation: non-finite ") + what);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over a combined counter.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix induced_transition(const TabularGame& game, const PolicyProfile& profile) {
  check_shapes(game, profile);
  return induced_from_probs(game, joint_probabilities(game, profile));
}

Vector evaluate_reward(const TabularGame& game, const PolicyProfile& profile,
                       std::span<const double> reward) {
  check_shapes(game, profile);
  if (reward.size() != game.state_count() * game.joint_count()) {
    throw std::domain_error("evaluate_reward: reward tensor has wrong size");
  }
  const auto probs = joint_probabilities(game, profile);
  const auto lu = factor_resolvent(induced_from_probs(game, probs), game.gamma());
  Vector v = lu.solve(expected_reward(game, probs, reward));
  require_finite(v, "value");
  return v;
}

EvaluationBundle evaluate(const TabularGame& game, const PolicyProfile& profile,
                          const PotentialSpec* potential) {
  check_shapes(game, profile);
  if (potential != nullptr) potential->check_compatible(game);
  const std::size_t n = game.agents();
  const std::size_t S = game.state_count();
  const std::size_t J = game.joint_count();
  const double gamma = game.gamma();

  const auto probs = joint_probabilities(game, profile);
  const Matrix p_pi = induced_from_probs(game, probs);
  const auto lu = factor_resolvent(p_pi, gamma);

  const std::size_t columns = n + (potential != nullptr ? 1 : 0);
  Eigen::MatrixXd rhs(idx(S), idx(columns));
  for (std::size_t i = 0; i < n; ++i) rhs.col(idx(i)) = expected_reward(game, probs, game.reward_tensor(i));
  if (potential != nullptr) rhs.col(idx(n)) = expected_reward(game, probs, potential->values());
  const Eigen::MatrixXd values = lu.solve(rhs);
  require_finite(values, "value");

  EvaluationBundle out;
  Vector rho(idx(S));
  for (std::size_t s = 0; s < S; ++s) rho(idx(s)) = game.rho()[s];
  for (std::size_t i = 0; i < n; ++i) {
    out.v.push_back(values.col(idx(i)));
    out.v_rho.push_back(rho.dot(out.v.back()));
  }
  if (potential != nullptr) {
    out.phi_state = values.col(idx(n));
    out.phi_value = rho.dot(*out.phi_state);
  }

  // d_rho^T (I - gamma P_pi) = (1 - gamma) rho^T
  const Eigen::MatrixXd adjoint =
      (Eigen::MatrixXd::Identity(idx(S), idx(S)) - gamma * p_pi).transpose();
  out.d_rho = (1.0 - gamma) * adjoint.partialPivLu().solve(rho);
  require_finite(out.d_rho, "visitation");

  // Q_i(s, a) = r_i(s, a) + gamma * sum_s' P(s'|s, a) V_i(s').
  out.q.assign(n, std::vector<double>(S * J));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < J; ++a) {
      const auto row = game.transition_row(s, a);
      for (std::size_t i = 0; i < n; ++i) {
        double future = 0.0;
        for (std::size_t s2 = 0; s2 < S; ++s2) future += row[s2] * values(idx(s2), idx(i));
        out.q[i][s * J + a] = game.reward(i, s, a) + gamma * future;
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) out.qbar.push_back(Matrix::Zero(idx(S), idx(game.action_counts()[i])));
  for (std::size_t s = 0; s < S; ++s) {
    for_each_opponent_weight(game, profile, s, [&](std::size_t a, std::span<const std::size_t> digits,
                                                   std::span<const double> weights) {
      for (std::size_t i = 0; i < n; ++i) {
        out.qbar[i](idx(s), idx(digits[i])) += weights[i] * out.q[i][s * J + a];
      }
    });
  }
  for (std::size_t i = 0; i < n; ++i) {
    Matrix a = out.qbar[i];
    for (std::size_t s = 0; s < S; ++s) a.row(idx(s)).array() -= out.v[i](idx(s));
    out.abar.push_back(std::move(a));
  }
  return out;
}

std::vector<MarginalMdp> marginal_mdps(const TabularGame& game, const PolicyProfile& profile) {
  check_shapes(game, profile);
  const std::size_t n = game.agents();
  const std::size_t S = game.state_count();
  std::vector<MarginalMdp> mdps(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t A = game.action_counts()[i];
    mdps[i].state_count = S;
    mdps[i].action_count = A;
    mdps[i].reward = Matrix::Zero(idx(S), idx(A));
    mdps[i].transition.assign(S * A * S, 0.0);
  }
  for (std::size_t s = 0; s < S; ++s) {
    for_each_opponent_weight(game, profile, s, [&](std::size_t a, std::span<const std::size_t> digits,
                                                   std::span<const double> weights) {
      const auto row = game.transition_row(s, a);
      for (std::size_t i = 0; i < n; ++i) {
        const double w = weights[i];
        if (w == 0.0) continue;
        MarginalMdp& m = mdps[i];
        m.reward(idx(s), idx(digits[i])) += w * game.reward(i, s, a);
        double* next = m.transition.data() + (s * m.action_count + digits[i]) * S;
        for (std::size_t s2 = 0; s2 < S; ++s2) next[s2] += w * row[s2];
      }
    });
  }
  return mdps;
}

MarginalMdp marginal_mdp(const TabularGame& game, const PolicyProfile& profile, std::size_t agent) {
  if (agent >= game.agents()) throw std::domain_error("marginal_mdp: agent out of range");
  return std::move(marginal_mdps(game, profile)[agent]);
}

MarginalizedValues marginalized_values(const TabularGame& game, const PolicyProfile& profile,
                                       std::size_t agent, std::span<const double> reward) {
  if (agent >= game.agents()) throw std::domain_error("marginalized_values: agent out of range");
  const std::size_t S = game.state_count();
  const std::size_t J = game.joint_count();
  MarginalizedValues out;
  out.v = evaluate_reward(game, profile, reward);
  out.qbar = Matrix::Zero(idx(S), idx(game.action_counts()[agent]));
  for (std::size_t s = 0; s < S; ++s) {
    for_each_opponent_weight(game, profile, s, [&](std::size_t a, std::span<const std::size_t> digits,
                                                   std::span<const double> weights) {
      const auto row = game.transition_row(s, a);
      double future = 0.0;
      for (std::size_t s2 = 0; s2 < S; ++s2) future += row[s2] * out.v(idx(s2));
      out.qbar(idx(s), idx(digits[agent])) += weights[agent] * (reward[s * J + a] + game.gamma() * future);
    });
  }
  out.abar = out.qbar;
  for (std::size_t s = 0; s < S; ++s) out.abar.row(idx(s)).array() -= out.v(idx(s));
  return out;
}

Vector marginalized_reward(const TabularGame& game, const PolicyProfile& profile, std::size_t agent) {
  if (!game.is_static()) {
    throw std::domain_error("marginalized_reward: defined for single-state games only");
  }
  if (agent >= game.agents()) throw std::domain_error("marginalized_reward: agent out of range");
  check_shapes(game, profile);
  Vector rbar = Vector::Zero(idx(game.action_counts()[agent]));
  for_each_opponent_weight(game, profile, 0, [&](std::size_t a, std::span<const std::size_t> digits,
                                                 std::span<const double> weights) {
    rbar(idx(digits[agent])) += weights[agent] * game.reward(agent, 0, a);
  });
  return rbar;
}

void accumulate_mismatch(MismatchEstimate& estimate, const Vector& d_rho) {
  for (Index s = 0; s < d_rho.size(); ++s) {
    if (d_rho(s) <= 0.0) {
      estimate.infinite = true;
      estimate.value = std::numeric_limits<double>::infinity();
      return;
    }
    if (!estimate.infinite) estimate.value = std::max(estimate.value, 1.0 / d_rho(s));
  }
}

MismatchEstimate mismatch_coefficient(const TabularGame& game,
                                      std::span<const PolicyProfile> profiles) {
  if (profiles.empty()) throw std::domain_error("mismatch_coefficient: no profiles supplied");
  MismatchEstimate estimate;
  estimate.value = 0.0;
  for (const PolicyProfile& profile : profiles) {
    accumulate_mismatch(estimate, evaluate(game, profile).d_rho);
  }
  return estimate;
}

Vector value_iteration(const TabularGame& game, const PolicyProfile& profile,
                       std::span<const double> reward, double tol, std::size_t max_iterations) {
  check_shapes(game, profile);
  const auto probs = joint_probabilities(game, profile);
  const Matrix p_pi = induced_from_probs(game, probs);
  const Vector r = expected_reward(game, probs, reward);
  Vector v = Vector::Zero(r.size());
  for (std::size_t it = 0; it < max_iterations; ++it) {
    Vector next = r + game.gamma() * p_pi * v;
    const double change = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (change * game.gamma() <= tol * (1.0 - game.gamma())) return v;
  }
  throw NumericError("value_iteration: no convergence");
}

std::size_t default_horizon(double gamma, double eps_tail) {
  return static_cast<std::size_t>(std::ceil(std::log(eps_tail * (1.0 - gamma)) / std::log(gamma)));
}

EvaluationBundle McEstimate::as_bundle() const {
  EvaluationBundle b;
  b.v = v;
  b.v_rho = v_rho;
  b.qbar = qbar;
  b.abar = abar;
  b.d_rho = d_rho;
  return b;
}

McEstimate mc_estimate(const TabularGame& game, const PolicyProfile& profile,
                       std::size_t episodes, std::size_t horizon, std::uint64_t seed) {
  check_shapes(game, profile);
  if (episodes == 0 || horizon == 0) throw std::domain_error("mc_estimate: need episodes, horizon >= 1");
  const std::size_t n = game.agents();
  const std::size_t S = game.state_count();
  const double gamma = game.gamma();

  auto sample = [](std::mt19937_64& rng, auto&& weight, std::size_t count) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t k = 0; k < count; ++k) {
      const double w = weight(k);
      if (w <= 0.0) continue;
      last = k;
      acc += w;
      if (u < acc) return k;
    }
    return last;
  };

  McEstimate est;
  est.episodes = episodes;
  est.horizon = horizon;
  std::vector<double> ret_sum(n, 0.0), ret_sq(n, 0.0);
  Vector d_sum = Vector::Zero(idx(S)), d_sq = Vector::Zero(idx(S));
  std::vector<Vector> v_sum(n, Vector::Zero(idx(S)));
  Vector visits = Vector::Zero(idx(S));
  std::vector<Matrix> q_sum, q_count;
  for (std::size_t i = 0; i < n; ++i) {
    q_sum.push_back(Matrix::Zero(idx(S), idx(game.action_counts()[i])));
    q_count.push_back(Matrix::Zero(idx(S), idx(game.action_counts()[i])));
  }

  std::vector<std::size_t> states(horizon);
  std::vector<std::vector<std::size_t>> actions(horizon, std::vector<std::size_t>(n));
  std::vector<std::vector<double>> rewards(horizon, std::vector<double>(n));
  std::vector<double> to_go(n);
  Vector d_ep(idx(S));

  for (std::size_t e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(derive_seed(seed, e));
    std::size_t s = sample(rng, [&](std::size_t k) { return game.rho()[k]; }, S);
    for (std::size_t t = 0; t < horizon; ++t) {
      states[t] = s;
      for (std::size_t i = 0; i < n; ++i) {
        actions[t][i] = sample(rng, [&](std::size_t k) { return profile.dists[i](idx(s), idx(k)); },
                               game.action_counts()[i]);
      }
      const std::size_t joint = game.index().encode(actions[t]);
      for (std::size_t i = 0; i < n; ++i) rewards[t][i] = game.reward(i, s, joint);
      const auto row = game.transition_row(s, joint);
      s = sample(rng, [&](std::size_t k) { return row[k]; }, S);
    }

    d_ep.setZero();
    double discount = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      d_ep(idx(states[t])) += (1.0 - gamma) * discount;
      discount *= gamma;
    }
    d_sum += d_ep;
    d_sq += d_ep.cwiseProduct(d_ep);

    std::fill(to_go.begin(), to_go.end(), 0.0);
    for (std::size_t t = horizon; t-- > 0;) {
      const std::size_t st = states[t];
      visits(idx(st)) += 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        to_go[i] = rewards[t][i] + gamma * to_go[i];
        v_sum[i](idx(st)) += to_go[i];
        q_sum[i](idx(st), idx(actions[t][i])) += to_go[i];
        q_count[i](idx(st), idx(actions[t][i])) += 1.0;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      ret_sum[i] += to_go[i];
      ret_sq[i] += to_go[i] * to_go[i];
    }
  }

  const double E = static_cast<double>(episodes);
  auto stderr_of = [E](double sum, double sq) {
    if (E < 2.0) return 0.0;
    const double mean = sum / E;
    const double var = std::max(0.0, (sq - E * mean * mean) / (E - 1.0));
    return std::sqrt(var / E);
  };
  for (std::size_t i = 0; i < n; ++i) {
    est.v_rho.push_back(ret_sum[i] / E);
    est.v_rho_stderr.push_back(stderr_of(ret_sum[i], ret_sq[i]));
    Vector v = Vector::Zero(idx(S));
    for (std::size_t st = 0; st < S; ++st) {
      if (visits(idx(st)) > 0.0) v(idx(st)) = v_sum[i](idx(st)) / visits(idx(st));
    }
    Matrix qbar = Matrix::Zero(q_sum[i].rows(), q_sum[i].cols());
    Matrix abar = qbar;
    for (Index st = 0; st < qbar.rows(); ++st) {
      for (Index a = 0; a < qbar.cols(); ++a) {
        if (q_count[i](st, a) > 0.0) {
          qbar(st, a) = q_sum[i](st, a) / q_count[i](st, a);
          abar(st, a) = qbar(st, a) - v(st);
        }
      }
    }
    est.v.push_back(std::move(v));
    est.qbar.push_back(std::move(qbar));
    est.abar.push_back(std::move(abar));
  }
  est.d_rho = d_sum / E;
  est.d_rho_stderr = Vector::Zero(idx(S));
  for (std::size_t st = 0; st < S; ++st) {
    est.d_rho_stderr(idx(st)) = stderr_of(d_sum(idx(st)), d_sq(idx(st)));
  }
  return est;
}

}  // namespace mpg
