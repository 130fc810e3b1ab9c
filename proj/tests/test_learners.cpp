#include "mpg/environments.hpp"
#include "mpg/learners.hpp"
#include "mpg/metrics.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mpg;

namespace {

double max_diff(const PolicyProfile& a, const PolicyProfile& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.agents(); ++i) m = std::max(m, (a.dists[i] - b.dists[i]).cwiseAbs().maxCoeff());
  return m;
}

TabularGame single_agent(std::vector<double> reward, double gamma = 0.5) {
  return TabularGame(1, {reward.size()}, std::vector<double>(reward.size(), 1.0), {reward}, gamma, {1.0});
}

double kl(const Matrix& p, const Matrix& q) {
  double total = 0.0;
  for (Eigen::Index s = 0; s < p.rows(); ++s)
    for (Eigen::Index a = 0; a < p.cols(); ++a)
      if (p(s, a) > 0.0) total += p(s, a) * std::log(p(s, a) / q(s, a));
  return total;
}

// Same game with the two agents swapped.
TabularGame swap_agents(const TabularGame& game) {
  const std::size_t A0 = game.action_counts()[0];
  const std::size_t A1 = game.action_counts()[1];
  const std::size_t S = game.state_count();
  const std::size_t J = A0 * A1;
  std::vector<double> P(S * J * S);
  std::vector<std::vector<double>> r(2, std::vector<double>(S * J));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a0 = 0; a0 < A0; ++a0) {
      for (std::size_t a1 = 0; a1 < A1; ++a1) {
        const std::size_t from = a0 * A1 + a1;
        const std::size_t to = a1 * A0 + a0;
        for (std::size_t t = 0; t < S; ++t) P[(s * J + to) * S + t] = game.transition(s, from, t);
        r[0][s * J + to] = game.reward(1, s, from);
        r[1][s * J + to] = game.reward(0, s, from);
      }
    }
  }
  return TabularGame(S, {A1, A0}, P, r, game.gamma(), game.rho());
}

PolicyProfile swap_profile(const PolicyProfile& p) {
  PolicyProfile out;
  out.dists = {p.dists[1], p.dists[0]};
  if (p.logits) out.logits = std::vector<Matrix>{(*p.logits)[1], (*p.logits)[0]};
  return out;
}

}  // namespace

TEST_CASE("learner config") {
  CHECK(learner_kind_from_string("npg") == LearnerKind::npg);
  CHECK(to_string(LearnerKind::npg_log_barrier) == "npg_log_barrier");
  CHECK_THROWS_AS(learner_kind_from_string("sgd"), std::domain_error);
  LearnerConfig c;
  c.eta = 0.0;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  c.eta = 0.1;
  c.tau = -1.0;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  c.tau = 0.0;
  CHECK_NOTHROW(c.validate());
  CHECK(c.uses_logits());
  c.kind = LearnerKind::projected_q;
  CHECK_FALSE(c.uses_logits());
}

TEST_CASE("theorem-safe step size") {
  const Environment syn = make_synthetic(3, {3, 4, 5}, 0);
  CHECK(theorem_safe_eta(syn.game, 1.0) == doctest::Approx(1.0 / (2.0 * std::sqrt(3.0))));
  const Environment mpg = make_random_mpg(2, {2, 2}, 2, 0);
  CHECK(theorem_safe_eta(mpg.game, 1.0) == doctest::Approx(0.01 / (2.0 * std::sqrt(2.0))));
  CHECK_THROWS_AS(theorem_safe_eta(mpg.game, 0.0), std::domain_error);
}

TEST_CASE("NPG special cases") {
  SUBCASE("zero advantage leaves the profile unchanged") {
    const TabularGame game = single_agent({0.4, 0.4, 0.4});
    const PolicyProfile p = random_profile(game, 1);
    const PolicyProfile next = npg_step(game, p, evaluate(game, p), 0.7);
    CHECK(max_diff(p, next) <= 1e-15);
  }
  SUBCASE("eta = 0 is the identity for every learner") {
    const Environment env = make_random_mpg(2, {2, 3}, 2, 3);
    const PolicyProfile p = random_profile(env.game, 2);
    const EvaluationBundle b = evaluate(env.game, p);
    CHECK(max_diff(p, npg_step(env.game, p, b, 0.0)) == 0.0);
    CHECK(max_diff(p, pg_softmax_step(env.game, p, b, 0.0)) == 0.0);
    CHECK(max_diff(p, projected_q_step(env.game, p, b, 0.0)) == 0.0);
    CHECK(max_diff(p, regularized_npg_step(env.game, p, b, 0.0, Regularizer::entropy, 0.5)) == 0.0);
  }
  SUBCASE("static closed form") {
    const TabularGame game = single_agent({1.0, 0.0});
    const PolicyProfile p = PolicyProfile::uniform(game, true);
    const PolicyProfile next = npg_step(game, p, evaluate(game, p), 1.0);
    const double e = std::exp(1.0);
    CHECK(next.dists[0](0, 0) == doctest::Approx(e / (e + 1.0)).epsilon(1e-14));
  }
  SUBCASE("Markov exponent is scaled by 1 / (1 - gamma)") {
    const Environment env = make_random_mpg(2, {2, 3}, 2, 5);
    const PolicyProfile p = random_profile(env.game, 4);
    const EvaluationBundle b = evaluate(env.game, p);
    const double eta = 0.05;
    const PolicyProfile next = npg_step(env.game, p, b, eta);
    for (std::size_t i = 0; i < 2; ++i) {
      for (Eigen::Index s = 0; s < 2; ++s) {
        Eigen::RowVectorXd w = p.dists[i].row(s).array() * (eta * b.abar[i].row(s).array() / 0.1).exp();
        w /= w.sum();
        CHECK((next.dists[i].row(s) - w).cwiseAbs().maxCoeff() <= 1e-13);
      }
    }
  }
}

TEST_CASE("softmax PG step matches a finite-difference gradient") {
  const Environment env = make_random_mpg(2, {2, 3}, 3, 7);
  const TabularGame& game = env.game;
  const PolicyProfile p = random_profile(game, 8, 1.0);
  const EvaluationBundle b = evaluate(game, p);
  const double eta = 1e-3;
  const PolicyProfile next = pg_softmax_step(game, p, b, eta);
  const double h = 1e-5;
  for (std::size_t i = 0; i < 2; ++i) {
    const Matrix step = ((*next.logits)[i] - (*p.logits)[i]) / eta;
    const auto reward = oracle::reward_of(game, i);
    for (Eigen::Index s = 0; s < step.rows(); ++s) {
      for (Eigen::Index a = 0; a < step.cols(); ++a) {
        std::vector<Matrix> up = *p.logits, down = *p.logits;
        up[i](s, a) += h;
        down[i](s, a) -= h;
        const double fd = (oracle::value_at_rho(game, oracle::values(game, oracle::softmax_of(up), reward)) -
                           oracle::value_at_rho(game, oracle::values(game, oracle::softmax_of(down), reward))) /
                          (2.0 * h);
        CHECK(std::abs(step(s, a) - fd) <= 1e-6);
      }
    }
  }
  PolicyProfile bare = p;
  bare.logits.reset();
  CHECK_THROWS_AS(pg_softmax_step(game, bare, b, eta), std::domain_error);
}

TEST_CASE("simplex projection") {
  SUBCASE("projected Q step saturates") {
    const TabularGame game = single_agent({1.0, 0.0});
    const PolicyProfile p = PolicyProfile::uniform(game, false);
    const PolicyProfile next = projected_q_step(game, p, evaluate(game, p), 10.0);
    CHECK(next.dists[0](0, 0) == 1.0);
    CHECK(next.dists[0](0, 1) == 0.0);
  }
  SUBCASE("direct example") {
    const std::vector<double> in = {10.5, 0.5};
    std::vector<double> out(2);
    project_to_simplex(in, out);
    CHECK(out == std::vector<double>{1.0, 0.0});
  }
  SUBCASE("agrees with bisection on random inputs") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z(0.0, 2.0);
    for (int t = 0; t < 500; ++t) {
      std::vector<double> in(1 + t % 8);
      for (double& x : in) x = z(rng);
      std::vector<double> out(in.size());
      project_to_simplex(in, out);
      const std::vector<double> ref = oracle::bisect_projection(in);
      double sum = 0.0;
      for (std::size_t a = 0; a < in.size(); ++a) {
        CHECK(std::abs(out[a] - ref[a]) <= 1e-10);
        CHECK(out[a] >= 0.0);
        sum += out[a];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("regularized NPG") {
  const Environment env = make_synthetic(2, {3, 4}, 2);
  const TabularGame& game = env.game;

  SUBCASE("zero weight is plain NPG") {
    const PolicyProfile p = random_profile(game, 1);
    const EvaluationBundle b = evaluate(game, p);
    const PolicyProfile plain = npg_step(game, p, b, 0.2);
    CHECK(max_diff(plain, regularized_npg_step(game, p, b, 0.2, Regularizer::entropy, 0.0)) == 0.0);
    CHECK(max_diff(plain, regularized_npg_step(game, p, b, 0.2, Regularizer::log_barrier, 0.0)) == 0.0);
    CHECK_THROWS_AS(regularized_npg_step(game, p, b, 0.2, Regularizer::entropy, -0.1), std::domain_error);
  }
  SUBCASE("entropy: KL to the regularized optimum shrinks on a bandit") {
    const std::vector<double> r = {0.9, 0.5, 0.1};
    const TabularGame bandit = single_agent(r);
    const double tau = 0.1, eta = 0.5;
    Matrix target(1, 3);
    for (Eigen::Index a = 0; a < 3; ++a) target(0, a) = std::exp(r[static_cast<std::size_t>(a)] / tau);
    target /= target.sum();
    PolicyProfile p = PolicyProfile::uniform(bandit, true);
    double prev = kl(target, p.dists[0]);
    for (int k = 0; k < 400; ++k) {
      p = regularized_npg_step(bandit, p, evaluate(bandit, p), eta, Regularizer::entropy, tau);
      const double now = kl(target, p.dists[0]);
      CHECK(now <= prev + 1e-15);
      prev = now;
    }
    CHECK(prev < 1e-10);
  }
  SUBCASE("entropy: weight too large for the step") {
    const PolicyProfile p = random_profile(game, 1);
    CHECK_THROWS_AS(regularized_npg_step(game, p, evaluate(game, p), 2.0, Regularizer::entropy, 1.0),
                    std::domain_error);
  }
  SUBCASE("log-barrier is undefined on the boundary") {
    PolicyProfile p = PolicyProfile::uniform(game, false);
    p.dists[0] << 0.5, 0.5, 0.0;
    CHECK_THROWS_AS(regularized_npg_step(game, p, evaluate(game, p), 0.1, Regularizer::log_barrier, 0.01),
                    NumericError);
  }
  SUBCASE("log-barrier converges to a gap of order lambda") {
    const double lambda = 1e-3;
    PolicyProfile p = PolicyProfile::uniform(game, true);
    for (int k = 0; k < 3000; ++k) {
      p = regularized_npg_step(game, p, evaluate(game, p), 0.2, Regularizer::log_barrier, lambda);
    }
    const double gap = ne_gap(game, p).value;
    CHECK(gap <= 10.0 * lambda * (3 + 4));
    CHECK(gap > 0.0);
  }
}

TEST_CASE("multiplicative updates preserve the support") {
  const Environment env = make_random_mpg(2, {3, 3}, 2, 4);
  PolicyProfile p = random_profile(env.game, 5);
  p.logits.reset();
  p.dists[0].row(1) << 0.0, 0.4, 0.6;
  p.dists[1].row(0) << 0.3, 0.0, 0.7;
  for (int k = 0; k < 20; ++k) {
    p = npg_step(env.game, p, evaluate(env.game, p), 0.05);
    CHECK(p.dists[0](1, 0) == 0.0);
    CHECK(p.dists[1](0, 1) == 0.0);
  }
  const PolicyProfile e = regularized_npg_step(env.game, p, evaluate(env.game, p), 0.05, Regularizer::entropy, 0.1);
  CHECK(e.dists[0](1, 0) == 0.0);
  CHECK_NOTHROW(e.validate(env.game));
}

TEST_CASE("updates commute with relabeling the agents") {
  const Environment env = make_random_mpg(2, {2, 3}, 3, 10);
  const TabularGame swapped = swap_agents(env.game);
  const PolicyProfile p = random_profile(env.game, 11, 1.0);
  const PolicyProfile q = swap_profile(p);
  const EvaluationBundle bp = evaluate(env.game, p);
  const EvaluationBundle bq = evaluate(swapped, q);
  for (LearnerKind kind : {LearnerKind::npg, LearnerKind::pg_softmax, LearnerKind::projected_q,
                           LearnerKind::npg_entropy, LearnerKind::npg_log_barrier}) {
    LearnerConfig cfg;
    cfg.kind = kind;
    cfg.eta = 0.01;
    cfg.tau = 0.5;
    cfg.lambda = 0.01;
    const PolicyProfile a = swap_profile(learner_step(cfg, env.game, p, bp));
    const PolicyProfile b = learner_step(cfg, swapped, q, bq);
    CHECK_MESSAGE(max_diff(a, b) <= 1e-12, to_string(kind));
  }
}

TEST_CASE("safe-step NPG ascends the potential") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Environment env = make_random_mpg(2 + seed % 2, seed % 2 ? std::vector<std::size_t>{2, 2, 2}
                                                                   : std::vector<std::size_t>{2, 3},
                                            2 + seed % 2, seed);
    const double eta = theorem_safe_eta(env.game, env.potential.phi_max());
    PolicyProfile p = random_profile(env.game, seed + 100);
    double phi = *evaluate(env.game, p, &env.potential).phi_value;
    for (int k = 0; k < 200; ++k) {
      const EvaluationBundle b = evaluate(env.game, p, &env.potential);
      p = npg_step(env.game, p, b, eta);
      const double next = *evaluate(env.game, p, &env.potential).phi_value;
      CHECK(next >= phi - 1e-12);
      phi = next;
    }
  }
}

TEST_CASE("mismatched bundles are rejected") {
  const Environment a = make_random_mpg(2, {2, 3}, 2, 0);
  const Environment b = make_random_mpg(2, {3, 3}, 2, 0);
  const PolicyProfile p = random_profile(a.game, 0);
  CHECK_THROWS_AS(npg_step(a.game, p, evaluate(b.game, random_profile(b.game, 0)), 0.1), std::domain_error);
}
