#include "mpg/environments.hpp"
#include "mpg/learners.hpp"
#include "mpg/metrics.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace mpg;

namespace {

struct Trace {
  std::vector<IterationRecord> records;
  std::vector<double> phi;  // length K + 1
  MismatchEstimate mismatch;
};

// Plain NPG loop; static games record gaps per stage like the harness does.
Trace npg_trace(const Environment& env, double eta, std::size_t K, std::uint64_t seed) {
  const TabularGame& game = env.game;
  const double unit = game.is_static() ? 1.0 - game.gamma() : 1.0;
  Trace t;
  PolicyProfile p = random_profile(game, seed);
  for (std::size_t k = 0; k <= K; ++k) {
    const EvaluationBundle b = evaluate(game, p, &env.potential);
    t.phi.push_back(*b.phi_value);
    accumulate_mismatch(t.mismatch, b.d_rho);
    if (k == K) break;
    IterationRecord r;
    r.k = k;
    r.ne_gap = ne_gap(game, p).value * unit;
    r.phi = *b.phi_value * unit;
    const GapDiagnostics g = gap_diagnostics(p, b);
    r.c_k = g.c_k;
    r.delta_k = g.delta_infinite ? std::numeric_limits<double>::infinity() : g.delta_k;
    t.records.push_back(r);
    p = npg_step(game, p, b, eta);
  }
  return t;
}

EvaluationBundle bundle_with_abar(std::vector<Matrix> abar) {
  EvaluationBundle b;
  b.qbar = abar;
  b.abar = std::move(abar);
  return b;
}

PolicyProfile profile_of(std::vector<Matrix> dists) {
  PolicyProfile p;
  p.dists = std::move(dists);
  return p;
}

Matrix row(std::initializer_list<double> xs) {
  Matrix m(1, static_cast<Eigen::Index>(xs.size()));
  Eigen::Index a = 0;
  for (double x : xs) m(0, a++) = x;
  return m;
}

}  // namespace

TEST_CASE("best response matches exhaustive enumeration") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Environment env = make_random_mpg(2 + seed % 2, seed % 2 ? std::vector<std::size_t>{2, 3, 2}
                                                                   : std::vector<std::size_t>{3, 2},
                                            1 + seed % 3, seed);
    const PolicyProfile p = random_profile(env.game, seed + 50);
    for (std::size_t i = 0; i < env.game.agents(); ++i) {
      const BestResponse br = best_response(env.game, p, i);
      const oracle::Exhaustive ex = oracle::exhaustive_best_response(env.game, p, i);
      CHECK(br.value == doctest::Approx(ex.value).epsilon(1e-10));
      const double achieved = oracle::value_at_rho(
          env.game, oracle::values(env.game, oracle::with_deterministic(p, i, br.actions), oracle::reward_of(env.game, i)));
      CHECK(achieved == doctest::Approx(ex.value).epsilon(1e-10));
    }
    CHECK(ne_gap(env.game, p).value == doctest::Approx(oracle::ne_gap(env.game, p)).epsilon(1e-10));
  }
}

TEST_CASE("static best response is the argmax of the marginalized reward") {
  const Environment env = make_synthetic(3, {3, 4, 5}, 6);
  const PolicyProfile p = random_profile(env.game, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    const Vector r = marginalized_reward(env.game, p, i);
    Eigen::Index best = 0;
    r.maxCoeff(&best);
    const BestResponse br = best_response(env.game, p, i);
    CHECK(br.actions.at(0) == static_cast<std::size_t>(best));
    CHECK(br.value == doctest::Approx(r(best) / (1.0 - env.game.gamma())).epsilon(1e-12));
  }
}

TEST_CASE("single-action agents have zero gap") {
  const TabularGame game(1, {1, 2}, {1.0, 1.0}, {{0.3, 0.8}, {0.3, 0.8}}, 0.5, {1.0});
  const PolicyProfile p = PolicyProfile::uniform(game, false);
  const NeGap g = ne_gap(game, p);
  CHECK(g.per_agent[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(g.per_agent[1] > 0.0);
  CHECK(best_response(game, p, 0).actions == std::vector<std::size_t>{0});
}

TEST_CASE("NE-gap on the matrix game") {
  const Environment env = make_delta_matrix(1.0);
  SUBCASE("pure equilibrium at (row 2, column 1)") {
    PolicyProfile p = PolicyProfile::uniform(env.game, false);
    p.dists[0] << 0.0, 1.0;
    p.dists[1] << 1.0, 0.0;
    CHECK(ne_gap(env.game, p).value <= 1e-12);
  }
  SUBCASE("uniform profile per-agent gaps") {
    const PolicyProfile p = PolicyProfile::uniform(env.game, false);
    const NeGap g = ne_gap(env.game, p);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto counts = oracle::counts_of(env.game);
      Eigen::Vector2d rbar = Eigen::Vector2d::Zero();
      for (std::size_t j = 0; j < 4; ++j) {
        const auto d = oracle::digits_of(j, counts);
        rbar(static_cast<Eigen::Index>(d[i])) += oracle::product_prob(p, 0, d, i) * env.game.reward(i, 0, j);
      }
      const double per_stage = rbar.maxCoeff() - 0.5 * rbar.sum();
      CHECK(g.per_agent[i] * (1.0 - env.game.gamma()) == doctest::Approx(per_stage).epsilon(1e-12));
    }
  }
  SUBCASE("zero advantage means zero gap") {
    const TabularGame flat(1, {2, 2}, std::vector<double>(4, 1.0), {std::vector<double>(4, 0.3), std::vector<double>(4, 0.3)},
                           0.5, {1.0});
    CHECK(ne_gap(flat, random_profile(flat, 3)).value <= 1e-14);
  }
}

TEST_CASE("gap diagnostics") {
  SUBCASE("direct read-off") {
    const GapDiagnostics g = gap_diagnostics(profile_of({row({0.2, 0.3, 0.5})}), bundle_with_abar({row({0.9, 0.7, 0.1})}));
    CHECK(g.c_k == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(g.delta_k == doctest::Approx(0.2).epsilon(1e-14));
    CHECK_FALSE(g.delta_infinite);
  }
  SUBCASE("near ties join the argmax set") {
    const GapDiagnostics g =
        gap_diagnostics(profile_of({row({0.2, 0.3, 0.5})}), bundle_with_abar({row({0.9, 0.9 - 1e-11, 0.1})}));
    CHECK(g.c_k == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.delta_k == doctest::Approx(0.8).epsilon(1e-10));
  }
  SUBCASE("fully tied rows count toward c but not delta") {
    Matrix pi(2, 2), ab(2, 2);
    pi << 0.4, 0.6, 0.7, 0.3;
    ab << 0.1, 0.1, 0.5, 0.2;
    const GapDiagnostics g = gap_diagnostics(profile_of({pi}), bundle_with_abar({ab}));
    CHECK(g.c_k == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(g.delta_k == doctest::Approx(0.3).epsilon(1e-14));
  }
  SUBCASE("everything tied") {
    const GapDiagnostics g = gap_diagnostics(profile_of({row({0.5, 0.5})}), bundle_with_abar({row({0.0, 0.0})}));
    CHECK(g.delta_infinite);
    CHECK(g.c_k == 1.0);
  }
  SUBCASE("relabeling actions does not change c or delta") {
    const Environment env = make_random_mpg(2, {3, 4}, 3, 2);
    const PolicyProfile p = random_profile(env.game, 3);
    const EvaluationBundle b = evaluate(env.game, p);
    std::vector<Eigen::Index> perm = {2, 0, 3, 1};
    PolicyProfile q = p;
    q.logits.reset();
    EvaluationBundle c = b;
    for (Eigen::Index a = 0; a < 4; ++a) {
      q.dists[1].col(a) = p.dists[1].col(perm[static_cast<std::size_t>(a)]);
      c.abar[1].col(a) = b.abar[1].col(perm[static_cast<std::size_t>(a)]);
    }
    const GapDiagnostics g0 = gap_diagnostics(p, b);
    const GapDiagnostics g1 = gap_diagnostics(q, c);
    CHECK(g0.c_k == g1.c_k);
    CHECK(g0.delta_k == g1.delta_k);
  }
}

TEST_CASE("tilted improvement f(alpha)") {
  const Environment env = make_random_mpg(3, {2, 3, 2}, 3, 4);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PolicyProfile p = random_profile(env.game, seed);
    const EvaluationBundle b = evaluate(env.game, p);
    const GapDiagnostics g = gap_diagnostics(p, b);
    const double scale = 1.0 / (1.0 - env.game.gamma());
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(std::abs(f_alpha(env.game, p, b, s, 0.0)) <= 1e-14);
      const double limit = f_alpha_limit(p, b, s);
      double expected = 0.0;
      for (std::size_t i = 0; i < 3; ++i) expected += b.abar[i].row(static_cast<Eigen::Index>(s)).maxCoeff();
      CHECK(limit == doctest::Approx(expected).epsilon(1e-12));
      CHECK(std::abs(f_alpha(env.game, p, b, s, 1e4 / g.delta_k) - limit) <= 1e-6);

      for (int t = 0; t < 50; ++t) {
        const double alpha = u(rng);
        const double factor = 1.0 - 1.0 / (g.c_k * (std::exp(alpha * g.delta_k * scale) - 1.0) + 1.0);
        CHECK(f_alpha(env.game, p, b, s, alpha) >= limit * factor - 1e-9);
      }
      double prev = 0.0;
      for (double alpha = 0.0; alpha <= 5.0; alpha += 0.05) {
        const double f = f_alpha(env.game, p, b, s, alpha);
        CHECK(f >= prev - 1e-9);
        prev = f;
      }
    }
  }
  SUBCASE("static form") {
    const Environment syn = make_synthetic(2, {3, 4}, 1);
    const PolicyProfile p = random_profile(syn.game, 1);
    const EvaluationBundle b = evaluate(syn.game, p);
    const GapDiagnostics g = gap_diagnostics(p, b);
    const double limit = f_alpha_limit(p, b, std::nullopt);
    for (int t = 0; t < 50; ++t) {
      const double alpha = u(rng);
      const double factor = 1.0 - 1.0 / (g.c_k * (std::exp(alpha * g.delta_k) - 1.0) + 1.0);
      CHECK(f_alpha(syn.game, p, b, std::nullopt, alpha) >= limit * factor - 1e-9);
    }
  }
}

TEST_CASE("theorem bound") {
  SUBCASE("single record with zero gap") {
    IterationRecord r;
    r.ne_gap = 0.0;
    r.c_k = 0.5;
    r.delta_k = 0.1;
    const std::vector<IterationRecord> rs = {r};
    const BoundReport rep = theorem_bound(rs, {2, 1.0, 0.5}, 1.0, BoundKind::static_game);
    CHECK(rep.applicable);
    CHECK(rep.satisfied);
    CHECK(rep.rhs == doctest::Approx(2.0 * (1.0 + 2.0 * std::sqrt(2.0) / 0.05)));
  }
  SUBCASE("not applicable without a positive finite gap") {
    IterationRecord r;
    r.c_k = 1.0;
    r.delta_k = std::numeric_limits<double>::infinity();
    std::vector<IterationRecord> rs = {r};
    CHECK_FALSE(theorem_bound(rs, {}, 1.0, BoundKind::markov).applicable);
    rs[0].delta_k = 0.0;
    CHECK_FALSE(theorem_bound(rs, {}, 1.0, BoundKind::markov).applicable);
    CHECK_THROWS_AS(theorem_bound(std::vector<IterationRecord>{}, {}, 1.0, BoundKind::markov), std::domain_error);
  }
  SUBCASE("synthetic game with the safe step") {
    const Environment env = make_synthetic(3, {3, 4, 5}, 0);
    const Trace t = npg_trace(env, theorem_safe_eta(env.game, env.potential.phi_max()), 500, 0);
    const BoundReport rep =
        theorem_bound(t.records, {3, env.potential.phi_max(), env.game.gamma()}, 1.0, BoundKind::static_game);
    CHECK(rep.applicable);
    CHECK(rep.satisfied);
    CHECK(rep.lhs <= rep.rhs);
  }
  SUBCASE("larger suboptimality gap gives a smaller bound") {
    const std::vector<double> deltas = {1e-3, 10.0};
    std::vector<double> rhs;
    for (double d : deltas) {
      const Environment env = make_delta_matrix(d);
      const Trace t = npg_trace(env, theorem_safe_eta(env.game, env.potential.phi_max()), 200, 1);
      const BoundReport rep =
          theorem_bound(t.records, {2, env.potential.phi_max(), env.game.gamma()}, 1.0, BoundKind::static_game);
      REQUIRE(rep.applicable);
      rhs.push_back(rep.rhs);
    }
    CHECK(rhs[1] < rhs[0]);
    // Same records, larger delta_K: strictly smaller bound.
    IterationRecord r;
    r.c_k = 0.5;
    r.delta_k = 1e-3;
    const std::vector<IterationRecord> lo = {r};
    r.delta_k = 10.0;
    const std::vector<IterationRecord> hi = {r};
    CHECK(theorem_bound(hi, {}, 2.0, BoundKind::markov).rhs < theorem_bound(lo, {}, 2.0, BoundKind::markov).rhs);
  }
}

TEST_CASE("per-iteration gap is controlled by the potential increment") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Environment env = make_random_mpg(2, {2, 3}, 2 + seed, seed);
    const double eta = theorem_safe_eta(env.game, env.potential.phi_max());
    const Trace t = npg_trace(env, eta, 200, seed);
    double c = 1.0;
    for (const IterationRecord& r : t.records) c = std::min(c, r.c_k);
    const double M = t.mismatch.value;
    const double gap = 1.0 - env.game.gamma();
    const double root_n = std::sqrt(2.0);
    for (std::size_t k = 0; k < t.records.size(); ++k) {
      const IterationRecord& r = t.records[k];
      if (!std::isfinite(r.delta_k) || r.delta_k <= 0.0) continue;
      const double rhs = (t.phi[k + 1] - t.phi[k]) * 2.0 * M *
                         (1.0 + 2.0 * root_n * env.potential.phi_max() / (c * r.delta_k * gap));
      CHECK(r.ne_gap <= rhs + 1e-8);
    }
  }
}

TEST_CASE("asymptotic gap estimate") {
  std::vector<IterationRecord> rs(100);
  for (std::size_t k = 0; k < rs.size(); ++k) {
    rs[k].k = k;
    rs[k].delta_k = k < 40 ? 0.01 : 0.2;
  }
  const AsymptoticGap a = estimate_asymptotic_gap(rs);
  CHECK(a.found);
  CHECK(a.delta_star == doctest::Approx(0.2));
  CHECK(a.k_prime == 40);
}

TEST_CASE("record validation") {
  IterationRecord r;
  r.ne_gap = -1e-7;
  CHECK_THROWS_AS(r.validate(), std::domain_error);
  r.ne_gap = 0.0;
  r.c_k = 0.0;
  CHECK_THROWS_AS(r.validate(), std::domain_error);
  r.c_k = 1.0;
  CHECK_NOTHROW(r.validate());
}

TEST_CASE("L1 distance") {
  const Environment env = make_random_mpg(2, {2, 3}, 2, 0);
  const PolicyProfile p = random_profile(env.game, 1);
  CHECK(l1_distance(p, p) == 0.0);

  PolicyProfile a = PolicyProfile::uniform(env.game, false);
  for (Matrix& m : a.dists) {
    m.setZero();
    m.col(0).setOnes();
  }
  PolicyProfile b = a;
  b.dists[1](1, 0) = 0.0;
  b.dists[1](1, 2) = 1.0;
  CHECK(l1_distance(a, b) == 2.0);

  const Environment other = make_random_mpg(2, {3, 3}, 2, 0);
  CHECK_THROWS_AS(l1_distance(p, random_profile(other.game, 0)), std::domain_error);
}
