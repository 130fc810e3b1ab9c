#pragma once

// Independent policy-update rules. Every step is a pure function of
// (game, current profile, evaluation of that profile).

#include "mpg/game.hpp"
#include "mpg/oracle.hpp"

#include <span>
#include <string>
#include <string_view>

namespace mpg {

enum class LearnerKind { npg, pg_softmax, projected_q, npg_log_barrier, npg_entropy };

std::string_view to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(std::string_view name);

struct LearnerConfig {
  LearnerKind kind = LearnerKind::npg;
  double eta = 0.1;
  double lambda = 0.0;  // log-barrier weight
  double tau = 0.0;     // entropy weight

  void validate() const;
  /// Whether the learner works on softmax logits.
  bool uses_logits() const;
};

/// Step size for which potential ascent and the convergence bounds are
/// proven: (1 - gamma)^2 / (2 sqrt(n) phi_max), or 1 / (2 sqrt(n)) for
/// single-state games.
double theorem_safe_eta(const TabularGame& game, double phi_max);

/// Independent NPG: pi_i(.|s) <- pi_i(.|s) exp(eta Abar_i(s,.) / (1 - gamma)).
/// Single-state games use the static form pi_i <- pi_i exp(eta rbar_i).
PolicyProfile npg_step(const TabularGame& game, const PolicyProfile& profile,
                       const EvaluationBundle& bundle, double eta);

/// Softmax policy gradient on logits:
///   theta_i(s, a) += eta d_rho(s) pi_i(a|s) Abar_i(s, a) / (1 - gamma).
PolicyProfile pg_softmax_step(const TabularGame& game, const PolicyProfile& profile,
                              const EvaluationBundle& bundle, double eta);

/// Direct parameterization: pi_i(.|s) <- Proj_simplex(pi_i(.|s) + eta Qbar_i(s,.)).
PolicyProfile projected_q_step(const TabularGame& game, const PolicyProfile& profile,
                               const EvaluationBundle& bundle, double eta);

enum class Regularizer { log_barrier, entropy };

PolicyProfile regularized_npg_step(const TabularGame& game, const PolicyProfile& profile,
                                   const EvaluationBundle& bundle, double eta, Regularizer kind,
                                   double weight);

/// Dispatch on config.kind.
PolicyProfile learner_step(const LearnerConfig& config, const TabularGame& game,
                           const PolicyProfile& profile, const EvaluationBundle& bundle);

/// Euclidean projection onto the probability simplex (sort-based).
void project_to_simplex(std::span<const double> in, std::span<double> out);

}  // namespace mpg
