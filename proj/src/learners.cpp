#include "mpg/learners.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace mpg {

namespace {

using Eigen::Index;

void check_bundle(const PolicyProfile& profile, const EvaluationBundle& bundle) {
  if (bundle.abar.size() != profile.agents() || bundle.qbar.size() != profile.agents()) {
    throw std::domain_error("learner: bundle does not match profile");
  }
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    if (bundle.abar[i].rows() != profile.dists[i].rows() ||
        bundle.abar[i].cols() != profile.dists[i].cols()) {
      throw std::domain_error("learner: advantage shape does not match profile");
    }
    if (!bundle.abar[i].allFinite() || !bundle.qbar[i].allFinite()) {
      throw NumericError("learner: non-finite advantage");
    }
  }
}

// Exponent scale of the multiplicative-weights updates.
double npg_scale(const TabularGame& game, double eta) {
  return game.is_static() ? eta : eta / (1.0 - game.gamma());
}

// pi'(a) proportional to pi(a)^power * exp(x(a)), restricted to supp(pi).
// With logits present the update is applied to theta instead, which keeps the
// softmax parameterization exact.
PolicyProfile tilt(const PolicyProfile& profile, const std::vector<Matrix>& exponents, double power) {
  if (profile.logits) {
    std::vector<Matrix> theta = *profile.logits;
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = power * theta[i] + exponents[i];
    return softmax_project(std::move(theta));
  }
  PolicyProfile out = profile;
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    const Matrix& pi = profile.dists[i];
    Matrix& next = out.dists[i];
    for (Index s = 0; s < pi.rows(); ++s) {
      double top = -std::numeric_limits<double>::infinity();
      for (Index a = 0; a < pi.cols(); ++a) {
        if (pi(s, a) > 0.0) top = std::max(top, power * std::log(pi(s, a)) + exponents[i](s, a));
      }
      double total = 0.0;
      for (Index a = 0; a < pi.cols(); ++a) {
        next(s, a) = pi(s, a) > 0.0 ? std::exp(power * std::log(pi(s, a)) + exponents[i](s, a) - top) : 0.0;
        total += next(s, a);
      }
      next.row(s) /= total;
    }
  }
  return out;
}

// Plain NPG keeps the multiplicative form pi * exp(x), avoiding a log/exp
// round trip on the current probabilities.
PolicyProfile multiplicative(const PolicyProfile& profile, const std::vector<Matrix>& exponents) {
  if (profile.logits) return tilt(profile, exponents, 1.0);
  PolicyProfile out = profile;
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    const Matrix& pi = profile.dists[i];
    Matrix& next = out.dists[i];
    for (Index s = 0; s < pi.rows(); ++s) {
      double top = -std::numeric_limits<double>::infinity();
      for (Index a = 0; a < pi.cols(); ++a) {
        if (pi(s, a) > 0.0) top = std::max(top, exponents[i](s, a));
      }
      double total = 0.0;
      for (Index a = 0; a < pi.cols(); ++a) {
        next(s, a) = pi(s, a) > 0.0 ? pi(s, a) * std::exp(exponents[i](s, a) - top) : 0.0;
        total += next(s, a);
      }
      next.row(s) /= total;
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::npg: return "npg";
    case LearnerKind::pg_softmax: return "pg_softmax";
    case LearnerKind::projected_q: return "projected_q";
    case LearnerKind::npg_log_barrier: return "npg_log_barrier";
    case LearnerKind::npg_entropy: return "npg_entropy";
  }
  return "unknown";
}

LearnerKind learner_kind_from_string(std::string_view name) {
  for (LearnerKind kind : {LearnerKind::npg, LearnerKind::pg_softmax, LearnerKind::projected_q,
                           LearnerKind::npg_log_barrier, LearnerKind::npg_entropy}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::domain_error("unknown learner: " + std::string(name));
}

void LearnerConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::domain_error("learner: eta must be positive");
  if (lambda < 0.0 || tau < 0.0) throw std::domain_error("learner: regularization weights must be >= 0");
}

bool LearnerConfig::uses_logits() const { return kind != LearnerKind::projected_q; }

double theorem_safe_eta(const TabularGame& game, double phi_max) {
  const double root_n = std::sqrt(static_cast<double>(game.agents()));
  if (game.is_static()) return 1.0 / (2.0 * root_n);
  if (!(phi_max > 0.0)) throw std::domain_error("theorem_safe_eta: phi_max must be positive");
  const double gap = 1.0 - game.gamma();
  return gap * gap / (2.0 * root_n * phi_max);
}

PolicyProfile npg_step(const TabularGame& game, const PolicyProfile& profile,
                       const EvaluationBundle& bundle, double eta) {
  check_bundle(profile, bundle);
  if (eta == 0.0) return profile;
  // On a single state Abar_i = rbar_i - <pi_i, rbar_i>, so exp(eta Abar_i)
  // and exp(eta rbar_i) give the same normalized update.
  const double scale = npg_scale(game, eta);
  std::vector<Matrix> exponents;
  for (const Matrix& a : bundle.abar) exponents.push_back(scale * a);
  return multiplicative(profile, exponents);
}

PolicyProfile pg_softmax_step(const TabularGame& game, const PolicyProfile& profile,
                              const EvaluationBundle& bundle, double eta) {
  if (!profile.logits) throw std::domain_error("pg_softmax_step: profile has no logits");
  check_bundle(profile, bundle);
  if (bundle.d_rho.size() != static_cast<Index>(game.state_count())) {
    throw std::domain_error("pg_softmax_step: visitation has wrong size");
  }
  if (eta == 0.0) return profile;
  std::vector<Matrix> theta = *profile.logits;
  const double scale = eta / (1.0 - game.gamma());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    for (Index s = 0; s < theta[i].rows(); ++s) {
      theta[i].row(s).array() += scale * bundle.d_rho(s) * profile.dists[i].row(s).array() *
                                 bundle.abar[i].row(s).array();
    }
  }
  return softmax_project(std::move(theta));
}

void project_to_simplex(std::span<const double> in, std::span<double> out) {
  std::vector<double> sorted(in.begin(), in.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double shift = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    running += sorted[j];
    const double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) shift = candidate;
  }
  for (std::size_t a = 0; a < in.size(); ++a) out[a] = std::max(in[a] - shift, 0.0);
}

PolicyProfile projected_q_step(const TabularGame& /*game*/, const PolicyProfile& profile,
                               const EvaluationBundle& bundle, double eta) {
  check_bundle(profile, bundle);
  PolicyProfile out;
  out.dists = profile.dists;
  if (eta == 0.0) return out;
  std::vector<double> target;
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    Matrix& pi = out.dists[i];
    const auto cols = static_cast<std::size_t>(pi.cols());
    target.resize(cols);
    for (Index s = 0; s < pi.rows(); ++s) {
      for (std::size_t a = 0; a < cols; ++a) {
        target[a] = pi(s, static_cast<Index>(a)) + eta * bundle.qbar[i](s, static_cast<Index>(a));
      }
      project_to_simplex(target, {pi.row(s).data(), cols});
    }
  }
  return out;
}

PolicyProfile regularized_npg_step(const TabularGame& game, const PolicyProfile& profile,
                                   const EvaluationBundle& bundle, double eta, Regularizer kind,
                                   double weight) {
  if (weight < 0.0) throw std::domain_error("regularized_npg_step: weight must be >= 0");
  if (weight == 0.0) return npg_step(game, profile, bundle, eta);
  check_bundle(profile, bundle);
  if (eta == 0.0) return profile;
  const double scale = npg_scale(game, eta);

  std::vector<Matrix> exponents;
  if (kind == Regularizer::entropy) {
    // pi' proportional to pi^(1 - scale tau) exp(scale Abar).
    const double power = 1.0 - scale * weight;
    if (power < 0.0) throw std::domain_error("regularized_npg_step: eta * tau too large");
    for (const Matrix& a : bundle.abar) exponents.push_back(scale * a);
    return tilt(profile, exponents, power);
  }

  // Log-barrier (weight / |A_i|) sum_a log pi_i(a|s): its derivative
  // weight / (|A_i| pi_i(a|s)), centered under pi_i, is added to Abar_i.
  for (std::size_t i = 0; i < profile.agents(); ++i) {
    const Matrix& pi = profile.dists[i];
    const auto count = static_cast<double>(pi.cols());
    Matrix x = bundle.abar[i];
    for (Index s = 0; s < pi.rows(); ++s) {
      if ((pi.row(s).array() <= 0.0).any()) {
        throw NumericError("regularized_npg_step: log barrier undefined on the simplex boundary");
      }
      // sum_a pi(a) / (|A| pi(a)) = 1 on a full-support row.
      x.row(s).array() += weight * (1.0 / (count * pi.row(s).array()) - 1.0);
    }
    exponents.push_back(scale * x);
  }
  return multiplicative(profile, exponents);
}

PolicyProfile learner_step(const LearnerConfig& config, const TabularGame& game,
                           const PolicyProfile& profile, const EvaluationBundle& bundle) {
  switch (config.kind) {
    case LearnerKind::npg: return npg_step(game, profile, bundle, config.eta);
    case LearnerKind::pg_softmax: return pg_softmax_step(game, profile, bundle, config.eta);
    case LearnerKind::projected_q: return projected_q_step(game, profile, bundle, config.eta);
    case LearnerKind::npg_log_barrier:
      return regularized_npg_step(game, profile, bundle, config.eta, Regularizer::log_barrier, config.lambda);
    case LearnerKind::npg_entropy:
      return regularized_npg_step(game, profile, bundle, config.eta, Regularizer::entropy, config.tau);
  }
  throw std::domain_error("learner_step: unknown learner");
}

}  // namespace mpg
