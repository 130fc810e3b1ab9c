#pragma once

// Core data model for tabular stochastic games: joint-action indexing, the
// game tuple (n, S, A, P, {r_i}, gamma, rho), potential functions and
// per-agent product policies.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mpg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Tolerance for validating constructed inputs (probabilities, simplex rows).
inline constexpr double kConstructionTol = 1e-12;
// Tolerance for quantities produced by solves and accumulations.
inline constexpr double kDerivedTol = 1e-8;

// Largest joint-action space the dense representation will allocate.
inline constexpr std::size_t kMaxJointActions = 1'000'000;

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Mixed-radix encoding of joint actions (a_1, ..., a_n). Agent 0 is the most
/// significant digit, so a flat index walks the product space in row-major
/// order of (a_1, ..., a_n).
class JointActionIndex {
 public:
  JointActionIndex() = default;
  explicit JointActionIndex(std::vector<std::size_t> action_counts);

  std::size_t agents() const { return counts_.size(); }
  std::size_t size() const { return size_; }
  const std::vector<std::size_t>& action_counts() const { return counts_; }
  const std::vector<std::size_t>& strides() const { return strides_; }

  std::size_t encode(std::span<const std::size_t> actions) const;
  std::vector<std::size_t> decode(std::size_t joint) const;

  std::size_t component(std::size_t joint, std::size_t agent) const {
    return (joint / strides_[agent]) % counts_[agent];
  }

  /// Index of the joint action obtained from `joint` by replacing agent i's
  /// action with `action`.
  std::size_t with_component(std::size_t joint, std::size_t agent, std::size_t action) const {
    return joint + (action - component(joint, agent)) * strides_[agent];
  }

  /// Calls f(joint, digits) for every joint action in increasing flat order.
  template <class F>
  void for_each(F&& f) const {
    std::vector<std::size_t> digits(counts_.size(), 0);
    for (std::size_t joint = 0; joint < size_; ++joint) {
      f(joint, std::span<const std::size_t>(digits));
      for (std::size_t k = counts_.size(); k-- > 0;) {
        if (++digits[k] < counts_[k]) break;
        digits[k] = 0;
      }
    }
  }

 private:
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// The stochastic game M = (n, S, A, P, {r_i}, gamma, rho) stored as dense
/// row-major tensors. Validated on construction and immutable afterwards.
///
/// Layouts: transition[(s * |A| + a) * |S| + s'], rewards[i][s * |A| + a].
class TabularGame {
 public:
  TabularGame(std::size_t state_count, std::vector<std::size_t> action_counts,
              std::vector<double> transition, std::vector<std::vector<double>> rewards,
              double gamma, std::vector<double> rho);

  std::size_t agents() const { return index_.agents(); }
  std::size_t state_count() const { return state_count_; }
  std::size_t joint_count() const { return index_.size(); }
  const std::vector<std::size_t>& action_counts() const { return index_.action_counts(); }
  const JointActionIndex& index() const { return index_; }
  double gamma() const { return gamma_; }
  const std::vector<double>& rho() const { return rho_; }

  double transition(std::size_t s, std::size_t joint, std::size_t next) const {
    return transition_[(s * joint_count() + joint) * state_count_ + next];
  }
  std::span<const double> transition_row(std::size_t s, std::size_t joint) const {
    return {transition_.data() + (s * joint_count() + joint) * state_count_, state_count_};
  }
  const std::vector<double>& transition_tensor() const { return transition_; }

  double reward(std::size_t agent, std::size_t s, std::size_t joint) const {
    return rewards_[agent][s * joint_count() + joint];
  }
  const std::vector<double>& reward_tensor(std::size_t agent) const { return rewards_[agent]; }

  bool is_static() const { return state_count_ == 1; }

 private:
  std::size_t state_count_;
  JointActionIndex index_;
  std::vector<double> transition_;
  std::vector<std::vector<double>> rewards_;
  double gamma_;
  std::vector<double> rho_;
};

/// Potential values phi(s, a) over (state, joint action), with an upper bound
/// phi_max such that 0 <= phi <= phi_max.
class PotentialSpec {
 public:
  PotentialSpec(std::vector<double> phi, double phi_max);

  double operator()(std::size_t s, std::size_t joint, std::size_t joint_count) const {
    return phi_[s * joint_count + joint];
  }
  const std::vector<double>& values() const { return phi_; }
  double phi_max() const { return phi_max_; }

  void check_compatible(const TabularGame& game) const;

 private:
  std::vector<double> phi_;
  double phi_max_;
};

/// Product policy pi(a|s) = prod_i pi_i(a_i|s). dists[i] has shape
/// (|S|, |A_i|); logits, when present, carry the softmax parameters theta_i.
struct PolicyProfile {
  std::vector<Matrix> dists;
  std::optional<std::vector<Matrix>> logits;

  std::size_t agents() const { return dists.size(); }
  std::size_t state_count() const { return dists.empty() ? 0 : dists.front().rows(); }

  static PolicyProfile uniform(const TabularGame& game, bool with_logits);

  /// Throws std::domain_error unless shapes match the game, rows lie on the
  /// simplex and logits (if any) reproduce the distributions.
  void validate(const TabularGame& game) const;
};

double joint_policy_prob(const PolicyProfile& profile, std::size_t s,
                         std::span<const std::size_t> actions);
double joint_policy_prob(const PolicyProfile& profile, const JointActionIndex& index,
                         std::size_t s, std::size_t joint);

/// Random profile with logits drawn uniformly from [-logit_scale, logit_scale].
PolicyProfile random_profile(const TabularGame& game, std::uint64_t seed, double logit_scale = 3.0);

/// Row-wise softmax of each agent's logits, max-shifted for stability. The
/// returned profile keeps the logits.
PolicyProfile softmax_project(std::vector<Matrix> logits);

/// Softmax of a single row into `out`.
void softmax_row(std::span<const double> logits, std::span<double> out);

// Game files: one JSON object with fields
//   n, states, action_counts, transition, rewards, gamma, rho[, phi, phi_max]
// where transition and phi are flat row-major arrays and rewards is an array of
// n flat arrays.
struct GameFile {
  TabularGame game;
  std::optional<PotentialSpec> potential;
};

std::string game_to_json(const TabularGame& game, const PotentialSpec* potential = nullptr);
GameFile game_from_json(const std::string& text);
void save_game(const std::filesystem::path& path, const TabularGame& game,
               const PotentialSpec* potential = nullptr);
GameFile load_game(const std::filesystem::path& path);

}  // namespace mpg
