#include "mpg/game.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace mpg {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::domain_error(what);
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace

JointActionIndex::JointActionIndex(std::vector<std::size_t> action_counts)
    : counts_(std::move(action_counts)), strides_(counts_.size()) {
  require(!counts_.empty(), "joint action index: need at least one agent");
  std::size_t stride = 1;
  for (std::size_t k = counts_.size(); k-- > 0;) {
    require(counts_[k] >= 1, "joint action index: every agent needs an action");
    strides_[k] = stride;
    if (stride > kMaxJointActions / counts_[k]) {
      throw CapacityError("joint action space exceeds " + std::to_string(kMaxJointActions));
    }
    stride *= counts_[k];
  }
  size_ = stride;
}

std::size_t JointActionIndex::encode(std::span<const std::size_t> actions) const {
  require(actions.size() == counts_.size(), "encode: wrong number of agent actions");
  std::size_t joint = 0;
  for (std::size_t k = 0; k < counts_.size(); ++k) {
    require(actions[k] < counts_[k], "encode: action out of range");
    joint += actions[k] * strides_[k];
  }
  return joint;
}

std::vector<std::size_t> JointActionIndex::decode(std::size_t joint) const {
  require(joint < size_, "decode: joint action out of range");
  std::vector<std::size_t> actions(counts_.size());
  for (std::size_t k = 0; k < counts_.size(); ++k) actions[k] = component(joint, k);
  return actions;
}

TabularGame::TabularGame(std::size_t state_count, std::vector<std::size_t> action_counts,
                         std::vector<double> transition,
                         std::vector<std::vector<double>> rewards, double gamma,
                         std::vector<double> rho)
    : state_count_(state_count),
      index_(std::move(action_counts)),
      transition_(std::move(transition)),
      rewards_(std::move(rewards)),
      gamma_(gamma),
      rho_(std::move(rho)) {
  require(state_count_ >= 1, "game: need at least one state");
  const std::size_t joint = index_.size();
  if (joint * state_count_ > 4 * kMaxJointActions) {
    throw CapacityError("game: state x joint-action table too large");
  }
  require(transition_.size() == state_count_ * joint * state_count_,
          "game: transition tensor has wrong size");
  require(rewards_.size() == index_.agents(), "game: need one reward tensor per agent");
  require(gamma_ > 0.0 && gamma_ < 1.0, "game: gamma must lie in (0,1)");
  require(rho_.size() == state_count_, "game: rho has wrong size");

  for (std::size_t row = 0; row < state_count_ * joint; ++row) {
    double total = 0.0;
    for (std::size_t next = 0; next < state_count_; ++next) {
      const double p = transition_[row * state_count_ + next];
      require(p >= 0.0 && std::isfinite(p), "game: negative or non-finite transition entry");
      total += p;
    }
    require(near(total, 1.0, kConstructionTol), "game: transition row does not sum to 1");
  }
  for (const auto& r : rewards_) {
    require(r.size() == state_count_ * joint, "game: reward tensor has wrong size");
    for (double v : r) require(v >= 0.0 && v <= 1.0, "game: reward outside [0,1]");
  }
  double mass = 0.0;
  for (double p : rho_) {
    require(p >= 0.0, "game: negative initial-state probability");
    mass += p;
  }
  require(near(mass, 1.0, kConstructionTol), "game: rho does not sum to 1");
}

PotentialSpec::PotentialSpec(std::vector<double> phi, double phi_max)
    : phi_(std::move(phi)), phi_max_(phi_max) {
  require(std::isfinite(phi_max_) && phi_max_ >= 0.0, "potential: invalid phi_max");
  for (double v : phi_) {
    require(v >= 0.0 && v <= phi_max_, "potential: phi outside [0, phi_max]");
  }
}

void PotentialSpec::check_compatible(const TabularGame& game) const {
  require(phi_.size() == game.state_count() * game.joint_count(),
          "potential: shape does not match game");
}

PolicyProfile PolicyProfile::uniform(const TabularGame& game, bool with_logits) {
  PolicyProfile profile;
  const auto rows = static_cast<Eigen::Index>(game.state_count());
  std::vector<Matrix> zeros;
  for (std::size_t count : game.action_counts()) {
    const auto cols = static_cast<Eigen::Index>(count);
    profile.dists.push_back(Matrix::Constant(rows, cols, 1.0 / static_cast<double>(count)));
    zeros.push_back(Matrix::Zero(rows, cols));
  }
  if (with_logits) profile.logits = std::move(zeros);
  return profile;
}

void PolicyProfile::validate(const TabularGame& game) const {
  require(dists.size() == game.agents(), "profile: wrong number of agents");
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const Matrix& d = dists[i];
    require(static_cast<std::size_t>(d.rows()) == game.state_count() &&
                static_cast<std::size_t>(d.cols()) == game.action_counts()[i],
            "profile: distribution shape mismatch");
    for (Eigen::Index s = 0; s < d.rows(); ++s) {
      require((d.row(s).array() >= 0.0).all(), "profile: negative probability");
      require(near(d.row(s).sum(), 1.0, kConstructionTol), "profile: row does not sum to 1");
    }
  }
  if (!logits) return;
  require(logits->size() == dists.size(), "profile: logits agent count mismatch");
  std::vector<double> buf;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const Matrix& theta = (*logits)[i];
    require(theta.rows() == dists[i].rows() && theta.cols() == dists[i].cols(),
            "profile: logits shape mismatch");
    buf.resize(static_cast<std::size_t>(theta.cols()));
    for (Eigen::Index s = 0; s < theta.rows(); ++s) {
      softmax_row({theta.row(s).data(), buf.size()}, buf);
      for (Eigen::Index a = 0; a < theta.cols(); ++a) {
        require(near(buf[static_cast<std::size_t>(a)], dists[i](s, a), kConstructionTol),
                "profile: distributions are not the softmax of the logits");
      }
    }
  }
}

double joint_policy_prob(const PolicyProfile& profile, std::size_t s,
                         std::span<const std::size_t> actions) {
  require(actions.size() == profile.agents(), "joint_policy_prob: wrong number of actions");
  require(s < profile.state_count(), "joint_policy_prob: state out of range");
  double p = 1.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Matrix& d = profile.dists[i];
    require(actions[i] < static_cast<std::size_t>(d.cols()), "joint_policy_prob: action out of range");
    p *= d(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(actions[i]));
  }
  return p;
}

double joint_policy_prob(const PolicyProfile& profile, const JointActionIndex& index,
                         std::size_t s, std::size_t joint) {
  return joint_policy_prob(profile, s, index.decode(joint));
}

void softmax_row(std::span<const double> logits, std::span<double> out) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::domain_error("softmax: non-finite logit");
    top = std::max(top, v);
  }
  double total = 0.0;
  for (std::size_t a = 0; a < logits.size(); ++a) {
    out[a] = std::exp(logits[a] - top);
    total += out[a];
  }
  for (double& v : out) v /= total;
}

PolicyProfile softmax_project(std::vector<Matrix> logits) {
  PolicyProfile profile;
  profile.dists.reserve(logits.size());
  for (const Matrix& theta : logits) {
    Matrix dist(theta.rows(), theta.cols());
    const auto cols = static_cast<std::size_t>(theta.cols());
    for (Eigen::Index s = 0; s < theta.rows(); ++s) {
      softmax_row({theta.row(s).data(), cols}, {dist.row(s).data(), cols});
    }
    profile.dists.push_back(std::move(dist));
  }
  profile.logits = std::move(logits);
  return profile;
}

PolicyProfile random_profile(const TabularGame& game, std::uint64_t seed, double logit_scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> draw(-logit_scale, logit_scale);
  std::vector<Matrix> logits;
  for (std::size_t count : game.action_counts()) {
    Matrix theta(static_cast<Eigen::Index>(game.state_count()), static_cast<Eigen::Index>(count));
    for (Eigen::Index s = 0; s < theta.rows(); ++s) {
      for (Eigen::Index a = 0; a < theta.cols(); ++a) theta(s, a) = draw(rng);
    }
    logits.push_back(std::move(theta));
  }
  return softmax_project(std::move(logits));
}

std::string game_to_json(const TabularGame& game, const PotentialSpec* potential) {
  nlohmann::json j;
  j["n"] = game.agents();
  j["states"] = game.state_count();
  j["action_counts"] = game.action_counts();
  j["transition"] = game.transition_tensor();
  auto rewards = nlohmann::json::array();
  for (std::size_t i = 0; i < game.agents(); ++i) rewards.push_back(game.reward_tensor(i));
  j["rewards"] = std::move(rewards);
  j["gamma"] = game.gamma();
  j["rho"] = game.rho();
  if (potential != nullptr) {
    j["phi"] = potential->values();
    j["phi_max"] = potential->phi_max();
  }
  return j.dump();
}

GameFile game_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::domain_error(std::string("game file: ") + e.what());
  }
  try {
    const auto n = j.at("n").get<std::size_t>();
    auto counts = j.at("action_counts").get<std::vector<std::size_t>>();
    require(counts.size() == n, "game file: action_counts length differs from n");
    TabularGame game(j.at("states").get<std::size_t>(), std::move(counts),
                     j.at("transition").get<std::vector<double>>(),
                     j.at("rewards").get<std::vector<std::vector<double>>>(),
                     j.at("gamma").get<double>(), j.at("rho").get<std::vector<double>>());
    std::optional<PotentialSpec> spec;
    if (j.contains("phi")) {
      spec.emplace(j.at("phi").get<std::vector<double>>(), j.at("phi_max").get<double>());
      spec->check_compatible(game);
    }
    return {std::move(game), std::move(spec)};
  } catch (const nlohmann::json::exception& e) {
    throw std::domain_error(std::string("game file: ") + e.what());
  }
}

void save_game(const std::filesystem::path& path, const TabularGame& game,
               const PotentialSpec* potential) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << game_to_json(game, potential) << '\n';
}

GameFile load_game(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return game_from_json(buf.str());
}

}  // namespace mpg
