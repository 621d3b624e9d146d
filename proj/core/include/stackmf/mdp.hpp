#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "stackmf/game.hpp"

namespace stackmf {

/// Effective-state x action value table.
using QTable = Matrix;

void export_qtable_csv(const QTable& q, const std::string& path);

struct Regularizer {
  enum class Kind { none, entropy };
  Kind kind = Kind::none;
  double weight = 0.0;  // rho' > 0 for entropy
};

struct BRConfig {
  double tolerance = 1e-10;  // sup-norm Bellman residual stop
  int max_iterations = 100000;
  Regularizer regularizer;
};

/// Single-agent view of the game with the opponent's policy folded into the
/// environment. States are effective pairs (own, opponent) flattened as
/// own * n_opponent + opponent.
struct InducedMdp {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  Matrix reward;  // state x action
  Vec kernel;     // (state, action) -> row over next states, flattened

  double p(int s, int a, int s_next) const {
    return kernel[(static_cast<size_t>(s) * n_actions + a) * n_states + s_next];
  }
  double& p(int s, int a, int s_next) {
    return kernel[(static_cast<size_t>(s) * n_actions + a) * n_states + s_next];
  }
};

/// Averages reward and kernel over the opponent's policy. The opponent policy
/// is indexed by the opponent's own effective packing (s_opp, s_own). The
/// same sampled opponent action drives both agents' kernels, so the joint
/// next-state distribution is correlated, not a product of marginals.
InducedMdp induced_mdp(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                       const MeanField* mf = nullptr);

struct ValueIterationResult {
  QTable q;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  Vec sup_diffs;  // per-iteration sup-norm change, for contraction checks
};

/// Bellman iteration to the configured sup-norm residual. With an entropy
/// regularizer the backup uses the soft maximum rho * log-sum-exp(q/rho),
/// otherwise the hard maximum.
ValueIterationResult value_iteration(const InducedMdp& mdp, const BRConfig& cfg);

/// Uniform-argmax rows of a converged Q-table.
Policy greedy_policy(const QTable& q);

/// softmax(q_row / rho) rows; strictly positive everywhere.
Policy soft_policy(const QTable& q, double rho);

/// Thrown when an iterative solve exhausts its iteration budget.
struct SolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Exact best response: uniform argmax of the converged Q-table.
Policy best_response(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                     const BRConfig& cfg = {}, const MeanField* mf = nullptr);

/// Entropy-regularized best response softmax(q/rho); unique and Lipschitz in
/// the opponent policy.
Policy regularized_best_response(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                                 double rho, BRConfig cfg = {}, const MeanField* mf = nullptr);

struct QLearningConfig {
  int episodes = 10000;
  int steps_per_episode = 16;
  double learning_rate_c = 10.0;  // step size c/(c + visits)
  double epsilon0 = 1.0;
  double epsilon_min = 0.05;
  double epsilon_decay = 1e-3;  // eps(t) = max(min, eps0/(1 + decay*t))
  uint64_t seed = 0;
};

/// Tabular Q-learning on the induced MDP with epsilon-greedy exploration and
/// harmonic step sizes. Stochastic; quality is judged against
/// value_iteration on small games.
QTable q_learning(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                  const QLearningConfig& cfg, const MeanField* mf = nullptr);

/// Maximal finite-difference ratios of the effective-state reward and joint
/// kernel tables under the discrete metric (distinct arguments at distance
/// one, action diameters normalized to one).
struct LipschitzConstants {
  double d_reward = 0.0;
  double d_kernel = 0.0;
};

LipschitzConstants measure_lipschitz_constants(const GameSpec& spec, Agent agent,
                                               const MeanField* mf = nullptr);

/// (d_r / rho) * (1 + gamma/((1-gamma)(1-gamma dP/2)) + (gamma dP/2)/(1-gamma dP/2)).
/// Returns +infinity when gamma * d_P / 2 >= 1; the constants are reported,
/// never enforced.
double regularized_br_lipschitz_bound(double d_reward, double d_kernel, double gamma, double rho);

}  // namespace stackmf
