#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stackmf {

using Vec = std::vector<double>;

/// Rows of probability tables must sum to one within this tolerance.
inline constexpr double kProbTolerance = 1e-12;

enum class Agent { leader, follower };

constexpr Agent opponent_of(Agent a) {
  return a == Agent::leader ? Agent::follower : Agent::leader;
}

const char* agent_name(Agent a);

/// Dense row-major table of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  std::span<double> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  bool operator==(const Matrix&) const = default;
};

/// Per-state distribution over a finite action set. Depending on context the
/// state index ranges over an agent's own states or over effective
/// (own, opponent) pairs; the table itself does not care.
struct Policy {
  Matrix prob;

  Policy() = default;
  Policy(int states, int actions, double fill = 0.0) : prob(states, actions, fill) {}

  int states() const { return prob.rows; }
  int actions() const { return prob.cols; }
  std::span<const double> row(int s) const { return prob.row(s); }
  std::span<double> row(int s) { return prob.row(s); }

  /// Throws std::invalid_argument unless every row is a probability vector.
  void validate() const;
  bool operator==(const Policy&) const = default;
};

Policy uniform_policy(int states, int actions);

/// Sup over states of the per-state l1 row distance.
double policy_l1_distance(const Policy& p, const Policy& q);

/// Joint distribution over follower (state, action) pairs.
struct MeanField {
  int states = 0;
  int actions = 0;
  Vec mass;  // row-major (state, action)

  MeanField() = default;
  MeanField(int s, int a, double fill = 0.0)
      : states(s), actions(a), mass(static_cast<size_t>(s) * a, fill) {}

  double& at(int s, int a) { return mass[static_cast<size_t>(s) * actions + a]; }
  double at(int s, int a) const { return mass[static_cast<size_t>(s) * actions + a]; }
  double total() const;
  Vec state_marginal() const;
  void validate() const;
  bool operator==(const MeanField&) const = default;
};

MeanField uniform_mean_field(int states, int actions);

/// Sum of absolute mass differences.
double mean_field_l1(const MeanField& a, const MeanField& b);

struct JointState {
  int leader = 0;
  int follower = 0;
};

/// Flat kernel and reward tables for one evaluation of the game.
///
/// Conventions ("own first"):
///   transition[s_own][a_own][a_other] -> row over next own states
///   reward[s_own][s_other][a_own][a_other] -> scalar
struct GameTables {
  Vec transition_leader;
  Vec transition_follower;
  Vec reward_leader;
  Vec reward_follower;
};

/// The full game tuple. For mean-field games `tables_at_mf` re-evaluates the
/// tables at a frozen mean field; when it is absent the base tables are used
/// regardless of the mean field (constant-in-mu game).
struct GameSpec {
  int leader_states = 0;
  int follower_states = 0;
  int leader_actions = 0;
  int follower_actions = 0;
  double gamma_leader = 0.9;
  double gamma_follower = 0.9;
  double reward_bound = 1.0;  // declared bound R, checked by validate_game
  bool mf_dependent = false;

  GameTables base;
  std::function<GameTables(const MeanField&)> tables_at_mf;

  int states_of(Agent a) const { return a == Agent::leader ? leader_states : follower_states; }
  int actions_of(Agent a) const { return a == Agent::leader ? leader_actions : follower_actions; }
  double gamma_of(Agent a) const { return a == Agent::leader ? gamma_leader : gamma_follower; }

  /// Effective-state count for an agent: own states times opponent states.
  int effective_states(Agent a) const { return states_of(a) * states_of(opponent_of(a)); }
  int effective_index(Agent a, int s_own, int s_other) const {
    return s_own * states_of(opponent_of(a)) + s_other;
  }

  size_t transition_index(Agent a, int s, int a_own, int a_other, int s_next) const;
  size_t reward_index(Agent a, int s_own, int s_other, int a_own, int a_other) const;

  double transition(const GameTables& t, Agent a, int s, int a_own, int a_other, int s_next) const;
  double reward(const GameTables& t, Agent a, int s_own, int s_other, int a_own, int a_other) const;

  size_t transition_table_size(Agent a) const;
  size_t reward_table_size(Agent a) const;

  /// Tables materialized at a frozen mean field (or the base tables).
  GameTables tables_for(const MeanField* mu) const;
};

/// One reported violation of the GameSpec invariants.
struct Violation {
  enum class Kind { dimension, row_sum, nonnegative, reward_bound, gamma_range };
  Kind kind;
  std::string where;
  double value = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

/// Checks row sums, nonnegativity, the declared reward bound and discount
/// ranges. Reporting only; never throws.
ValidationReport validate_game(const GameSpec& spec);

struct TrajectoryStep {
  JointState state;
  int leader_action = 0;
  int follower_action = 0;
};

/// Simulates T joint steps under the given (effective-state-indexed) policies.
/// Test/diagnostic helper; solvers do not depend on sampled trajectories.
std::vector<TrajectoryStep> sample_trajectory(const GameSpec& spec, const Policy& leader,
                                              const Policy& follower, int steps, uint64_t seed);

}  // namespace stackmf
