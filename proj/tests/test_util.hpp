#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "stackmf/game.hpp"
#include "stackmf/mdp.hpp"
#include "stackmf/rng.hpp"

namespace stackmf::testutil {

/// Random tabular game. `kernel_mixing` in [0,1] blends a shared base row
/// (0 = all rows identical, weakly coupled dynamics) with fully random rows;
/// `reward_coupling` scales the opponent-dependent reward component.
inline GameSpec random_game(std::mt19937_64& rng, int SL, int SF, int AL, int AF,
                            double gamma_leader = 0.9, double gamma_follower = 0.9,
                            double reward_scale = 1.0, double reward_coupling = 1.0,
                            double kernel_mixing = 1.0) {
  GameSpec spec;
  spec.leader_states = SL;
  spec.follower_states = SF;
  spec.leader_actions = AL;
  spec.follower_actions = AF;
  spec.gamma_leader = gamma_leader;
  spec.gamma_follower = gamma_follower;

  auto fill_transition = [&](Agent ag) {
    const int S = spec.states_of(ag), A = spec.actions_of(ag), Ao = spec.actions_of(opponent_of(ag));
    Vec table(spec.transition_table_size(ag), 0.0);
    Vec base = random_simplex_point(rng, S);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        for (int b = 0; b < Ao; ++b) {
          Vec row = random_simplex_point(rng, S);
          for (int sn = 0; sn < S; ++sn)
            table[spec.transition_index(ag, s, a, b, sn)] =
                (1.0 - kernel_mixing) * base[sn] + kernel_mixing * row[sn];
        }
    return table;
  };
  auto fill_reward = [&](Agent ag) {
    const int S = spec.states_of(ag), So = spec.states_of(opponent_of(ag));
    const int A = spec.actions_of(ag), Ao = spec.actions_of(opponent_of(ag));
    Vec table(spec.reward_table_size(ag), 0.0);
    // Own-action base plus a coupled component.
    Vec own_base(static_cast<size_t>(S) * A);
    for (double& v : own_base) v = uniform_in(rng, -1.0, 1.0) * reward_scale;
    for (int s = 0; s < S; ++s)
      for (int so = 0; so < So; ++so)
        for (int a = 0; a < A; ++a)
          for (int b = 0; b < Ao; ++b)
            table[spec.reward_index(ag, s, so, a, b)] =
                own_base[static_cast<size_t>(s) * A + a] +
                reward_coupling * reward_scale * uniform_in(rng, -1.0, 1.0);
    return table;
  };
  spec.base.transition_leader = fill_transition(Agent::leader);
  spec.base.transition_follower = fill_transition(Agent::follower);
  spec.base.reward_leader = fill_reward(Agent::leader);
  spec.base.reward_follower = fill_reward(Agent::follower);
  double bound = 0.0;
  for (const Vec* t : {&spec.base.reward_leader, &spec.base.reward_follower})
    for (double v : *t) bound = std::max(bound, std::abs(v));
  spec.reward_bound = bound + 1.0;
  return spec;
}

inline Policy random_policy(std::mt19937_64& rng, int states, int actions) {
  Policy p(states, actions);
  for (int s = 0; s < states; ++s) {
    Vec row = random_simplex_point(rng, actions);
    std::copy(row.begin(), row.end(), p.row(s).begin());
  }
  return p;
}

/// Dense Gaussian elimination with partial pivoting.
inline Vec solve_linear(std::vector<Vec> a, Vec b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (int r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0.0) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  Vec x(n);
  for (int i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

/// Exact policy evaluation on an induced MDP by linear solve:
/// (I - gamma P_pi) v = r_pi (+ per-state entropy bonus when rho > 0).
inline Vec policy_values_exact(const InducedMdp& mdp, const Policy& pi, double rho = 0.0) {
  const int n = mdp.n_states;
  std::vector<Vec> a(n, Vec(n, 0.0));
  Vec b(n, 0.0);
  for (int s = 0; s < n; ++s) {
    a[s][s] = 1.0;
    if (rho > 0.0) {
      for (int act = 0; act < mdp.n_actions; ++act) {
        const double w = pi.row(s)[act];
        if (w > 0.0) b[s] -= rho * w * std::log(w);
      }
    }
    for (int act = 0; act < mdp.n_actions; ++act) {
      const double w = pi.row(s)[act];
      if (w == 0.0) continue;
      b[s] += w * mdp.reward(s, act);
      for (int sn = 0; sn < n; ++sn) a[s][sn] -= mdp.gamma * w * mdp.p(s, act, sn);
    }
  }
  return solve_linear(std::move(a), std::move(b));
}

/// All deterministic policies over `states` states and `actions` actions.
inline std::vector<Policy> deterministic_policies(int states, int actions) {
  std::vector<Policy> out;
  std::vector<int> choice(states, 0);
  for (;;) {
    Policy p(states, actions, 0.0);
    for (int s = 0; s < states; ++s) p.row(s)[choice[s]] = 1.0;
    out.push_back(std::move(p));
    int i = 0;
    while (i < states && ++choice[i] == actions) choice[i++] = 0;
    if (i == states) break;
  }
  return out;
}

/// Best achievable value per state over all deterministic policies,
/// evaluated exactly. For a finite discounted MDP this matches the optimal
/// values.
inline Vec brute_force_optimal_values(const InducedMdp& mdp) {
  Vec best(mdp.n_states, -std::numeric_limits<double>::infinity());
  for (const Policy& p : deterministic_policies(mdp.n_states, mdp.n_actions)) {
    Vec v = policy_values_exact(mdp, p);
    for (int s = 0; s < mdp.n_states; ++s) best[s] = std::max(best[s], v[s]);
  }
  return best;
}

inline double linf(const Vec& a, const Vec& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline double l1(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

}  // namespace stackmf::testutil
