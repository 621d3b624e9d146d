#include "stackmf/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stackmf/csv.hpp"
#include "stackmf/policy_ops.hpp"
#include "stackmf/rng.hpp"

namespace stackmf {

void export_qtable_csv(const QTable& q, const std::string& path) {
  CsvWriter w(path);
  w.write_header({"state", "action", "value"});
  for (int s = 0; s < q.rows; ++s)
    for (int a = 0; a < q.cols; ++a) {
      w.begin_row();
      w.field(s);
      w.field(a);
      w.field(q(s, a));
      w.end_row();
    }
}

InducedMdp induced_mdp(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                       const MeanField* mf) {
  const Agent opp = opponent_of(agent);
  const int S = spec.states_of(agent), So = spec.states_of(opp);
  const int A = spec.actions_of(agent), Ao = spec.actions_of(opp);
  if (opponent_policy.states() != So * S || opponent_policy.actions() != Ao)
    throw std::invalid_argument("induced_mdp: opponent policy dimensions do not match the game");

  const GameTables tables = spec.tables_for(mf);

  InducedMdp mdp;
  mdp.n_states = S * So;
  mdp.n_actions = A;
  mdp.gamma = spec.gamma_of(agent);
  mdp.reward = Matrix(mdp.n_states, A);
  mdp.kernel.assign(static_cast<size_t>(mdp.n_states) * A * mdp.n_states, 0.0);

  for (int s = 0; s < S; ++s)
    for (int so = 0; so < So; ++so) {
      const int e = spec.effective_index(agent, s, so);
      // Opponent's view of the same joint state.
      const int e_opp = spec.effective_index(opp, so, s);
      auto opp_row = opponent_policy.row(e_opp);
      for (int a = 0; a < A; ++a) {
        double r = 0.0;
        for (int b = 0; b < Ao; ++b) {
          const double w = opp_row[b];
          if (w == 0.0) continue;
          r += w * spec.reward(tables, agent, s, so, a, b);
          for (int sn = 0; sn < S; ++sn) {
            const double p_own = spec.transition(tables, agent, s, a, b, sn);
            if (p_own == 0.0) continue;
            for (int son = 0; son < So; ++son) {
              const double p_opp = spec.transition(tables, opp, so, b, a, son);
              if (p_opp == 0.0) continue;
              mdp.p(e, a, spec.effective_index(agent, sn, son)) += w * p_own * p_opp;
            }
          }
        }
        mdp.reward(e, a) = r;
      }
    }
  return mdp;
}

namespace {

double state_value(std::span<const double> q_row, const Regularizer& reg) {
  if (reg.kind == Regularizer::Kind::entropy) {
    // rho * log sum exp(q/rho), with max subtraction
    const double rho = reg.weight;
    double top = *std::max_element(q_row.begin(), q_row.end());
    double z = 0.0;
    for (double v : q_row) z += std::exp((v - top) / rho);
    return top + rho * std::log(z);
  }
  return *std::max_element(q_row.begin(), q_row.end());
}

}  // namespace

ValueIterationResult value_iteration(const InducedMdp& mdp, const BRConfig& cfg) {
  if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("value_iteration: tolerance must be positive");
  if (cfg.regularizer.kind == Regularizer::Kind::entropy && !(cfg.regularizer.weight > 0.0))
    throw std::invalid_argument("value_iteration: entropy weight must be positive");

  ValueIterationResult res;
  res.q = QTable(mdp.n_states, mdp.n_actions, 0.0);
  Vec value(mdp.n_states, 0.0);
  QTable next(mdp.n_states, mdp.n_actions, 0.0);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    for (int s = 0; s < mdp.n_states; ++s) value[s] = state_value(res.q.row(s), cfg.regularizer);
    double diff = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a) {
        double acc = mdp.reward(s, a);
        const double* row = mdp.kernel.data() + (static_cast<size_t>(s) * mdp.n_actions + a) * mdp.n_states;
        for (int sn = 0; sn < mdp.n_states; ++sn) acc += mdp.gamma * row[sn] * value[sn];
        next(s, a) = acc;
        diff = std::max(diff, std::abs(acc - res.q(s, a)));
      }
    std::swap(res.q, next);
    res.sup_diffs.push_back(diff);
    res.iterations = it + 1;
    // One extra backup of a fixed point changes it by at most gamma * diff,
    // so the Bellman residual of the current table is bounded by gamma*diff;
    // the exposed contract is the residual itself, measured directly below.
    if (diff <= cfg.tolerance) break;
  }

  // Measure the final Bellman residual ||TQ - Q||_inf.
  for (int s = 0; s < mdp.n_states; ++s) value[s] = state_value(res.q.row(s), cfg.regularizer);
  double residual = 0.0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      double acc = mdp.reward(s, a);
      const double* row = mdp.kernel.data() + (static_cast<size_t>(s) * mdp.n_actions + a) * mdp.n_states;
      for (int sn = 0; sn < mdp.n_states; ++sn) acc += mdp.gamma * row[sn] * value[sn];
      residual = std::max(residual, std::abs(acc - res.q(s, a)));
    }
  res.residual = residual;
  res.converged = residual <= cfg.tolerance;
  return res;
}

Policy greedy_policy(const QTable& q) {
  Policy p(q.rows, q.cols);
  for (int s = 0; s < q.rows; ++s) {
    Vec row = argmax_uniform(q.row(s));
    std::copy(row.begin(), row.end(), p.row(s).begin());
  }
  return p;
}

Policy soft_policy(const QTable& q, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("soft_policy: rho must be positive");
  Policy p(q.rows, q.cols);
  for (int s = 0; s < q.rows; ++s) {
    Vec row = softmax(q.row(s), 1.0 / rho);
    std::copy(row.begin(), row.end(), p.row(s).begin());
  }
  return p;
}

Policy best_response(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                     const BRConfig& cfg, const MeanField* mf) {
  BRConfig plain = cfg;
  plain.regularizer = {};
  auto vi = value_iteration(induced_mdp(spec, agent, opponent_policy, mf), plain);
  if (!vi.converged)
    throw SolveError("best_response: value iteration stopped at residual " +
                     std::to_string(vi.residual) + " after " + std::to_string(vi.iterations) +
                     " iterations");
  return greedy_policy(vi.q);
}

Policy regularized_best_response(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                                 double rho, BRConfig cfg, const MeanField* mf) {
  if (!(rho > 0.0)) throw std::invalid_argument("regularized_best_response: rho must be positive");
  cfg.regularizer = {Regularizer::Kind::entropy, rho};
  auto vi = value_iteration(induced_mdp(spec, agent, opponent_policy, mf), cfg);
  if (!vi.converged)
    throw SolveError("regularized_best_response: value iteration stopped at residual " +
                     std::to_string(vi.residual));
  return soft_policy(vi.q, rho);
}

QTable q_learning(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                  const QLearningConfig& cfg, const MeanField* mf) {
  const InducedMdp mdp = induced_mdp(spec, agent, opponent_policy, mf);
  QTable q(mdp.n_states, mdp.n_actions, 0.0);
  std::vector<long long> visits(static_cast<size_t>(mdp.n_states) * mdp.n_actions, 0);
  std::mt19937_64 rng(cfg.seed);
  long long t = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    int s = uniform_index(rng, mdp.n_states);
    for (int step = 0; step < cfg.steps_per_episode; ++step, ++t) {
      const double eps = std::max(cfg.epsilon_min, cfg.epsilon0 / (1.0 + cfg.epsilon_decay * t));
      int a;
      if (uniform01(rng) < eps) {
        a = uniform_index(rng, mdp.n_actions);
      } else {
        auto row = q.row(s);
        a = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      }
      const double* krow = mdp.kernel.data() + (static_cast<size_t>(s) * mdp.n_actions + a) * mdp.n_states;
      int sn = sample_index(rng, {krow, static_cast<size_t>(mdp.n_states)});
      auto nrow = q.row(sn);
      double target = mdp.reward(s, a) + mdp.gamma * *std::max_element(nrow.begin(), nrow.end());
      long long& n = visits[static_cast<size_t>(s) * mdp.n_actions + a];
      ++n;
      const double lr = cfg.learning_rate_c / (cfg.learning_rate_c + static_cast<double>(n - 1));
      q(s, a) += lr * (target - q(s, a));
      s = sn;
    }
  }
  return q;
}

LipschitzConstants measure_lipschitz_constants(const GameSpec& spec, Agent agent,
                                               const MeanField* mf) {
  const Agent opp = opponent_of(agent);
  const GameTables tables = spec.tables_for(mf);
  const int S = spec.states_of(agent), So = spec.states_of(opp);
  const int A = spec.actions_of(agent), Ao = spec.actions_of(opp);

  LipschitzConstants out;

  auto joint_kernel_row = [&](int s, int so, int a, int b) {
    Vec row(static_cast<size_t>(S) * So, 0.0);
    for (int sn = 0; sn < S; ++sn) {
      const double p_own = spec.transition(tables, agent, s, a, b, sn);
      if (p_own == 0.0) continue;
      for (int son = 0; son < So; ++son)
        row[static_cast<size_t>(sn) * So + son] =
            p_own * spec.transition(tables, opp, so, b, a, son);
    }
    return row;
  };
  auto l1 = [](const Vec& x, const Vec& y) {
    double d = 0.0;
    for (size_t i = 0; i < x.size(); ++i) d += std::abs(x[i] - y[i]);
    return d;
  };

  // Single-argument flips; multi-argument differences follow by triangle
  // inequality with the same constant.
  for (int s = 0; s < S; ++s)
    for (int so = 0; so < So; ++so)
      for (int a = 0; a < A; ++a)
        for (int b = 0; b < Ao; ++b) {
          const double r = spec.reward(tables, agent, s, so, a, b);
          const Vec k = joint_kernel_row(s, so, a, b);
          for (int s2 = s + 1; s2 < S; ++s2) {
            out.d_reward = std::max(out.d_reward,
                                    std::abs(r - spec.reward(tables, agent, s2, so, a, b)));
            out.d_kernel = std::max(out.d_kernel, l1(k, joint_kernel_row(s2, so, a, b)));
          }
          for (int so2 = so + 1; so2 < So; ++so2) {
            out.d_reward = std::max(out.d_reward,
                                    std::abs(r - spec.reward(tables, agent, s, so2, a, b)));
            out.d_kernel = std::max(out.d_kernel, l1(k, joint_kernel_row(s, so2, a, b)));
          }
          for (int a2 = a + 1; a2 < A; ++a2) {
            out.d_reward = std::max(out.d_reward,
                                    std::abs(r - spec.reward(tables, agent, s, so, a2, b)));
            out.d_kernel = std::max(out.d_kernel, l1(k, joint_kernel_row(s, so, a2, b)));
          }
          for (int b2 = b + 1; b2 < Ao; ++b2) {
            out.d_reward = std::max(out.d_reward,
                                    std::abs(r - spec.reward(tables, agent, s, so, a, b2)));
            out.d_kernel = std::max(out.d_kernel, l1(k, joint_kernel_row(s, so, a, b2)));
          }
        }
  return out;
}

double regularized_br_lipschitz_bound(double d_reward, double d_kernel, double gamma, double rho) {
  const double half = gamma * d_kernel / 2.0;
  if (half >= 1.0) return std::numeric_limits<double>::infinity();
  return d_reward / rho *
         (1.0 + gamma / ((1.0 - gamma) * (1.0 - half)) + half / (1.0 - half));
}

}  // namespace stackmf
