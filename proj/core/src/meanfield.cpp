#include "stackmf/meanfield.hpp"

#include <algorithm>
#include <cmath>

#include "stackmf/csv.hpp"
#include "stackmf/rng.hpp"

namespace stackmf {

MeanField mf_pushforward(const MeanField& mu, const Policy& leader_policy,
                         const Policy& follower_policy, const GameSpec& spec,
                         int leader_anchor_state) {
  if (!spec.mf_dependent)
    throw std::invalid_argument("mf_pushforward: game is not mean-field dependent");
  const int SF = spec.follower_states, AF = spec.follower_actions, AL = spec.leader_actions;
  if (mu.states != SF || mu.actions != AF)
    throw std::invalid_argument("mf_pushforward: mean field dimensions do not match the game");
  if (follower_policy.states() != SF || follower_policy.actions() != AF)
    throw std::invalid_argument("mf_pushforward: follower policy must be own-state indexed");
  if (leader_policy.actions() != AL)
    throw std::invalid_argument("mf_pushforward: leader policy has wrong action count");

  const GameTables tables = spec.tables_for(&mu);
  auto leader_row = leader_policy.row(leader_anchor_state);

  Vec next_state_mass(SF, 0.0);
  for (int s = 0; s < SF; ++s)
    for (int a = 0; a < AF; ++a) {
      const double m = mu.at(s, a);
      if (m == 0.0) continue;
      for (int aL = 0; aL < AL; ++aL) {
        const double w = m * leader_row[aL];
        if (w == 0.0) continue;
        for (int sn = 0; sn < SF; ++sn)
          next_state_mass[sn] += w * spec.transition(tables, Agent::follower, s, a, aL, sn);
      }
    }

  MeanField out(SF, AF);
  for (int sn = 0; sn < SF; ++sn)
    for (int an = 0; an < AF; ++an) out.at(sn, an) = next_state_mass[sn] * follower_policy.row(sn)[an];

  const double drift = std::abs(out.total() - 1.0);
  if (drift > 1e-10)
    throw std::runtime_error("mf_pushforward: mass drift " + std::to_string(drift) +
                             " exceeds 1e-10; check kernel rows");
  const double total = out.total();
  for (double& v : out.mass) v /= total;
  return out;
}

InducedMdp follower_mf_mdp(const GameSpec& spec, const Policy& leader_policy, const MeanField& mu,
                           int leader_anchor_state) {
  const int SF = spec.follower_states, AF = spec.follower_actions, AL = spec.leader_actions;
  const GameTables tables = spec.tables_for(&mu);
  auto leader_row = leader_policy.row(leader_anchor_state);

  InducedMdp mdp;
  mdp.n_states = SF;
  mdp.n_actions = AF;
  mdp.gamma = spec.gamma_follower;
  mdp.reward = Matrix(SF, AF);
  mdp.kernel.assign(static_cast<size_t>(SF) * AF * SF, 0.0);
  for (int s = 0; s < SF; ++s)
    for (int a = 0; a < AF; ++a) {
      double r = 0.0;
      for (int aL = 0; aL < AL; ++aL) {
        const double w = leader_row[aL];
        if (w == 0.0) continue;
        r += w * spec.reward(tables, Agent::follower, s, leader_anchor_state, a, aL);
        for (int sn = 0; sn < SF; ++sn)
          mdp.p(s, a, sn) += w * spec.transition(tables, Agent::follower, s, a, aL, sn);
      }
      mdp.reward(s, a) = r;
    }
  return mdp;
}

InducedMdp leader_mf_mdp(const GameSpec& spec, const Policy& follower_policy, const MeanField& mu) {
  const int SL = spec.leader_states, AL = spec.leader_actions;
  const int SF = spec.follower_states, AF = spec.follower_actions;
  if (follower_policy.states() != SF || follower_policy.actions() != AF)
    throw std::invalid_argument("leader_mf_mdp: follower policy must be own-state indexed");
  const GameTables tables = spec.tables_for(&mu);
  const Vec marginal = mu.state_marginal();

  InducedMdp mdp;
  mdp.n_states = SL;
  mdp.n_actions = AL;
  mdp.gamma = spec.gamma_leader;
  mdp.reward = Matrix(SL, AL);
  mdp.kernel.assign(static_cast<size_t>(SL) * AL * SL, 0.0);
  for (int sL = 0; sL < SL; ++sL)
    for (int aL = 0; aL < AL; ++aL) {
      double r = 0.0;
      for (int s = 0; s < SF; ++s) {
        if (marginal[s] == 0.0) continue;
        for (int aF = 0; aF < AF; ++aF) {
          const double w = marginal[s] * follower_policy.row(s)[aF];
          if (w == 0.0) continue;
          r += w * spec.reward(tables, Agent::leader, sL, s, aL, aF);
          for (int sn = 0; sn < SL; ++sn)
            mdp.p(sL, aL, sn) += w * spec.transition(tables, Agent::leader, sL, aL, aF, sn);
        }
      }
      mdp.reward(sL, aL) = r;
    }
  return mdp;
}

namespace {

Policy policy_from_q(const QTable& q, const SSEVariant& variant) {
  switch (variant.kind) {
    case SSEVariant::Kind::exact:
      return greedy_policy(q);
    case SSEVariant::Kind::regularized:
      return soft_policy(q, variant.rho);
    case SSEVariant::Kind::boltzmann: {
      const double alpha = variant.alpha_leader > 0.0
                               ? variant.alpha_leader
                               : temperature_for(variant.epsilon, variant.gap_floor);
      EpsilonNet net = build_epsilon_net(q.cols, variant.epsilon);
      Policy p(q.rows, q.cols);
      for (int s = 0; s < q.rows; ++s) {
        Vec soft = softmax(q.row(s), alpha);
        Vec proj = project(soft, net);
        std::copy(proj.begin(), proj.end(), p.row(s).begin());
      }
      return p;
    }
  }
  throw std::logic_error("unreachable");
}

BRConfig variant_br_config(const SSEVariant& variant, const BRConfig& base) {
  BRConfig cfg = base;
  cfg.regularizer = variant.kind == SSEVariant::Kind::regularized
                        ? Regularizer{Regularizer::Kind::entropy, variant.rho}
                        : Regularizer{};
  return cfg;
}

}  // namespace

Policy mf_best_response(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                        const MeanField& mu, const SSEVariant& variant, const MFEConfig& cfg) {
  const InducedMdp mdp = agent == Agent::follower
                             ? follower_mf_mdp(spec, opponent_policy, mu, cfg.leader_anchor_state)
                             : leader_mf_mdp(spec, opponent_policy, mu);
  auto vi = value_iteration(mdp, variant_br_config(variant, cfg.br));
  if (!vi.converged)
    throw SolveError("mf_best_response: value iteration stopped at residual " +
                     std::to_string(vi.residual));
  return policy_from_q(vi.q, variant);
}

InnerResult solve_inner(const GameSpec& spec, const Policy& leader_policy, const MeanField& mu0,
                        const SSEVariant& follower_variant, const MFEConfig& cfg) {
  if (!spec.mf_dependent) throw std::invalid_argument("solve_inner: game is not mean-field dependent");
  if (cfg.max_inner < 1) throw std::invalid_argument("solve_inner: max_inner must be at least 1");
  mu0.validate();
  const double tol = cfg.effective_inner_tol();

  InnerResult res;
  MeanField mu = mu0;
  for (int tau = 0; tau < cfg.max_inner; ++tau) {
    Policy pi = mf_best_response(spec, Agent::follower, leader_policy, mu, follower_variant, cfg);
    MeanField next = mf_pushforward(mu, leader_policy, pi, spec, cfg.leader_anchor_state);
    const double r = mean_field_l1(next, mu);
    res.residuals.push_back(r);
    res.iterations = tau + 1;
    res.follower_policy = std::move(pi);
    if (r <= tol) {
      // Return the mean field that induced the returned policy; one more
      // pushforward then moves it by at most the exit residual.
      res.mu = std::move(mu);
      res.converged = true;
      res.final_residual = r;
      return res;
    }
    mu = std::move(next);
  }
  res.mu = std::move(mu);
  res.converged = false;
  res.final_residual = res.residuals.empty() ? 0.0 : res.residuals.back();
  return res;
}

Vec value_of_policy(const InducedMdp& mdp, const Policy& policy, const Regularizer& reg,
                    double tol) {
  Vec bonus(mdp.n_states, 0.0);
  if (reg.kind == Regularizer::Kind::entropy)
    for (int s = 0; s < mdp.n_states; ++s) bonus[s] = reg.weight * entropy(policy.row(s));
  Vec v(mdp.n_states, 0.0), next(mdp.n_states, 0.0);
  for (int guard = 0; guard < 2000000; ++guard) {
    double diff = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      double acc = bonus[s];
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double w = policy.row(s)[a];
        if (w == 0.0) continue;
        double q = mdp.reward(s, a);
        const double* row = mdp.kernel.data() + (static_cast<size_t>(s) * mdp.n_actions + a) * mdp.n_states;
        for (int sn = 0; sn < mdp.n_states; ++sn) q += mdp.gamma * row[sn] * v[sn];
        acc += w * q;
      }
      next[s] = acc;
      diff = std::max(diff, std::abs(acc - v[s]));
    }
    std::swap(v, next);
    if (diff <= tol) break;
  }
  return v;
}

Vec optimal_values(const InducedMdp& mdp, const Regularizer& reg, double tol) {
  BRConfig cfg;
  cfg.tolerance = tol;
  cfg.max_iterations = 2000000;
  cfg.regularizer = reg;
  auto vi = value_iteration(mdp, cfg);
  Vec v(mdp.n_states, 0.0);
  for (int s = 0; s < mdp.n_states; ++s) {
    if (reg.kind == Regularizer::Kind::entropy) {
      const double rho = reg.weight;
      double top = *std::max_element(vi.q.row(s).begin(), vi.q.row(s).end());
      double z = 0.0;
      for (double q : vi.q.row(s)) z += std::exp((q - top) / rho);
      v[s] = top + rho * std::log(z);
    } else {
      v[s] = *std::max_element(vi.q.row(s).begin(), vi.q.row(s).end());
    }
  }
  return v;
}

MFEResult solve_smfe(const GameSpec& spec, const Policy& initial_leader_policy,
                     const MeanField& mu0, const SSEVariant& variant, const MFEConfig& cfg) {
  if (!spec.mf_dependent) throw std::invalid_argument("solve_smfe: game is not mean-field dependent");
  if (initial_leader_policy.states() != spec.leader_states ||
      initial_leader_policy.actions() != spec.leader_actions)
    throw std::invalid_argument("solve_smfe: leader policy must be own-state indexed");
  if (cfg.max_outer < 1) throw std::invalid_argument("solve_smfe: max_outer must be at least 1");
  initial_leader_policy.validate();

  MFEResult res;
  Policy leader = initial_leader_policy;
  Policy follower;
  MeanField mu = mu0;
  for (int k = 0; k < cfg.max_outer; ++k) {
    InnerResult inner = solve_inner(spec, leader, mu, variant, cfg);
    follower = inner.follower_policy;
    mu = inner.mu;
    res.inner_iteration_counts.push_back(inner.iterations);
    Policy next = mf_best_response(spec, Agent::leader, follower, mu, variant, cfg);
    const double change = policy_l1_distance(next, leader);
    leader = std::move(next);
    res.leader_trajectory.push_back(change);
    res.outer_iterations = k + 1;
    if (change <= cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.leader_policy = std::move(leader);
  res.follower_policy = follower;
  res.mean_field = mu;

  // Equilibrium diagnostics at the returned tuple.
  MeanField pushed = mf_pushforward(mu, res.leader_policy, follower, spec, cfg.leader_anchor_state);
  res.consistency_residual = mean_field_l1(pushed, mu);
  if (res.converged && res.consistency_residual > cfg.effective_inner_tol())
    res.converged = res.consistency_residual <= cfg.effective_inner_tol();

  const Regularizer reg = variant.kind == SSEVariant::Kind::regularized
                              ? Regularizer{Regularizer::Kind::entropy, variant.rho}
                              : Regularizer{};
  {
    const InducedMdp fm = follower_mf_mdp(spec, res.leader_policy, mu, cfg.leader_anchor_state);
    const Vec best = optimal_values(fm, reg);
    const Vec actual = value_of_policy(fm, follower, reg);
    double worst = 0.0;
    for (size_t i = 0; i < best.size(); ++i) worst = std::max(worst, best[i] - actual[i]);
    res.follower_optimality_residual = worst;
  }
  {
    const InducedMdp lm = leader_mf_mdp(spec, follower, mu);
    const Vec best = optimal_values(lm, reg);
    const Vec actual = value_of_policy(lm, res.leader_policy, reg);
    double worst = 0.0;
    for (size_t i = 0; i < best.size(); ++i) worst = std::max(worst, best[i] - actual[i]);
    res.leader_optimality_residual = worst;
  }
  return res;
}

namespace {

Policy random_own_policy(std::mt19937_64& rng, int states, int actions) {
  Policy p(states, actions);
  for (int s = 0; s < states; ++s) {
    Vec row = random_simplex_point(rng, actions);
    std::copy(row.begin(), row.end(), p.row(s).begin());
  }
  return p;
}

MeanField random_mean_field(std::mt19937_64& rng, int states, int actions) {
  MeanField mu(states, actions);
  Vec point = random_simplex_point(rng, states * actions);
  mu.mass = point;
  return mu;
}

}  // namespace

MfContractionEstimate verify_mf_contraction(const GameSpec& spec, int samples, uint64_t seed,
                                            const SSEVariant& variant, const MFEConfig& cfg) {
  if (samples < 2) throw std::invalid_argument("verify_mf_contraction: need at least 2 samples");
  std::mt19937_64 rng(seed);
  const int SL = spec.leader_states, AL = spec.leader_actions;
  const int SF = spec.follower_states, AF = spec.follower_actions;

  MfContractionEstimate est;
  auto ratio_max = [&est](double& slot, double num, double den) {
    if (den < 1e-15) return;  // identical pair, skip
    slot = std::max(slot, num / den);
    ++est.pairs_used;
  };

  for (int i = 0; i < samples; ++i) {
    const Policy piL1 = random_own_policy(rng, SL, AL);
    const Policy piL2 = random_own_policy(rng, SL, AL);
    const Policy piF1 = random_own_policy(rng, SF, AF);
    const Policy piF2 = random_own_policy(rng, SF, AF);
    const MeanField mu1 = random_mean_field(rng, SF, AF);
    const MeanField mu2 = random_mean_field(rng, SF, AF);

    // Follower best response, one argument at a time.
    {
      Policy b1 = mf_best_response(spec, Agent::follower, piL1, mu1, variant, cfg);
      Policy b2 = mf_best_response(spec, Agent::follower, piL2, mu1, variant, cfg);
      ratio_max(est.d_follower_leader, policy_l1_distance(b1, b2), policy_l1_distance(piL1, piL2));
      Policy b3 = mf_best_response(spec, Agent::follower, piL1, mu2, variant, cfg);
      ratio_max(est.d_follower_mu, policy_l1_distance(b1, b3), mean_field_l1(mu1, mu2));
    }
    // Pushforward, one argument at a time.
    {
      MeanField g1 = mf_pushforward(mu1, piL1, piF1, spec, cfg.leader_anchor_state);
      MeanField g2 = mf_pushforward(mu2, piL1, piF1, spec, cfg.leader_anchor_state);
      ratio_max(est.d_mu_mu, mean_field_l1(g1, g2), mean_field_l1(mu1, mu2));
      MeanField g3 = mf_pushforward(mu1, piL2, piF1, spec, cfg.leader_anchor_state);
      ratio_max(est.d_mu_leader, mean_field_l1(g1, g3), policy_l1_distance(piL1, piL2));
      MeanField g4 = mf_pushforward(mu1, piL1, piF2, spec, cfg.leader_anchor_state);
      ratio_max(est.d_mu_follower, mean_field_l1(g1, g4), policy_l1_distance(piF1, piF2));
    }
    // Leader best response.
    {
      Policy b1 = mf_best_response(spec, Agent::leader, piF1, mu1, variant, cfg);
      Policy b2 = mf_best_response(spec, Agent::leader, piF2, mu1, variant, cfg);
      ratio_max(est.d_leader_follower, policy_l1_distance(b1, b2), policy_l1_distance(piF1, piF2));
      Policy b3 = mf_best_response(spec, Agent::leader, piF1, mu2, variant, cfg);
      ratio_max(est.d_leader_mu, policy_l1_distance(b1, b3), mean_field_l1(mu1, mu2));
    }
  }

  est.inner_sum = est.d_mu_mu + est.d_mu_follower * est.d_follower_mu;
  est.inner_condition = est.inner_sum < 1.0;
  const double denom = 1.0 - (est.d_follower_mu + est.d_mu_mu + est.d_mu_follower);
  if (denom > 0.0) {
    est.outer_ratio = (est.d_follower_leader + est.d_mu_leader) / denom;
    est.outer_condition = est.outer_ratio < 1.0;
  } else {
    est.outer_ratio = std::numeric_limits<double>::infinity();
    est.outer_condition = false;
  }
  return est;
}

void export_mean_field_csv(const MeanField& mu, const std::string& path) {
  CsvWriter w(path);
  w.write_header({"state", "action", "mass"});
  for (int s = 0; s < mu.states; ++s)
    for (int a = 0; a < mu.actions; ++a) {
      w.begin_row();
      w.field(s);
      w.field(a);
      w.field(mu.at(s, a));
      w.end_row();
    }
}

}  // namespace stackmf
