#include "stackmf/sse.hpp"

#include <algorithm>
#include <cmath>

#include "stackmf/rng.hpp"

namespace stackmf {

SSEVariant exact_variant() { return {}; }

SSEVariant boltzmann_variant(double epsilon, double gap_floor) {
  SSEVariant v;
  v.kind = SSEVariant::Kind::boltzmann;
  v.epsilon = epsilon;
  v.gap_floor = gap_floor;
  return v;
}

SSEVariant regularized_variant(double rho) {
  SSEVariant v;
  v.kind = SSEVariant::Kind::regularized;
  v.rho = rho;
  return v;
}

GapProfile measure_gap_profile(const GameSpec& spec, Agent agent, const EpsilonNet& opponent_net,
                               const BRConfig& cfg, double gap_floor) {
  const Agent opp = opponent_of(agent);
  const int opp_rows = spec.effective_states(opp);
  GapProfile profile;
  profile.per_state_gap.assign(spec.effective_states(agent),
                               std::numeric_limits<double>::infinity());
  // Net points give one row; the opponent policy repeats it at every state.
  for (const Vec& point : opponent_net.points) {
    Policy opp_policy(opp_rows, opponent_net.action_count);
    for (int s = 0; s < opp_rows; ++s)
      std::copy(point.begin(), point.end(), opp_policy.row(s).begin());
    BRConfig plain = cfg;
    plain.regularizer = {};
    auto vi = value_iteration(induced_mdp(spec, agent, opp_policy, nullptr), plain);
    for (int s = 0; s < vi.q.rows; ++s)
      profile.per_state_gap[s] = std::min(profile.per_state_gap[s], action_gap(vi.q.row(s)));
  }
  double min_gap = std::numeric_limits<double>::infinity();
  for (double g : profile.per_state_gap)
    if (std::isfinite(g)) min_gap = std::min(min_gap, g);
  profile.phi = std::isfinite(min_gap) ? std::max(min_gap, gap_floor) : gap_floor;
  return profile;
}

Policy variant_best_response(const GameSpec& spec, Agent agent, const Policy& opponent,
                             const SSEVariant& variant, const BRConfig& cfg,
                             const EpsilonNet* own_net, double alpha, const MeanField* mf) {
  switch (variant.kind) {
    case SSEVariant::Kind::exact:
      return best_response(spec, agent, opponent, cfg, mf);
    case SSEVariant::Kind::regularized:
      return regularized_best_response(spec, agent, opponent, variant.rho, cfg, mf);
    case SSEVariant::Kind::boltzmann: {
      BRConfig plain = cfg;
      plain.regularizer = {};
      auto vi = value_iteration(induced_mdp(spec, agent, opponent, mf), plain);
      if (!vi.converged)
        throw SolveError("boltzmann best response: value iteration did not converge");
      Policy p(vi.q.rows, vi.q.cols);
      for (int s = 0; s < vi.q.rows; ++s) {
        Vec soft = softmax(vi.q.row(s), alpha);
        Vec projected = own_net ? project(soft, *own_net) : soft;
        std::copy(projected.begin(), projected.end(), p.row(s).begin());
      }
      return p;
    }
  }
  throw std::logic_error("unreachable");
}

SSEResult solve_sse(const GameSpec& spec, const Policy& initial_leader_policy,
                    const SSEVariant& variant, const SSEConfig& cfg) {
  initial_leader_policy.validate();
  if (initial_leader_policy.states() != spec.effective_states(Agent::leader) ||
      initial_leader_policy.actions() != spec.leader_actions)
    throw std::invalid_argument("solve_sse: initial leader policy has wrong dimensions");
  if (cfg.max_outer < 1) throw std::invalid_argument("solve_sse: max_outer must be at least 1");

  SSEResult res;
  res.variant = variant;

  std::optional<EpsilonNet> net_leader, net_follower;
  double alpha_L = variant.alpha_leader, alpha_F = variant.alpha_follower;
  if (variant.kind == SSEVariant::Kind::boltzmann) {
    net_leader = build_epsilon_net(spec.leader_actions, variant.epsilon);
    net_follower = build_epsilon_net(spec.follower_actions, variant.epsilon);
    if (alpha_L <= 0.0 || alpha_F <= 0.0) {
      GapProfile leader_gaps =
          measure_gap_profile(spec, Agent::leader, *net_follower, cfg.br, variant.gap_floor);
      GapProfile follower_gaps =
          measure_gap_profile(spec, Agent::follower, *net_leader, cfg.br, variant.gap_floor);
      const double phi = std::min(leader_gaps.phi, follower_gaps.phi);
      res.phi = phi;
      const double a = temperature_for(variant.epsilon, phi);
      if (alpha_L <= 0.0) alpha_L = a;
      if (alpha_F <= 0.0) alpha_F = a;
    }
  }
  res.alpha_leader = alpha_L;
  res.alpha_follower = alpha_F;

  Policy leader = initial_leader_policy;
  Policy follower;
  for (int k = 0; k < cfg.max_outer; ++k) {
    follower = variant_best_response(spec, Agent::follower, leader, variant, cfg.br,
                                     net_follower ? &*net_follower : nullptr, alpha_F);
    Policy next = variant_best_response(spec, Agent::leader, follower, variant, cfg.br,
                                        net_leader ? &*net_leader : nullptr, alpha_L);
    const double change = policy_l1_distance(next, leader);
    leader = std::move(next);
    res.trajectory.push_back(change);
    res.leader_values.push_back(mean_value(spec, Agent::leader, leader, follower));
    res.follower_values.push_back(mean_value(spec, Agent::follower, follower, leader));
    res.iterations = k + 1;
    if (change <= cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.leader_policy = std::move(leader);
  res.follower_policy = std::move(follower);
  return res;
}

double mean_value(const GameSpec& spec, Agent agent, const Policy& own, const Policy& opponent,
                  double tol, const MeanField* mf) {
  const InducedMdp mdp = induced_mdp(spec, agent, opponent, mf);
  if (own.states() != mdp.n_states || own.actions() != mdp.n_actions)
    throw std::invalid_argument("mean_value: policy does not match the induced chain");
  Vec v(mdp.n_states, 0.0), next(mdp.n_states, 0.0);
  for (int guard = 0; guard < 1000000; ++guard) {
    double diff = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      double acc = 0.0;
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double w = own.row(s)[a];
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
  double mean = 0.0;
  for (double x : v) mean += x;
  return mean / mdp.n_states;
}

namespace {

Policy random_policy(std::mt19937_64& rng, int states, int actions) {
  Policy p(states, actions);
  for (int s = 0; s < states; ++s) {
    Vec row = random_simplex_point(rng, actions);
    std::copy(row.begin(), row.end(), p.row(s).begin());
  }
  return p;
}

}  // namespace

ContractionEstimate verify_contraction_pairs(
    const GameSpec& spec, const SSEVariant& variant,
    const std::vector<std::pair<Policy, Policy>>& follower_br_inputs,
    const std::vector<std::pair<Policy, Policy>>& leader_br_inputs, const SSEConfig& cfg) {
  std::optional<EpsilonNet> net_leader, net_follower;
  double alpha = 0.0;
  if (variant.kind == SSEVariant::Kind::boltzmann) {
    net_leader = build_epsilon_net(spec.leader_actions, variant.epsilon);
    net_follower = build_epsilon_net(spec.follower_actions, variant.epsilon);
    alpha = variant.alpha_leader > 0.0
                ? variant.alpha_leader
                : temperature_for(variant.epsilon, variant.gap_floor);
  }

  ContractionEstimate est;
  auto measure = [&](Agent agent, const std::vector<std::pair<Policy, Policy>>& pairs,
                     const EpsilonNet* own_net) {
    double d = 0.0;
    for (const auto& [p1, p2] : pairs) {
      const double denom = policy_l1_distance(p1, p2);
      if (denom < 1e-15) continue;  // identical pair, skip
      Policy b1 = variant_best_response(spec, agent, p1, variant, cfg.br, own_net, alpha);
      Policy b2 = variant_best_response(spec, agent, p2, variant, cfg.br, own_net, alpha);
      d = std::max(d, policy_l1_distance(b1, b2) / denom);
      ++est.pairs_used;
    }
    return d;
  };
  est.d_follower = measure(Agent::follower, follower_br_inputs, net_follower ? &*net_follower : nullptr);
  est.d_leader = measure(Agent::leader, leader_br_inputs, net_leader ? &*net_leader : nullptr);
  est.product = est.d_leader * est.d_follower;
  est.contractive = est.product < 1.0;
  return est;
}

ContractionEstimate verify_contraction(const GameSpec& spec, const SSEVariant& variant,
                                       int sample_pairs, uint64_t seed, const SSEConfig& cfg) {
  if (sample_pairs < 2) throw std::invalid_argument("verify_contraction: need at least 2 pairs");
  std::mt19937_64 rng(seed);
  const int eL = spec.effective_states(Agent::leader);
  const int eF = spec.effective_states(Agent::follower);
  std::vector<std::pair<Policy, Policy>> for_follower, for_leader;
  for (int i = 0; i < sample_pairs; ++i) {
    for_follower.push_back({random_policy(rng, eL, spec.leader_actions),
                            random_policy(rng, eL, spec.leader_actions)});
    for_leader.push_back({random_policy(rng, eF, spec.follower_actions),
                          random_policy(rng, eF, spec.follower_actions)});
  }
  return verify_contraction_pairs(spec, variant, for_follower, for_leader, cfg);
}

double theorem2_coefficient(double d_leader, double d_follower, int leader_actions,
                            int follower_actions) {
  const double product = d_leader * d_follower;
  if (product >= 1.0) return std::numeric_limits<double>::infinity();
  return (1.0 + d_leader + 2.0 * leader_actions + 2.0 * d_leader * follower_actions) /
             (1.0 - product) +
         1.0;
}

ErrorBoundReport error_bound_check(const GameSpec& spec, const std::vector<double>& epsilons,
                                   double reference_rho, double tol, int contraction_pairs,
                                   uint64_t seed) {
  ErrorBoundReport rep;

  // Constants from the only best-response map with a provable Lipschitz
  // bound; the reference equilibrium uses the same regularization.
  auto est = verify_contraction(spec, regularized_variant(reference_rho), contraction_pairs, seed);
  rep.d_leader = est.d_leader;
  rep.d_follower = est.d_follower;
  rep.product = est.product;
  if (rep.product >= 1.0) {
    rep.applicable = false;
    return rep;
  }
  rep.applicable = true;

  SSEConfig ref_cfg;
  ref_cfg.tol = 1e-10;
  ref_cfg.max_outer = 5000;
  ref_cfg.br.tolerance = tol;
  auto ref = solve_sse(spec, uniform_policy(spec.effective_states(Agent::leader), spec.leader_actions),
                       regularized_variant(reference_rho), ref_cfg);
  rep.reference_leader_policy = ref.leader_policy;

  const double coeff =
      theorem2_coefficient(rep.d_leader, rep.d_follower, spec.leader_actions, spec.follower_actions);

  for (double eps : epsilons) {
    int K = 1;
    if (rep.product > 1e-12)
      K = std::max(1, static_cast<int>(std::ceil(std::log(2.0 / eps) / std::log(1.0 / rep.product))));
    SSEVariant v = boltzmann_variant(eps);
    SSEConfig run_cfg;
    run_cfg.tol = 0.0;  // run exactly K rounds
    run_cfg.max_outer = K;
    run_cfg.br.tolerance = tol;
    auto run = solve_sse(spec, uniform_policy(spec.effective_states(Agent::leader), spec.leader_actions),
                         v, run_cfg);
    ErrorBoundRow row;
    row.epsilon = eps;
    row.phi = run.phi;
    row.alpha = run.alpha_leader;
    row.iterations = K;
    row.measured_error = policy_l1_distance(run.leader_policy, ref.leader_policy);
    row.bound = coeff * eps;
    row.violated = row.measured_error > row.bound;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace stackmf
