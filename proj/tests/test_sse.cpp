#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "stackmf/sse.hpp"
#include "test_util.hpp"

using namespace stackmf;
namespace tu = stackmf::testutil;

namespace {

// Rewards and kernels depend only on each agent's own state and action, so
// both best responses are constant maps.
GameSpec decoupled_game(std::mt19937_64& rng, int SL = 2, int SF = 2, int AL = 2, int AF = 2) {
  GameSpec spec = tu::random_game(rng, SL, SF, AL, AF, 0.9, 0.9, 1.0, 0.0, 1.0);
  auto decouple = [&](Agent ag) {
    Vec& rew = ag == Agent::leader ? spec.base.reward_leader : spec.base.reward_follower;
    Vec& tra = ag == Agent::leader ? spec.base.transition_leader : spec.base.transition_follower;
    const int S = spec.states_of(ag), So = spec.states_of(opponent_of(ag));
    const int A = spec.actions_of(ag), Ao = spec.actions_of(opponent_of(ag));
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        for (int so = 0; so < So; ++so)
          for (int b = 0; b < Ao; ++b)
            rew[spec.reward_index(ag, s, so, a, b)] = rew[spec.reward_index(ag, s, 0, a, 0)];
        for (int b = 1; b < Ao; ++b)
          for (int sn = 0; sn < S; ++sn)
            tra[spec.transition_index(ag, s, a, b, sn)] =
                tra[spec.transition_index(ag, s, a, 0, sn)];
      }
  };
  decouple(Agent::leader);
  decouple(Agent::follower);
  return spec;
}

// One state per side, strict gap between the two actions for both agents,
// fully decoupled: the boltzmann iterates land at an exactly computable
// distance from the vertex equilibrium.
GameSpec gap_game(double gap = 0.5) {
  GameSpec spec;
  spec.leader_states = spec.follower_states = 1;
  spec.leader_actions = spec.follower_actions = 2;
  spec.gamma_leader = spec.gamma_follower = 0.9;
  spec.reward_bound = 2.0;
  spec.base.transition_leader = {1.0, 1.0, 1.0, 1.0};
  spec.base.transition_follower = {1.0, 1.0, 1.0, 1.0};
  // reward[s=0][so=0][a][b]: action 0 better by `gap`, independent of b.
  spec.base.reward_leader = {gap, gap, 0.0, 0.0};
  spec.base.reward_follower = {gap, gap, 0.0, 0.0};
  return spec;
}

}  // namespace

TEST_CASE("decoupled game: solver reaches the pair of independent optima") {
  std::mt19937_64 rng(21);
  GameSpec spec = decoupled_game(rng);
  SSEConfig cfg;
  cfg.tol = 1e-10;
  auto res = solve_sse(spec, uniform_policy(spec.effective_states(Agent::leader),
                                            spec.leader_actions),
                       exact_variant(), cfg);
  REQUIRE(res.converged);
  CHECK(res.iterations <= 2);
  CHECK(res.trajectory.back() <= cfg.tol);

  // Independent optima: best response to anything.
  Policy leader_opt = best_response(spec, Agent::leader,
                                    uniform_policy(spec.effective_states(Agent::follower),
                                                   spec.follower_actions));
  Policy follower_opt = best_response(spec, Agent::follower,
                                      uniform_policy(spec.effective_states(Agent::leader),
                                                     spec.leader_actions));
  CHECK(policy_l1_distance(res.leader_policy, leader_opt) <= 1e-12);
  CHECK(policy_l1_distance(res.follower_policy, follower_opt) <= 1e-12);

  // Starting at the optimum converges in a single round.
  auto warm = solve_sse(spec, leader_opt, exact_variant(), cfg);
  CHECK(warm.converged);
  CHECK(warm.iterations == 1);
}

TEST_CASE("one-state game with strictly dominant actions for both agents") {
  GameSpec spec = gap_game(0.5);
  auto res = solve_sse(spec, uniform_policy(1, 2), exact_variant());
  REQUIRE(res.converged);
  CHECK(res.leader_policy.row(0)[0] == 1.0);
  CHECK(res.follower_policy.row(0)[0] == 1.0);
}

TEST_CASE("regularized fixed point matches the exhaustive epsilon-net scan") {
  std::mt19937_64 rng(22);
  const double rho = 0.4;
  GameSpec spec = tu::random_game(rng, 1, 2, 2, 2, 0.85, 0.85, 1.0, 0.25, 0.5);

  SSEConfig cfg;
  cfg.tol = 1e-10;
  cfg.br.tolerance = 1e-12;
  auto est = verify_contraction(spec, regularized_variant(rho), 24, 9001, cfg);
  REQUIRE(est.product < 1.0);
  auto res = solve_sse(spec, uniform_policy(2, 2), regularized_variant(rho), cfg);
  REQUIRE(res.converged);

  // Scan every pair of leader net rows; evaluate the leader's regularized
  // value against the follower's regularized best response.
  EpsilonNet net = build_epsilon_net(2, 0.05);
  double best_value = -1e300;
  Policy best_leader;
  for (const Vec& row0 : net.points)
    for (const Vec& row1 : net.points) {
      Policy cand(2, 2);
      std::copy(row0.begin(), row0.end(), cand.row(0).begin());
      std::copy(row1.begin(), row1.end(), cand.row(1).begin());
      Policy fbr = regularized_best_response(spec, Agent::follower, cand, rho,
                                             BRConfig{1e-10, 1000000});
      InducedMdp lmdp = induced_mdp(spec, Agent::leader, fbr);
      Vec v = tu::policy_values_exact(lmdp, cand, rho);
      double value = 0.0;
      for (int s = 0; s < lmdp.n_states; ++s) value += v[s];
      if (value > best_value) {
        best_value = value;
        best_leader = cand;
      }
    }
  CHECK(policy_l1_distance(best_leader, res.leader_policy) <= 0.05);
}

TEST_CASE("gap profile records per-state gaps and a clamped floor") {
  GameSpec spec = gap_game(0.5);
  EpsilonNet opp_net = build_epsilon_net(2, 0.25);
  GapProfile profile = measure_gap_profile(spec, Agent::leader, opp_net, BRConfig{}, 1e-3);
  REQUIRE(profile.per_state_gap.size() == 1);
  // Decoupled rewards with a 0.5 gap: every opponent point induces the same
  // Q-gap, so phi equals it.
  CHECK(profile.phi == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(profile.per_state_gap[0] == doctest::Approx(0.5).epsilon(1e-8));

  // A fully tied game falls back to the configured floor.
  GameSpec tied = gap_game(0.0);
  GapProfile flat = measure_gap_profile(tied, Agent::leader, opp_net, BRConfig{}, 1e-3);
  CHECK(flat.phi == 1e-3);
  CHECK(std::isinf(flat.per_state_gap[0]));
}

TEST_CASE("boltzmann solve derives its temperature from the measured floor") {
  GameSpec spec = gap_game(0.5);
  SSEConfig cfg;
  cfg.tol = 0.0;
  cfg.max_outer = 1;
  cfg.br.tolerance = 1e-12;
  auto res = solve_sse(spec, uniform_policy(1, 2), boltzmann_variant(0.1), cfg);
  CHECK(res.phi == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(res.alpha_leader == doctest::Approx(std::log(10.0) / res.phi).epsilon(1e-9));
  CHECK(res.alpha_follower == res.alpha_leader);
}

TEST_CASE("verify_contraction measures zero for constant best responses") {
  std::mt19937_64 rng(23);
  GameSpec spec = decoupled_game(rng);
  auto est = verify_contraction(spec, exact_variant(), 12, 77);
  CHECK(est.d_leader == 0.0);
  CHECK(est.d_follower == 0.0);
  CHECK(est.contractive);
}

TEST_CASE("verify_contraction skips identical pairs") {
  std::mt19937_64 rng(24);
  GameSpec spec = tu::random_game(rng, 2, 2, 2, 2);
  Policy p = tu::random_policy(rng, spec.effective_states(Agent::leader), spec.leader_actions);
  Policy q = tu::random_policy(rng, spec.effective_states(Agent::follower), spec.follower_actions);
  auto est = verify_contraction_pairs(spec, regularized_variant(0.5), {{p, p}}, {{q, q}});
  CHECK(est.pairs_used == 0);
  CHECK(est.d_leader == 0.0);
  CHECK(est.d_follower == 0.0);
}

TEST_CASE("regularized contraction estimate stays below the formula constant") {
  std::mt19937_64 rng(25);
  GameSpec spec = tu::random_game(rng, 2, 2, 2, 2, 0.9, 0.9, 1.0, 0.4, 0.4);
  const double rho = 0.6;
  SSEConfig cfg;
  cfg.br.tolerance = 1e-12;
  auto est = verify_contraction(spec, regularized_variant(rho), 40, 4242, cfg);
  auto lipL = measure_lipschitz_constants(spec, Agent::leader);
  auto lipF = measure_lipschitz_constants(spec, Agent::follower);
  CHECK(est.d_leader <=
        regularized_br_lipschitz_bound(lipL.d_reward, lipL.d_kernel, spec.gamma_leader, rho) +
            1e-9);
  CHECK(est.d_follower <=
        regularized_br_lipschitz_bound(lipF.d_reward, lipF.d_kernel, spec.gamma_follower, rho) +
            1e-9);
}

TEST_CASE("theorem2_coefficient arithmetic") {
  CHECK(theorem2_coefficient(0.5, 0.5, 2, 2) == doctest::Approx(11.0));
  CHECK(theorem2_coefficient(0.0, 0.0, 2, 2) == doctest::Approx(6.0));
  CHECK(std::isinf(theorem2_coefficient(1.0, 1.0, 2, 2)));
}

TEST_CASE("error bound halves exactly when epsilon halves") {
  GameSpec spec = gap_game(0.5);
  auto rep = error_bound_check(spec, {0.2, 0.1}, 1e-3, 1e-12, 16, 5);
  REQUIRE(rep.applicable);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[1].bound == doctest::Approx(rep.rows[0].bound / 2.0).epsilon(1e-12));
}

TEST_CASE("constant-BR game keeps the measured boltzmann error within 2 epsilon") {
  GameSpec spec = gap_game(0.5);
  auto rep = error_bound_check(spec, {0.2, 0.1, 0.05}, 1e-3, 1e-12, 16, 6);
  REQUIRE(rep.applicable);
  CHECK(rep.d_leader <= 1e-9);
  CHECK(rep.d_follower <= 1e-9);
  for (const auto& row : rep.rows) {
    CHECK(row.measured_error <= 2.0 * row.epsilon + 1e-9);
    CHECK_FALSE(row.violated);
  }
}

TEST_CASE("fixed point residual: one extra round moves the leader by at most 2 tol") {
  std::mt19937_64 rng(26);
  GameSpec spec = tu::random_game(rng, 2, 2, 2, 2, 0.9, 0.9, 1.0, 0.3, 0.4);
  const double rho = 0.5;
  SSEConfig cfg;
  cfg.tol = 1e-9;
  cfg.br.tolerance = 1e-12;
  auto res = solve_sse(spec, uniform_policy(4, 2), regularized_variant(rho), cfg);
  REQUIRE(res.converged);
  Policy f = regularized_best_response(spec, Agent::follower, res.leader_policy, rho, cfg.br);
  Policy l = regularized_best_response(spec, Agent::leader, f, rho, cfg.br);
  CHECK(policy_l1_distance(l, res.leader_policy) <= 2.0 * cfg.tol);
}

TEST_CASE("trajectory length equals iterations and decays geometrically under contraction") {
  std::mt19937_64 rng(27);
  GameSpec spec = tu::random_game(rng, 2, 2, 2, 2, 0.9, 0.9, 1.0, 0.5, 0.4);
  const double rho = 0.35;
  SSEConfig cfg;
  cfg.tol = 1e-10;
  cfg.br.tolerance = 1e-13;
  auto est = verify_contraction(spec, regularized_variant(rho), 40, 31337, cfg);
  REQUIRE(est.product < 1.0);
  auto res = solve_sse(spec, uniform_policy(4, 2), regularized_variant(rho), cfg);
  REQUIRE(res.converged);
  CHECK(static_cast<int>(res.trajectory.size()) == res.iterations);
  std::vector<double> ratios;
  for (size_t i = 1; i + 1 < res.trajectory.size(); ++i) {
    if (res.trajectory[i - 1] < 1e-13) break;
    ratios.push_back(res.trajectory[i] / res.trajectory[i - 1]);
  }
  REQUIRE(ratios.size() >= 3);
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  CHECK(median <= est.product + 0.05);
}

TEST_CASE("exact and regularized solves are bitwise deterministic") {
  std::mt19937_64 rng(28);
  GameSpec spec = tu::random_game(rng, 2, 2, 2, 2, 0.9, 0.9, 1.0, 0.3, 0.5);
  SSEConfig cfg;
  for (SSEVariant v : {exact_variant(), regularized_variant(0.4)}) {
    auto a = solve_sse(spec, uniform_policy(4, 2), v, cfg);
    auto b = solve_sse(spec, uniform_policy(4, 2), v, cfg);
    CHECK(a.leader_policy.prob.data == b.leader_policy.prob.data);
    CHECK(a.follower_policy.prob.data == b.follower_policy.prob.data);
    CHECK(a.trajectory == b.trajectory);
  }
}

TEST_CASE("exceeding max_outer reports non-convergence with the best iterate") {
  std::mt19937_64 rng(29);
  GameSpec spec = tu::random_game(rng, 2, 2, 2, 2, 0.9, 0.9, 1.0, 0.6, 0.6);
  SSEConfig cfg;
  cfg.tol = 1e-14;
  cfg.max_outer = 1;
  auto res = solve_sse(spec, uniform_policy(4, 2), regularized_variant(0.3), cfg);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 1);
  CHECK(res.leader_policy.states() == 4);
}
