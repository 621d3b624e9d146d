#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "mf_oracle.hpp"
#include "stackmf/meanfield.hpp"
#include "test_util.hpp"

using namespace stackmf;
namespace tu = stackmf::testutil;
using tu::mf_game;
using tu::population_pushforward;

TEST_CASE("pushforward is stationary for the identity kernel and matching policy") {
  std::mt19937_64 rng(51);
  GameSpec spec = mf_game(rng, 1, 3, 2, 2, 0.0);
  // Identity kernel: the population never moves.
  std::fill(spec.base.transition_follower.begin(), spec.base.transition_follower.end(), 0.0);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        spec.base.transition_follower[spec.transition_index(Agent::follower, s, a, b, s)] = 1.0;
  spec.tables_at_mf = nullptr;

  MeanField mu(3, 2);
  mu.mass = {0.1, 0.2, 0.25, 0.05, 0.3, 0.1};
  Policy piF(3, 2);
  Vec marg = mu.state_marginal();
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) piF.row(s)[a] = mu.at(s, a) / marg[s];
  Policy piL = uniform_policy(1, 2);
  MeanField next = mf_pushforward(mu, piL, piF, spec);
  CHECK(mean_field_l1(next, mu) <= 1e-12);
}

TEST_CASE("pushforward through a collapsing kernel lands on the absorbing state") {
  std::mt19937_64 rng(52);
  GameSpec spec = mf_game(rng, 1, 3, 2, 2, 0.0);
  std::fill(spec.base.transition_follower.begin(), spec.base.transition_follower.end(), 0.0);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        spec.base.transition_follower[spec.transition_index(Agent::follower, s, a, b, 0)] = 1.0;
  spec.tables_at_mf = nullptr;

  MeanField mu = uniform_mean_field(3, 2);
  Policy piF = tu::random_policy(rng, 3, 2);
  Policy piL = uniform_policy(1, 2);
  MeanField next = mf_pushforward(mu, piL, piF, spec);
  for (int a = 0; a < 2; ++a) CHECK(next.at(0, a) == doctest::Approx(piF.row(0)[a]));
  for (int s = 1; s < 3; ++s)
    for (int a = 0; a < 2; ++a) CHECK(next.at(s, a) == 0.0);
}

TEST_CASE("analytic pushforward matches a million-agent population sample") {
  std::mt19937_64 rng(53);
  GameSpec spec = mf_game(rng, 1, 3, 2, 2, 0.2);
  MeanField mu(3, 2);
  Vec pt = random_simplex_point(rng, 6);
  mu.mass = pt;
  Policy piL = tu::random_policy(rng, 1, 2);
  Policy piF = tu::random_policy(rng, 3, 2);
  MeanField analytic = mf_pushforward(mu, piL, piF, spec);
  MeanField sampled = population_pushforward(spec, mu, piL, piF, 0, 1000000, 999);
  CHECK(mean_field_l1(analytic, sampled) <= 0.01);
}

TEST_CASE("pushforward conserves mass after renormalization") {
  std::mt19937_64 rng(54);
  GameSpec spec = mf_game(rng, 2, 3, 2, 3, 0.1);
  MeanField mu(3, 3);
  mu.mass = random_simplex_point(rng, 9);
  MeanField next = mf_pushforward(mu, tu::random_policy(rng, 2, 2), tu::random_policy(rng, 3, 3),
                                  spec, 1);
  CHECK(next.total() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("inner loop exits in two iterations when nothing depends on the mean field") {
  std::mt19937_64 rng(55);
  // kernel_mixing = 0: every kernel row is the same base distribution, so the
  // pushforward is constant in mu.
  GameSpec spec = mf_game(rng, 1, 3, 2, 2, 0.0, 0.3, 0.0);
  Policy piL = tu::random_policy(rng, 1, 2);
  MFEConfig cfg;
  cfg.tol = 1e-10;
  cfg.br.tolerance = 1e-12;
  InnerResult inner = solve_inner(spec, piL, uniform_mean_field(3, 2), exact_variant(), cfg);
  CHECK(inner.converged);
  CHECK(inner.iterations <= 2);

  // The follower policy equals the plain two-agent best response (one leader
  // state, so the follower's effective-state packing coincides). The plain
  // solver wants the leader policy over its joint states, so broadcast the
  // single own-state row.
  Policy piL_joint(spec.effective_states(Agent::leader), spec.leader_actions);
  for (int e = 0; e < piL_joint.states(); ++e)
    std::copy(piL.row(0).begin(), piL.row(0).end(), piL_joint.row(e).begin());
  Policy plain = best_response(spec, Agent::follower, piL_joint, cfg.br);
  CHECK(policy_l1_distance(inner.follower_policy, plain) <= 1e-12);
}

TEST_CASE("inner loop stops immediately on a stationary start") {
  std::mt19937_64 rng(56);
  GameSpec spec = mf_game(rng, 1, 3, 2, 2, 0.0, 0.3, 0.0);
  // Identity kernel; strict dominance of action 0 everywhere.
  std::fill(spec.base.transition_follower.begin(), spec.base.transition_follower.end(), 0.0);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        spec.base.transition_follower[spec.transition_index(Agent::follower, s, a, b, s)] = 1.0;
  for (int s = 0; s < 3; ++s)
    for (int so = 0; so < 1; ++so)
      for (int b = 0; b < 2; ++b) {
        spec.base.reward_follower[spec.reward_index(Agent::follower, s, so, 0, b)] = 1.0;
        spec.base.reward_follower[spec.reward_index(Agent::follower, s, so, 1, b)] = 0.0;
      }
  spec.tables_at_mf = nullptr;

  MeanField mu0(3, 2);
  mu0.mass = {1.0 / 3, 0.0, 1.0 / 3, 0.0, 1.0 / 3, 0.0};  // all mass on action 0
  MFEConfig cfg;
  cfg.tol = 1e-12;
  InnerResult inner = solve_inner(spec, uniform_policy(1, 2), mu0, exact_variant(), cfg);
  CHECK(inner.converged);
  CHECK(inner.iterations == 1);
  CHECK(inner.final_residual <= 1e-14);
}

TEST_CASE("inner fixed point is independent of the starting mean field") {
  std::mt19937_64 rng(57);
  GameSpec spec = mf_game(rng, 1, 2, 2, 2, 0.15, 0.2, 0.3);
  Policy piL = tu::random_policy(rng, 1, 2);
  MFEConfig cfg;
  cfg.tol = 1e-9;
  cfg.br.tolerance = 1e-12;
  auto est = verify_mf_contraction(spec, 10, 4321, regularized_variant(0.5), cfg);
  REQUIRE(est.inner_condition);

  std::vector<MeanField> limits;
  for (int start = 0; start < 5; ++start) {
    MeanField mu0(2, 2);
    mu0.mass = random_simplex_point(rng, 4);
    InnerResult inner = solve_inner(spec, piL, mu0, regularized_variant(0.5), cfg);
    REQUIRE(inner.converged);
    limits.push_back(inner.mu);
  }
  for (size_t i = 0; i < limits.size(); ++i)
    for (size_t j = i + 1; j < limits.size(); ++j)
      CHECK(mean_field_l1(limits[i], limits[j]) <= 2.0 * cfg.tol * 10.0);
}

TEST_CASE("inner residuals decay geometrically under the measured contraction") {
  std::mt19937_64 rng(58);
  GameSpec spec = mf_game(rng, 1, 3, 2, 2, 0.3, 0.2, 0.5);
  MFEConfig cfg;
  cfg.tol = 1e-11;
  cfg.br.tolerance = 1e-13;
  auto est = verify_mf_contraction(spec, 12, 2222, regularized_variant(0.4), cfg);
  REQUIRE(est.inner_condition);
  InnerResult inner =
      solve_inner(spec, tu::random_policy(rng, 1, 2), uniform_mean_field(3, 2),
                  regularized_variant(0.4), cfg);
  REQUIRE(inner.converged);
  std::vector<double> ratios;
  for (size_t i = 1; i < inner.residuals.size(); ++i) {
    if (inner.residuals[i - 1] < 1e-14) break;
    ratios.push_back(inner.residuals[i] / inner.residuals[i - 1]);
  }
  REQUIRE(ratios.size() >= 3);
  std::sort(ratios.begin(), ratios.end());
  CHECK(ratios[ratios.size() / 2] <= est.inner_sum + 0.05);
}

TEST_CASE("solve_smfe on a constant-in-mu game agrees with solve_sse") {
  std::mt19937_64 rng(59);
  GameSpec spec = tu::random_game(rng, 1, 2, 3, 2, 0.9, 0.9, 1.0, 0.4, 0.4);
  // Leader tables independent of the follower's state and action.
  for (int a = 0; a < 3; ++a) {
    for (int so = 0; so < 2; ++so)
      for (int b = 0; b < 2; ++b)
        spec.base.reward_leader[spec.reward_index(Agent::leader, 0, so, a, b)] =
            spec.base.reward_leader[spec.reward_index(Agent::leader, 0, 0, a, 0)];
    for (int b = 1; b < 2; ++b)
      spec.base.transition_leader[spec.transition_index(Agent::leader, 0, a, b, 0)] =
          spec.base.transition_leader[spec.transition_index(Agent::leader, 0, a, 0, 0)];
  }
  spec.mf_dependent = true;

  const double rho = 0.4;
  MFEConfig mfe;
  mfe.tol = 1e-9;
  mfe.br.tolerance = 1e-12;
  MFEResult mf = solve_smfe(spec, uniform_policy(1, 3), uniform_mean_field(2, 2),
                            regularized_variant(rho), mfe);
  REQUIRE(mf.converged);

  SSEConfig sse_cfg;
  sse_cfg.tol = 1e-9;
  sse_cfg.br.tolerance = 1e-12;
  auto sse = solve_sse(spec, uniform_policy(2, 3), regularized_variant(rho), sse_cfg);
  REQUIRE(sse.converged);

  // Leader: both rows of the two-agent solve match the single mean-field row.
  for (int e = 0; e < 2; ++e)
    CHECK(tu::l1(sse.leader_policy.row(e), mf.leader_policy.row(0)) <= 2e-9 * 10);
  CHECK(policy_l1_distance(sse.follower_policy, mf.follower_policy) <= 2e-9 * 10);
}

TEST_CASE("dominant actions give the stationary distribution of the induced chain") {
  std::mt19937_64 rng(60);
  GameSpec spec = mf_game(rng, 1, 3, 2, 2, 0.0, 0.0, 1.0);
  spec.tables_at_mf = nullptr;
  // Action s % 2 strictly dominant at state s, independent of everything.
  for (int s = 0; s < 3; ++s)
    for (int b = 0; b < 2; ++b) {
      spec.base.reward_follower[spec.reward_index(Agent::follower, s, 0, s % 2, b)] = 2.0;
      spec.base.reward_follower[spec.reward_index(Agent::follower, s, 0, 1 - s % 2, b)] = 0.0;
    }
  Policy piL = tu::random_policy(rng, 1, 2);
  MFEConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_inner = 5000;
  InnerResult inner = solve_inner(spec, piL, uniform_mean_field(3, 2), exact_variant(), cfg);
  REQUIRE(inner.converged);
  for (int s = 0; s < 3; ++s) {
    CHECK(inner.follower_policy.row(s)[s % 2] == 1.0);
  }

  // Oracle: power iteration of the chain under the dominant actions.
  Vec nu(3, 1.0 / 3.0);
  for (int it = 0; it < 20000; ++it) {
    Vec next(3, 0.0);
    for (int s = 0; s < 3; ++s)
      for (int aL = 0; aL < 2; ++aL)
        for (int sn = 0; sn < 3; ++sn)
          next[sn] += nu[s] * piL.row(0)[aL] *
                      spec.transition(spec.base, Agent::follower, s, s % 2, aL, sn);
    nu = next;
  }
  for (int s = 0; s < 3; ++s)
    CHECK(inner.mu.at(s, s % 2) == doctest::Approx(nu[s]).epsilon(1e-6));
}

TEST_CASE("no deterministic follower deviation improves on the converged policy") {
  std::mt19937_64 rng(61);
  GameSpec spec = mf_game(rng, 1, 2, 2, 2, 0.1, 0.2, 0.3);
  const double rho = 0.5;
  MFEConfig cfg;
  cfg.tol = 1e-10;
  cfg.br.tolerance = 1e-13;
  MFEResult res = solve_smfe(spec, uniform_policy(1, 2), uniform_mean_field(2, 2),
                             regularized_variant(rho), cfg);
  REQUIRE(res.converged);
  CHECK(res.consistency_residual <= 2.0 * cfg.tol);
  CHECK(res.follower_optimality_residual <= 1e-8);
  CHECK(res.leader_optimality_residual <= 1e-8);

  InducedMdp fm = follower_mf_mdp(spec, res.leader_policy, res.mean_field, 0);
  Vec vstar = tu::policy_values_exact(fm, res.follower_policy, rho);
  for (const Policy& dev : tu::deterministic_policies(2, 2)) {
    Vec vdev = tu::policy_values_exact(fm, dev, rho);
    for (int s = 0; s < fm.n_states; ++s) CHECK(vdev[s] <= vstar[s] + 1e-5);
  }
}

TEST_CASE("verify_mf_contraction reports zero mean-field sensitivity for decoupled games") {
  std::mt19937_64 rng(62);
  GameSpec spec = mf_game(rng, 1, 2, 2, 2, 0.0, 0.2, 0.4);
  auto est = verify_mf_contraction(spec, 8, 11, regularized_variant(0.5));
  CHECK(est.d_follower_mu <= 1e-9);
  CHECK(est.pairs_used > 0);
}

TEST_CASE("verify_mf_contraction guards degenerate one-action perturbations") {
  std::mt19937_64 rng(63);
  GameSpec spec = mf_game(rng, 1, 2, 1, 1, 0.1);
  auto est = verify_mf_contraction(spec, 6, 12, exact_variant());
  CHECK(std::isfinite(est.d_mu_mu));
  CHECK(est.d_follower_leader == 0.0);  // identical one-action policies are skipped
}

TEST_CASE("regularized follower sensitivities stay within the formula bounds") {
  std::mt19937_64 rng(64);
  GameSpec spec = mf_game(rng, 1, 2, 2, 2, 0.2, 0.3, 0.3);
  const double rho = 0.5;
  MFEConfig cfg;
  cfg.br.tolerance = 1e-12;
  auto est = verify_mf_contraction(spec, 24, 13, regularized_variant(rho), cfg);

  // Action-argument constants at a frozen mean field.
  auto lip = measure_lipschitz_constants(spec, Agent::follower);
  // Mean-field finite differences measured over random pairs.
  double d_r_mu = 0.0;
  for (int i = 0; i < 24; ++i) {
    MeanField m1(2, 2), m2(2, 2);
    m1.mass = random_simplex_point(rng, 4);
    m2.mass = random_simplex_point(rng, 4);
    const double denom = mean_field_l1(m1, m2);
    if (denom < 1e-12) continue;
    GameTables t1 = spec.tables_for(&m1), t2 = spec.tables_for(&m2);
    for (size_t k = 0; k < t1.reward_follower.size(); ++k)
      d_r_mu = std::max(d_r_mu,
                        std::abs(t1.reward_follower[k] - t2.reward_follower[k]) / denom);
  }
  const double d_r = std::max(lip.d_reward, d_r_mu);
  const double bound = regularized_br_lipschitz_bound(d_r, lip.d_kernel, spec.gamma_follower, rho);
  CHECK(est.d_follower_leader <= bound + 1e-9);
  CHECK(est.d_follower_mu <= bound + 1e-9);
}
