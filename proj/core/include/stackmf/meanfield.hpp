#pragma once

#include <vector>

#include "stackmf/sse.hpp"

namespace stackmf {

/// Mean-field solves use own-state-indexed policies (leader rows = S_L,
/// follower rows = S_F). The leader's state is held fixed at an anchor value
/// while an inner loop runs; the representative follower folds the leader's
/// action distribution at that anchor into its environment, and the leader
/// averages the population via the frozen mean field.
struct MFEConfig {
  double tol = 1e-8;
  double inner_tol = 0.0;  // 0 = use tol
  int max_outer = 200;
  int max_inner = 500;
  int leader_anchor_state = 0;
  BRConfig br;

  double effective_inner_tol() const { return inner_tol > 0.0 ? inner_tol : tol; }
};

/// Analytic pushforward of the population distribution:
///   mu'(s',a') = sum_{s,a} mu(s,a) E_{aL ~ piL(.|anchor)}[P_F(s'|s,a,aL,mu)] piF(a'|s').
/// Mass drift before renormalization must stay below 1e-10.
MeanField mf_pushforward(const MeanField& mu, const Policy& leader_policy,
                         const Policy& follower_policy, const GameSpec& spec,
                         int leader_anchor_state = 0);

/// The representative follower's single-agent view at a frozen mean field and
/// anchored leader state.
InducedMdp follower_mf_mdp(const GameSpec& spec, const Policy& leader_policy, const MeanField& mu,
                           int leader_anchor_state);

/// The leader's single-agent view: the population's states come from the
/// frozen mean field's state marginal and its actions from the follower
/// policy.
InducedMdp leader_mf_mdp(const GameSpec& spec, const Policy& follower_policy, const MeanField& mu);

/// Variant best response on one of the mean-field MDP views.
Policy mf_best_response(const GameSpec& spec, Agent agent, const Policy& opponent_policy,
                        const MeanField& mu, const SSEVariant& variant, const MFEConfig& cfg);

struct InnerResult {
  Policy follower_policy;
  MeanField mu;
  int iterations = 0;
  Vec residuals;  // per-iteration l1 mean-field change
  bool converged = false;
  double final_residual = 0.0;
};

/// Alternates follower best response and the pushforward until the mean
/// field moves by at most the inner tolerance; returns the policy together
/// with the mean field that induced it.
InnerResult solve_inner(const GameSpec& spec, const Policy& leader_policy, const MeanField& mu0,
                        const SSEVariant& follower_variant, const MFEConfig& cfg);

struct MFEResult {
  Policy leader_policy;    // S_L rows
  Policy follower_policy;  // S_F rows
  MeanField mean_field;
  int outer_iterations = 0;
  std::vector<int> inner_iteration_counts;
  Vec leader_trajectory;  // per-outer l1 change of the leader policy
  bool converged = false;
  double consistency_residual = 0.0;
  double follower_optimality_residual = 0.0;
  double leader_optimality_residual = 0.0;
};

MFEResult solve_smfe(const GameSpec& spec, const Policy& initial_leader_policy,
                     const MeanField& mu0, const SSEVariant& variant, const MFEConfig& cfg = {});

/// Discounted value of a policy on an induced MDP; with an entropy
/// regularizer the per-step reward carries the policy's entropy bonus.
Vec value_of_policy(const InducedMdp& mdp, const Policy& policy, const Regularizer& reg,
                    double tol = 1e-12);

/// Optimal values of an induced MDP under the given regularizer.
Vec optimal_values(const InducedMdp& mdp, const Regularizer& reg, double tol = 1e-12);

struct MfContractionEstimate {
  double d_follower_leader = 0.0;  // follower BR vs leader policy
  double d_follower_mu = 0.0;      // follower BR vs mean field
  double d_mu_mu = 0.0;            // pushforward vs mean field
  double d_mu_leader = 0.0;        // pushforward vs leader policy
  double d_mu_follower = 0.0;      // pushforward vs follower policy
  double d_leader_follower = 0.0;  // leader BR vs follower policy
  double d_leader_mu = 0.0;        // leader BR vs mean field
  double inner_sum = 0.0;          // d_mu_mu + d_mu_follower * d_follower_mu
  double outer_ratio = 0.0;        // (d_F^L + d_mu^L) / (1 - (d_F^mu + d_mu^mu + d_mu^F))
  bool inner_condition = false;
  bool outer_condition = false;
  int pairs_used = 0;
};

/// Empirical Lipschitz constants of the best-response maps and the
/// pushforward over sampled perturbations, one argument at a time.
MfContractionEstimate verify_mf_contraction(const GameSpec& spec, int samples, uint64_t seed,
                                            const SSEVariant& variant, const MFEConfig& cfg = {});

void export_mean_field_csv(const MeanField& mu, const std::string& path);

}  // namespace stackmf
