#pragma once

#include <optional>
#include <vector>

#include "stackmf/mdp.hpp"
#include "stackmf/policy_ops.hpp"

namespace stackmf {

struct SSEVariant {
  enum class Kind { exact, boltzmann, regularized };
  Kind kind = Kind::exact;
  // boltzmann
  double epsilon = 0.1;            // projection radius
  double alpha_leader = 0.0;       // 0 = derive log(1/eps)/phi from measured gaps
  double alpha_follower = 0.0;
  double gap_floor = kDefaultGapFloor;
  // regularized
  double rho = 0.1;
};

SSEVariant exact_variant();
SSEVariant boltzmann_variant(double epsilon, double gap_floor = kDefaultGapFloor);
SSEVariant regularized_variant(double rho);

struct SSEConfig {
  double tol = 1e-8;
  int max_outer = 500;
  BRConfig br;
};

struct SSEResult {
  Policy leader_policy;
  Policy follower_policy;
  int iterations = 0;
  Vec trajectory;  // per-iteration l1 change of the leader policy
  bool converged = false;
  SSEVariant variant;

  // per-iteration mean values under the current pair, for the CSV artifact
  Vec leader_values;
  Vec follower_values;

  // boltzmann diagnostics
  double alpha_leader = 0.0;
  double alpha_follower = 0.0;
  double phi = 0.0;
};

/// Alternating best response: follower responds to the current leader
/// policy, then the leader responds to that; stops when the leader policy
/// moves by at most tol in the sup-over-states l1 metric.
SSEResult solve_sse(const GameSpec& spec, const Policy& initial_leader_policy,
                    const SSEVariant& variant, const SSEConfig& cfg = {});

/// The variant's one-sided best-response operator (used by diagnostics).
Policy variant_best_response(const GameSpec& spec, Agent agent, const Policy& opponent,
                             const SSEVariant& variant, const BRConfig& cfg,
                             const EpsilonNet* own_net, double alpha,
                             const MeanField* mf = nullptr);

/// Per-effective-state minimum action gaps of the agent's converged Q-tables
/// across every opponent net point, with the global floor clamped below by
/// `gap_floor`. Fully tied rows contribute no finite gap.
GapProfile measure_gap_profile(const GameSpec& spec, Agent agent, const EpsilonNet& opponent_net,
                               const BRConfig& cfg = {}, double gap_floor = kDefaultGapFloor);

/// Discounted mean value of the joint chain under a fixed policy pair,
/// averaged over effective states.
double mean_value(const GameSpec& spec, Agent agent, const Policy& own, const Policy& opponent,
                  double tol = 1e-10, const MeanField* mf = nullptr);

struct ContractionEstimate {
  double d_leader = 0.0;
  double d_follower = 0.0;
  double product = 0.0;
  int pairs_used = 0;
  bool contractive = false;
};

/// Empirical Lipschitz constants of both best-response maps over sampled
/// opponent-policy pairs; identical pairs are skipped.
ContractionEstimate verify_contraction(const GameSpec& spec, const SSEVariant& variant,
                                       int sample_pairs, uint64_t seed, const SSEConfig& cfg = {});

/// Same estimate over caller-supplied pairs (first element of each pair is
/// perturbed input one, second is input two).
ContractionEstimate verify_contraction_pairs(
    const GameSpec& spec, const SSEVariant& variant,
    const std::vector<std::pair<Policy, Policy>>& follower_br_inputs,
    const std::vector<std::pair<Policy, Policy>>& leader_br_inputs, const SSEConfig& cfg = {});

/// ((1 + dL + 2|A_L| + 2 dL |A_F|) / (1 - dL dF) + 1)
double theorem2_coefficient(double d_leader, double d_follower, int leader_actions,
                            int follower_actions);

struct ErrorBoundRow {
  double epsilon = 0.0;
  double phi = 0.0;
  double alpha = 0.0;
  int iterations = 0;  // K
  double measured_error = 0.0;
  double bound = 0.0;
  bool violated = false;
};

struct ErrorBoundReport {
  bool applicable = false;  // false when the measured product is >= 1
  double d_leader = 0.0;
  double d_follower = 0.0;
  double product = 0.0;
  Policy reference_leader_policy;
  std::vector<ErrorBoundRow> rows;
};

/// For each epsilon: runs the projected-Boltzmann loop with the calibrated
/// temperature for K = max(1, ceil(log_{1/(dL dF)}(2/eps))) rounds and
/// compares the leader policy against a tight regularized reference solve.
ErrorBoundReport error_bound_check(const GameSpec& spec, const std::vector<double>& epsilons,
                                   double reference_rho = 1e-3, double tol = 1e-10,
                                   int contraction_pairs = 64, uint64_t seed = 2024);

}  // namespace stackmf
