#pragma once

#include <span>
#include <string>
#include <vector>

#include "stackmf/game.hpp"

namespace stackmf {

/// Absolute precision for maximizer detection in argmax_uniform / action_gap.
inline constexpr double kTiePrecision = 1e-12;

/// Default floor for the measured minimum action gap.
inline constexpr double kDefaultGapFloor = 1e-3;

inline constexpr size_t kDefaultNetSizeCap = 2'000'000;

/// exp(alpha*v_i) / sum_j exp(alpha*v_j), computed with max subtraction.
Vec softmax(std::span<const double> values, double alpha);

/// Mass 1/|M| on each maximizer, where M collects entries within
/// `tie_precision` of the maximum.
Vec argmax_uniform(std::span<const double> values, double tie_precision = kTiePrecision);

/// Max value minus the best non-maximizer value; +infinity when every entry
/// is a maximizer.
double action_gap(std::span<const double> q_row, double tie_precision = kTiePrecision);

/// log(1/epsilon) / phi. Requires epsilon in (0,1) and phi > 0.
double temperature_for(double epsilon, double phi);

/// Shannon entropy in nats, with 0 log 0 := 0.
double entropy(std::span<const double> probability_row);

/// Finite l1 cover of the probability simplex over `action_count` actions:
/// the lattice { k/m : sum k = m } with m chosen so the covering radius is
/// at most epsilon.
struct EpsilonNet {
  int action_count = 0;
  double epsilon = 0.0;
  int resolution = 0;  // lattice denominator m
  std::vector<Vec> points;

  size_t size() const { return points.size(); }
};

EpsilonNet build_epsilon_net(int action_count, double epsilon,
                             size_t size_cap = kDefaultNetSizeCap);

/// Number of lattice points for given action count and resolution, saturated
/// at size_t max on overflow.
size_t simplex_lattice_size(int action_count, int resolution);

/// Nearest net point in l1 distance; ties broken by the lexicographically
/// smallest point.
Vec project(std::span<const double> policy_row, const EpsilonNet& net);

/// Per-effective-state minimum action gaps, measured from the converged
/// Q-tables induced by every opponent net point, plus the clamped global
/// floor phi.
struct GapProfile {
  Vec per_state_gap;  // min over net points, per effective state
  double phi = 0.0;   // min over states, clamped below by the configured floor
};

void export_net_csv(const EpsilonNet& net, const std::string& path);

}  // namespace stackmf
