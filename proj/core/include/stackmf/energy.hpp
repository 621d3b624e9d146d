#pragma once

#include <string>
#include <vector>

#include "stackmf/game_io.hpp"
#include "stackmf/lp.hpp"
#include "stackmf/meanfield.hpp"

namespace stackmf {

struct Bus {
  std::string name;
  double p_load_kw = 0.0;
  // Reactive and voltage fields are parsed and ignored (DC flow).
  double q_load_kvar = 0.0;
  double max_voltage_pu = 0.0;
  double min_voltage_pu = 0.0;
  double voltage_magnitude_pu = 0.0;
  double voltage_angle_deg = 0.0;
  double base_kv = 0.0;
  int prosumer_population = 0;
  double storage_capacity_kwh = 0.0;
  double one_way_efficiency = 1.0;
  double prosumer_income = 0.0;
  int consumer_population = 0;
  double consumer_income = 0.0;
};

struct Line {
  std::string name;
  int source = 0;
  int target = 0;
  double reactance_ohm = 0.0;
  double susceptance_s = 0.0;  // parsed and ignored
  double flow_limit_mw = 0.0;
};

struct Generator {
  std::string name;
  int bus = 0;
  std::string fuel_type;
  bool free_fuel = false;  // solar; zero marginal cost
  double cost_a = 0.0;     // C(p) = a p^2 + b p + c
  double cost_b = 0.0;
  double cost_c = 0.0;
  double max_production_mw = 0.0;
};

struct GridSpec {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  int steps_per_day = 8;

  int n_buses() const { return static_cast<int>(buses.size()); }
  void validate() const;  // populations, efficiency range, limits, connectivity
};

/// Retail tariff: volumetric adder [$ per kWh] and fixed charge [$ per day],
/// per customer class per bus.
struct Tariff {
  Vec adder_consumer;
  Vec adder_prosumer;
  Vec fixed_consumer;
  Vec fixed_prosumer;
};

struct DispatchResult {
  Vec generator_output_mw;
  Vec line_flow_mw;
  Vec bus_angle_rad;
  Vec lmp;  // dual of each bus balance row, $ per MWh
  double total_cost = 0.0;

  /// Checks balance, flow limits, and capacity ranges; throws on violation.
  void verify(const GridSpec& grid, const Vec& net_demand_mw, double tol = 1e-6) const;
};

struct DispatchInfeasible : std::runtime_error {
  Vec certificate;  // Farkas multipliers over the dispatch LP rows
  explicit DispatchInfeasible(const std::string& msg, Vec cert)
      : std::runtime_error(msg), certificate(std::move(cert)) {}
};

/// DC optimal power flow: piecewise-linearized quadratic costs (equal-width
/// segments), per-bus balance, reactance-based flows with limits. LMPs are
/// the balance-row duals. `capacity_factor`, when given, scales each
/// generator's capacity (time-varying solar availability).
DispatchResult dispatch(const GridSpec& grid, const Vec& net_demand_mw, int segments = 10,
                        const Vec* capacity_factor = nullptr);

/// Base day shapes: per-household energy per step [kWh], and the grid solar
/// availability factor per step.
struct ShapeSet {
  Vec consumer_demand_kwh;                // per step
  std::vector<Vec> prosumer_demand_kwh;   // per bus, per step; net of rooftop solar
  Vec solar_capacity_factor;              // per step, in [0, 1]
};

ShapeSet load_shapes(const std::string& consumer_csv,
                     const std::vector<std::string>& prosumer_csvs, const std::string& solar_csv);

/// One day of realized profiles: base shapes times i.i.d. triangular
/// Delta(0.8, 1.2, 1) factors, one factor per (bus, class, step) and one per
/// step for solar. Deterministic per seed; `noise = false` returns the base
/// shapes exactly.
struct DayProfile {
  std::vector<Vec> consumer_kwh;  // [bus][step]
  std::vector<Vec> prosumer_kwh;  // [bus][step]
  Vec solar_factor;               // [step]
};

DayProfile profiles(const ShapeSet& shapes, const GridSpec& grid, uint64_t day_seed, bool noise);

enum class StorageAction { charge = 0, hold = 1, discharge = 2 };
inline constexpr int kStorageActions = 3;

struct StorageModel {
  double capacity_kwh = 0.0;
  double efficiency = 1.0;  // one-way
  int buckets = 2;          // discrete fill levels 0 .. buckets-1

  double bucket_width_kwh() const { return buckets > 1 ? capacity_kwh / (buckets - 1) : 0.0; }
};

struct ProsumerState {
  int bucket = 0;
  int step = 0;

  double level_fraction(const StorageModel& m) const {
    return m.buckets > 1 ? static_cast<double>(bucket) / (m.buckets - 1) : 0.0;
  }
};

/// Charging draws `amount_kwh` from the grid and stores efficiency * amount;
/// discharging removes `amount_kwh` from the battery and delivers
/// efficiency * amount to the meter. Amounts are clamped to the remaining
/// capacity / charge, and the level is re-bucketed to the nearest level.
struct StorageOutcome {
  ProsumerState next;
  double grid_delta_kwh = 0.0;  // positive = drawn from the grid
  double stored_delta_kwh = 0.0;
  bool clamped = false;
};

StorageOutcome storage_step(const StorageModel& model, ProsumerState state, StorageAction action,
                            double amount_kwh, int steps_per_day = 8);

/// Net-metered settlement for one period: imports pay LMP plus the adder,
/// exports are credited at LMP with no adder, plus the fixed charge.
double settle(const Vec& net_kwh_per_step, const Vec& lmp_usd_per_mwh, double adder_usd_per_kwh,
              double fixed_charge_usd);

/// Energy expenditure incidence: percentage of income spent on electricity.
/// Expenditure and income must cover the same period.
double eei(double expenditure_usd, double income_usd_per_period);

/// Incremental mean volatility: mean absolute step change of a price series.
double imv(const Vec& lmp_sequence);

enum class LeaderObjective { eei_spread, eei_variance };

/// Discretization of the tariff-design game.
struct DiscretizationConfig {
  int storage_buckets = 4;
  Vec lmp_bucket_edges;      // leader-state dimension 1
  Vec eei_gap_bucket_edges;  // leader-state dimension 2
  std::vector<Tariff> tariff_grid;
  int segments = 10;
  LeaderObjective objective = LeaderObjective::eei_spread;
  size_t state_cap = 20000;
};

/// The utility's scalar inequity measure over per-class EEI values.
double leader_inequity(const Vec& eei_classes, LeaderObjective objective);

/// Index bookkeeping for the built game: follower states are
/// (node, bucket, step) triples, leader states (lmp bucket, gap bucket) pairs.
struct EnergyStateSpace {
  int nodes = 0;
  int buckets = 0;
  int steps = 0;
  int lmp_buckets = 0;
  int gap_buckets = 0;

  int follower_states() const { return nodes * buckets * steps; }
  int leader_states() const { return lmp_buckets * gap_buckets; }
  int follower_index(int node, int bucket, int step) const {
    return (node * buckets + bucket) * steps + step;
  }
  int node_of(int s) const { return s / (buckets * steps); }
  int bucket_of(int s) const { return (s / steps) % buckets; }
  int step_of(int s) const { return s % steps; }
  int leader_index(int lmp_bucket, int gap_bucket) const {
    return lmp_bucket * gap_buckets + gap_bucket;
  }
};

EnergyStateSpace energy_state_space(const GridSpec& grid, const DiscretizationConfig& disc);

/// Mean-noise per-step LMPs implied by a population behavior: aggregates the
/// mean field's storage flows into bus demands and dispatches each step.
std::vector<Vec> lmp_profile_for(const GridSpec& grid, const ShapeSet& shapes,
                                 const DiscretizationConfig& disc, const MeanField& mu);

/// Mean-noise daily EEI per class (consumers pooled, prosumers per bus) under
/// a tariff and population behavior.
Vec eei_by_class(const GridSpec& grid, const ShapeSet& shapes, const DiscretizationConfig& disc,
                 const Tariff& tariff, const MeanField& mu, const std::vector<Vec>& lmp_per_step);

/// Builds the tabular mean-field Stackelberg game: the utility picks tariff
/// grid points against a coarse system summary; each node's representative
/// prosumer moves storage one bucket per step. Kernels and rewards compose
/// profiles -> storage -> dispatch -> settlement at the frozen mean field.
GameSpec build_stackelberg_game(const GridSpec& grid, const ShapeSet& shapes,
                                const DiscretizationConfig& disc);

/// Uniform-over-(bucket, step, action) mean field with per-node mass
/// proportional to prosumer populations.
MeanField initial_energy_mean_field(const GridSpec& grid, const DiscretizationConfig& disc);

struct SimulationConfig {
  int days = 10;
  uint64_t seed = 1;
  bool learn = true;   // false: hold storage, baseline tariff
  bool noise = true;
  int days_per_leader_step = 3;
  Tariff baseline_tariff;
};

struct StepRecord {
  int day = 0;
  int step = 0;
  int bus = 0;
  double lmp = 0.0;
  double net_demand_mw = 0.0;
  double storage_level_frac = 0.0;
  double prosumer_net_kwh = 0.0;  // per household
  double consumer_net_kwh = 0.0;
  double prosumer_cost_usd = 0.0;
  double consumer_cost_usd = 0.0;
};

struct LineFlowRecord {
  int day = 0;
  int step = 0;
  int line = 0;
  double flow_mw = 0.0;
  double limit_mw = 0.0;
};

struct DayMetrics {
  int day = 0;
  Vec imv_bus;
  double imv_mean = 0.0;
  Vec eei_class;  // consumers pooled, then one prosumer class per bus
  double eei_spread = 0.0;
};

struct SimulationOutput {
  std::vector<StepRecord> steps;
  std::vector<LineFlowRecord> flows;
  std::vector<DayMetrics> day_metrics;
  Vec imv_overall_bus;
  double imv_overall_mean = 0.0;
  Vec eei_overall_class;
  double eei_overall_spread = 0.0;
  std::vector<int> tariff_trace;  // chosen tariff index per day
};

/// Day-by-day simulation of the grid with noise. With learning on, the
/// population follows the solved follower policy and the utility samples its
/// policy every `days_per_leader_step` days; otherwise storage holds and the
/// baseline tariff applies.
SimulationOutput simulate(const GridSpec& grid, const ShapeSet& shapes,
                          const DiscretizationConfig& disc, const SimulationConfig& sim,
                          const MFEResult* policies);

/// Full experiment configuration loaded from a grid file.
struct EnergyConfig {
  GridSpec grid;
  ShapeSet shapes;
  DiscretizationConfig disc;
  Tariff baseline_tariff;
  int days_per_leader_step = 3;
  double solver_rho = 0.05;
  double solver_tol = 1e-6;
  int solver_max_outer = 100;
  int solver_max_inner = 300;
};

EnergyConfig load_energy_config(const std::string& path);

}  // namespace stackmf
