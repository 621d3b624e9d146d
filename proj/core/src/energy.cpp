#include "stackmf/energy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "stackmf/csv.hpp"
#include "stackmf/rng.hpp"

namespace stackmf {

using nlohmann::json;

void GridSpec::validate() const {
  if (buses.empty()) throw ConfigError("grid: no buses");
  if (steps_per_day < 2) throw ConfigError("grid: steps_per_day must be at least 2");
  for (const Bus& b : buses) {
    if (b.prosumer_population < 0 || b.consumer_population < 0)
      throw ConfigError("grid: negative population at bus " + b.name);
    if (!(b.one_way_efficiency > 0.0 && b.one_way_efficiency <= 1.0))
      throw ConfigError("grid: efficiency out of (0,1] at bus " + b.name);
    if (b.storage_capacity_kwh < 0.0) throw ConfigError("grid: negative storage at bus " + b.name);
  }
  for (const Line& l : lines) {
    if (l.source < 0 || l.source >= n_buses() || l.target < 0 || l.target >= n_buses())
      throw ConfigError("grid: line " + l.name + " references an unknown bus");
    if (!(l.flow_limit_mw > 0.0)) throw ConfigError("grid: nonpositive flow limit on " + l.name);
    if (!(l.reactance_ohm > 0.0)) throw ConfigError("grid: nonpositive reactance on " + l.name);
  }
  for (const Generator& g : generators) {
    if (g.bus < 0 || g.bus >= n_buses())
      throw ConfigError("grid: generator " + g.name + " references an unknown bus");
    if (!(g.max_production_mw > 0.0))
      throw ConfigError("grid: nonpositive capacity on " + g.name);
  }
  // Connectivity over lines.
  std::vector<int> comp(n_buses(), -1);
  std::vector<int> stack{0};
  comp[0] = 0;
  while (!stack.empty()) {
    int b = stack.back();
    stack.pop_back();
    for (const Line& l : lines) {
      int other = -1;
      if (l.source == b) other = l.target;
      if (l.target == b) other = l.source;
      if (other >= 0 && comp[other] < 0) {
        comp[other] = 0;
        stack.push_back(other);
      }
    }
  }
  for (int b = 0; b < n_buses(); ++b)
    if (comp[b] < 0) throw ConfigError("grid: bus " + buses[b].name + " is disconnected");
}

void DispatchResult::verify(const GridSpec& grid, const Vec& net_demand_mw, double tol) const {
  const int nb = grid.n_buses();
  Vec balance(nb, 0.0);
  for (size_t g = 0; g < grid.generators.size(); ++g)
    balance[grid.generators[g].bus] += generator_output_mw[g];
  for (size_t l = 0; l < grid.lines.size(); ++l) {
    balance[grid.lines[l].source] -= line_flow_mw[l];
    balance[grid.lines[l].target] += line_flow_mw[l];
    if (std::abs(line_flow_mw[l]) > grid.lines[l].flow_limit_mw + tol)
      throw std::runtime_error("dispatch: flow limit violated on line " + grid.lines[l].name);
  }
  for (int b = 0; b < nb; ++b)
    if (std::abs(balance[b] - net_demand_mw[b]) > tol)
      throw std::runtime_error("dispatch: power balance violated at bus " + grid.buses[b].name);
  for (size_t g = 0; g < grid.generators.size(); ++g)
    if (generator_output_mw[g] < -tol)
      throw std::runtime_error("dispatch: negative output at " + grid.generators[g].name);
}

DispatchResult dispatch(const GridSpec& grid, const Vec& net_demand_mw, int segments,
                        const Vec* capacity_factor) {
  if (segments < 1) throw std::invalid_argument("dispatch: segments must be at least 1");
  if (static_cast<int>(net_demand_mw.size()) != grid.n_buses())
    throw std::invalid_argument("dispatch: demand vector size does not match bus count");
  for (double d : net_demand_mw)
    if (!std::isfinite(d)) throw std::invalid_argument("dispatch: non-finite demand");

  const int nb = grid.n_buses();
  const int ng = static_cast<int>(grid.generators.size());
  const int nl = static_cast<int>(grid.lines.size());

  // Variables: per generator, one block (1 for free fuel, `segments`
  // otherwise), then angles for buses 1..nb-1 (bus 0 is the reference).
  std::vector<int> gen_offset(ng), gen_width(ng);
  int nv = 0;
  for (int g = 0; g < ng; ++g) {
    gen_offset[g] = nv;
    gen_width[g] = grid.generators[g].free_fuel ? 1 : segments;
    nv += gen_width[g];
  }
  const int angle_offset = nv;
  nv += nb - 1;

  LinearProgram lp = make_lp(nv);
  double cost_constant = 0.0;
  for (int g = 0; g < ng; ++g) {
    const Generator& gen = grid.generators[g];
    const double factor = capacity_factor ? (*capacity_factor)[g] : 1.0;
    const double cap = gen.max_production_mw * std::max(0.0, factor);
    cost_constant += gen.cost_c;
    if (gen.free_fuel) {
      lp.upper[gen_offset[g]] = cap;
    } else {
      const double w = cap / segments;
      for (int k = 0; k < segments; ++k) {
        lp.objective[gen_offset[g] + k] = gen.cost_a * (2 * k + 1) * w + gen.cost_b;
        lp.upper[gen_offset[g] + k] = w;
      }
    }
  }
  for (int b = 1; b < nb; ++b) {
    lp.lower[angle_offset + b - 1] = -std::numeric_limits<double>::infinity();
  }

  auto angle_coeff = [&](Vec& row, int bus, double coeff) {
    if (bus == 0) return;  // reference angle fixed at zero
    row[angle_offset + bus - 1] += coeff;
  };

  // Bus balance rows first: their duals are the LMPs.
  for (int b = 0; b < nb; ++b) {
    Vec row(nv, 0.0);
    for (int g = 0; g < ng; ++g)
      if (grid.generators[g].bus == b)
        for (int k = 0; k < gen_width[g]; ++k) row[gen_offset[g] + k] = 1.0;
    for (int l = 0; l < nl; ++l) {
      const Line& ln = grid.lines[l];
      const double inv_x = 1.0 / ln.reactance_ohm;
      if (ln.source == b) {  // outgoing flow (theta_s - theta_t)/x
        angle_coeff(row, ln.source, -inv_x);
        angle_coeff(row, ln.target, +inv_x);
      }
      if (ln.target == b) {  // incoming flow
        angle_coeff(row, ln.source, +inv_x);
        angle_coeff(row, ln.target, -inv_x);
      }
    }
    lp.rows.push_back(std::move(row));
    lp.senses.push_back(RowSense::eq);
    lp.rhs.push_back(net_demand_mw[b]);
  }
  // Line limits.
  for (int l = 0; l < nl; ++l) {
    const Line& ln = grid.lines[l];
    const double inv_x = 1.0 / ln.reactance_ohm;
    Vec row(nv, 0.0);
    angle_coeff(row, ln.source, inv_x);
    angle_coeff(row, ln.target, -inv_x);
    lp.rows.push_back(row);
    lp.senses.push_back(RowSense::le);
    lp.rhs.push_back(ln.flow_limit_mw);
    for (double& v : row) v = -v;
    lp.rows.push_back(std::move(row));
    lp.senses.push_back(RowSense::le);
    lp.rhs.push_back(ln.flow_limit_mw);
  }

  LPSolution sol = solve_lp(lp);
  if (sol.status == LPStatus::infeasible)
    throw DispatchInfeasible("dispatch: infeasible (demand exceeds deliverable capacity)",
                             sol.certificate);
  if (sol.status == LPStatus::unbounded)
    throw std::runtime_error("dispatch: unbounded dispatch problem; check cost coefficients");

  DispatchResult res;
  res.generator_output_mw.assign(ng, 0.0);
  for (int g = 0; g < ng; ++g)
    for (int k = 0; k < gen_width[g]; ++k) res.generator_output_mw[g] += sol.x[gen_offset[g] + k];
  res.bus_angle_rad.assign(nb, 0.0);
  for (int b = 1; b < nb; ++b) res.bus_angle_rad[b] = sol.x[angle_offset + b - 1];
  res.line_flow_mw.assign(nl, 0.0);
  for (int l = 0; l < nl; ++l) {
    const Line& ln = grid.lines[l];
    res.line_flow_mw[l] =
        (res.bus_angle_rad[ln.source] - res.bus_angle_rad[ln.target]) / ln.reactance_ohm;
  }
  res.lmp.assign(nb, 0.0);
  for (int b = 0; b < nb; ++b) res.lmp[b] = sol.y[b];
  res.total_cost = sol.objective + cost_constant;
  return res;
}

namespace {

Vec read_shape_csv(const std::string& path, int expected_steps) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing shape file: " + path);
  CsvTable t = read_csv(path);
  const int cs = t.column("step"), cv = t.column("value");
  if (cs < 0 || cv < 0) throw ConfigError("shape file " + path + ": need step,value columns");
  Vec shape(expected_steps, 0.0);
  if (static_cast<int>(t.rows.size()) != expected_steps)
    throw ConfigError("shape file " + path + ": expected " + std::to_string(expected_steps) +
                      " rows");
  for (size_t r = 0; r < t.rows.size(); ++r)
    shape[static_cast<int>(t.number(r, cs))] = t.number(r, cv);
  return shape;
}

}  // namespace

ShapeSet load_shapes(const std::string& consumer_csv, const std::vector<std::string>& prosumer_csvs,
                     const std::string& solar_csv) {
  ShapeSet s;
  s.consumer_demand_kwh = read_shape_csv(consumer_csv, 8);
  for (const auto& p : prosumer_csvs) s.prosumer_demand_kwh.push_back(read_shape_csv(p, 8));
  s.solar_capacity_factor = read_shape_csv(solar_csv, 8);
  return s;
}

DayProfile profiles(const ShapeSet& shapes, const GridSpec& grid, uint64_t day_seed, bool noise) {
  const int nb = grid.n_buses();
  const int T = grid.steps_per_day;
  if (static_cast<int>(shapes.prosumer_demand_kwh.size()) != nb)
    throw ConfigError("profiles: prosumer shape count does not match bus count");
  std::mt19937_64 rng(day_seed);
  auto factor = [&]() { return noise ? triangular(rng, 0.8, 1.2, 1.0) : 1.0; };

  DayProfile p;
  p.consumer_kwh.assign(nb, Vec(T, 0.0));
  p.prosumer_kwh.assign(nb, Vec(T, 0.0));
  p.solar_factor.assign(T, 0.0);
  for (int b = 0; b < nb; ++b)
    for (int t = 0; t < T; ++t) p.consumer_kwh[b][t] = shapes.consumer_demand_kwh[t] * factor();
  for (int b = 0; b < nb; ++b)
    for (int t = 0; t < T; ++t) p.prosumer_kwh[b][t] = shapes.prosumer_demand_kwh[b][t] * factor();
  for (int t = 0; t < T; ++t)
    p.solar_factor[t] = std::clamp(shapes.solar_capacity_factor[t] * factor(), 0.0, 1.0);
  return p;
}

StorageOutcome storage_step(const StorageModel& model, ProsumerState state, StorageAction action,
                            double amount_kwh, int steps_per_day) {
  if (amount_kwh < 0.0) throw std::invalid_argument("storage_step: negative amount");
  const double w = model.bucket_width_kwh();
  const double level = state.bucket * w;
  StorageOutcome out;
  out.next = state;
  out.next.step = (state.step + 1) % steps_per_day;
  if (model.buckets < 2 || action == StorageAction::hold || amount_kwh == 0.0) {
    out.clamped = model.buckets < 2 && action != StorageAction::hold && amount_kwh > 0.0;
    return out;
  }
  if (action == StorageAction::charge) {
    const double stored = std::min(model.efficiency * amount_kwh, model.capacity_kwh - level);
    out.clamped = stored < model.efficiency * amount_kwh - 1e-12;
    out.stored_delta_kwh = stored;
    out.grid_delta_kwh = stored / model.efficiency;
    out.next.bucket = static_cast<int>(std::lround((level + stored) / w));
  } else {
    const double removed = std::min(amount_kwh, level);
    out.clamped = removed < amount_kwh - 1e-12;
    out.stored_delta_kwh = -removed;
    out.grid_delta_kwh = -model.efficiency * removed;
    out.next.bucket = static_cast<int>(std::lround((level - removed) / w));
  }
  out.next.bucket = std::clamp(out.next.bucket, 0, model.buckets - 1);
  return out;
}

double settle(const Vec& net_kwh_per_step, const Vec& lmp_usd_per_mwh, double adder_usd_per_kwh,
              double fixed_charge_usd) {
  if (net_kwh_per_step.size() != lmp_usd_per_mwh.size())
    throw std::invalid_argument("settle: series lengths differ");
  double total = fixed_charge_usd;
  for (size_t t = 0; t < net_kwh_per_step.size(); ++t) {
    const double price = lmp_usd_per_mwh[t] / 1000.0;  // $/kWh
    const double net = net_kwh_per_step[t];
    if (net >= 0.0)
      total += net * (price + adder_usd_per_kwh);
    else
      total += net * price;  // export credited at LMP, no adder
  }
  return total;
}

double eei(double expenditure_usd, double income_usd_per_period) {
  if (!(income_usd_per_period > 0.0)) throw std::invalid_argument("eei: income must be positive");
  return 100.0 * expenditure_usd / income_usd_per_period;
}

double imv(const Vec& lmp_sequence) {
  if (lmp_sequence.size() < 2) throw std::invalid_argument("imv: need at least two prices");
  double sum = 0.0;
  for (size_t t = 0; t + 1 < lmp_sequence.size(); ++t)
    sum += std::abs(lmp_sequence[t + 1] - lmp_sequence[t]);
  return sum / static_cast<double>(lmp_sequence.size() - 1);
}

EnergyStateSpace energy_state_space(const GridSpec& grid, const DiscretizationConfig& disc) {
  EnergyStateSpace sp;
  sp.nodes = grid.n_buses();
  sp.buckets = disc.storage_buckets;
  sp.steps = grid.steps_per_day;
  sp.lmp_buckets = static_cast<int>(disc.lmp_bucket_edges.size()) + 1;
  sp.gap_buckets = static_cast<int>(disc.eei_gap_bucket_edges.size()) + 1;
  return sp;
}

namespace {

int edge_bucket(const Vec& edges, double x) {
  int b = 0;
  for (double e : edges)
    if (x > e) ++b;
  return b;
}

StorageModel model_for(const GridSpec& grid, const DiscretizationConfig& disc, int node) {
  return {grid.buses[node].storage_capacity_kwh, grid.buses[node].one_way_efficiency,
          disc.storage_buckets};
}

// Bucket-quantum storage move: charge stores exactly one bucket width
// (drawing width/efficiency from the grid), discharge delivers
// efficiency * width. Returns {next bucket, grid delta kwh}.
std::pair<int, double> bucket_move(const StorageModel& m, int bucket, StorageAction a) {
  if (m.buckets < 2) return {bucket, 0.0};
  const double w = m.bucket_width_kwh();
  switch (a) {
    case StorageAction::hold:
      return {bucket, 0.0};
    case StorageAction::charge:
      if (bucket >= m.buckets - 1) return {bucket, 0.0};
      return {bucket + 1, w / m.efficiency};
    case StorageAction::discharge:
      if (bucket <= 0) return {bucket, 0.0};
      return {bucket - 1, -m.efficiency * w};
  }
  return {bucket, 0.0};
}

double hours_per_step(const GridSpec& grid) { return 24.0 / grid.steps_per_day; }

// Expected per-household storage grid delta per (node, step) under mu.
std::vector<Vec> expected_delta(const GridSpec& grid, const DiscretizationConfig& disc,
                                const EnergyStateSpace& sp, const MeanField& mu) {
  std::vector<Vec> delta(sp.nodes, Vec(sp.steps, 0.0));
  for (int node = 0; node < sp.nodes; ++node) {
    const StorageModel m = model_for(grid, disc, node);
    for (int t = 0; t < sp.steps; ++t) {
      double mass = 0.0, acc = 0.0;
      for (int bucket = 0; bucket < sp.buckets; ++bucket) {
        const int s = sp.follower_index(node, bucket, t);
        for (int a = 0; a < kStorageActions; ++a) {
          const double w = mu.at(s, a);
          mass += w;
          acc += w * bucket_move(m, bucket, static_cast<StorageAction>(a)).second;
        }
      }
      delta[node][t] = mass > 0.0 ? acc / mass : 0.0;
    }
  }
  return delta;
}

Vec demand_mw_at(const GridSpec& grid, const DayProfile& day, const std::vector<Vec>& delta_kwh,
                 int t) {
  const double h = hours_per_step(grid);
  Vec demand(grid.n_buses(), 0.0);
  for (int b = 0; b < grid.n_buses(); ++b) {
    const Bus& bus = grid.buses[b];
    const double kwh = bus.consumer_population * day.consumer_kwh[b][t] +
                       bus.prosumer_population * (day.prosumer_kwh[b][t] + delta_kwh[b][t]);
    demand[b] = bus.p_load_kw / 1000.0 + kwh / (h * 1000.0);
  }
  return demand;
}

Vec capacity_factors(const GridSpec& grid, double solar_factor) {
  Vec f(grid.generators.size(), 1.0);
  for (size_t g = 0; g < grid.generators.size(); ++g)
    if (grid.generators[g].free_fuel) f[g] = solar_factor;
  return f;
}

}  // namespace

std::vector<Vec> lmp_profile_for(const GridSpec& grid, const ShapeSet& shapes,
                                 const DiscretizationConfig& disc, const MeanField& mu) {
  const EnergyStateSpace sp = energy_state_space(grid, disc);
  const DayProfile day = profiles(shapes, grid, 0, false);
  const std::vector<Vec> delta = expected_delta(grid, disc, sp, mu);
  std::vector<Vec> lmp(sp.steps);
  for (int t = 0; t < sp.steps; ++t) {
    const Vec factors = capacity_factors(grid, day.solar_factor[t]);
    DispatchResult d = dispatch(grid, demand_mw_at(grid, day, delta, t), disc.segments, &factors);
    lmp[t] = d.lmp;
  }
  return lmp;
}

Vec eei_by_class(const GridSpec& grid, const ShapeSet& shapes, const DiscretizationConfig& disc,
                 const Tariff& tariff, const MeanField& mu, const std::vector<Vec>& lmp_per_step) {
  const EnergyStateSpace sp = energy_state_space(grid, disc);
  const DayProfile day = profiles(shapes, grid, 0, false);
  Vec out;

  // Class 0: consumers pooled across buses (identical incomes).
  double cons_exp = 0.0, cons_pop = 0.0, cons_income = 0.0;
  for (int b = 0; b < grid.n_buses(); ++b) {
    const Bus& bus = grid.buses[b];
    if (bus.consumer_population == 0) continue;
    double e = tariff.fixed_consumer[b];
    for (int t = 0; t < sp.steps; ++t)
      e += day.consumer_kwh[b][t] * (lmp_per_step[t][b] / 1000.0 + tariff.adder_consumer[b]);
    cons_exp += bus.consumer_population * e;
    cons_pop += bus.consumer_population;
    cons_income = bus.consumer_income;
  }
  out.push_back(cons_pop > 0.0 ? eei(cons_exp / cons_pop, cons_income / 365.0) : 0.0);

  // One prosumer class per bus: expected expenditure under mu.
  for (int b = 0; b < grid.n_buses(); ++b) {
    const Bus& bus = grid.buses[b];
    if (bus.prosumer_population == 0) {
      out.push_back(0.0);
      continue;
    }
    const StorageModel m = model_for(grid, disc, b);
    double e = tariff.fixed_prosumer[b];
    for (int t = 0; t < sp.steps; ++t) {
      double mass = 0.0, acc = 0.0;
      for (int bucket = 0; bucket < sp.buckets; ++bucket) {
        const int s = sp.follower_index(b, bucket, t);
        for (int a = 0; a < kStorageActions; ++a) {
          const double w = mu.at(s, a);
          if (w == 0.0) continue;
          mass += w;
          const double net =
              day.prosumer_kwh[b][t] + bucket_move(m, bucket, static_cast<StorageAction>(a)).second;
          const double price = lmp_per_step[t][b] / 1000.0;
          acc += w * (net >= 0.0 ? net * (price + tariff.adder_prosumer[b]) : net * price);
        }
      }
      e += mass > 0.0 ? acc / mass : 0.0;
    }
    out.push_back(eei(e, bus.prosumer_income / 365.0));
  }
  return out;
}

double leader_inequity(const Vec& eei_classes, LeaderObjective objective) {
  if (eei_classes.empty()) return 0.0;
  if (objective == LeaderObjective::eei_spread)
    return *std::max_element(eei_classes.begin(), eei_classes.end()) -
           *std::min_element(eei_classes.begin(), eei_classes.end());
  double mean = std::accumulate(eei_classes.begin(), eei_classes.end(), 0.0) / eei_classes.size();
  double var = 0.0;
  for (double v : eei_classes) var += (v - mean) * (v - mean);
  return var / eei_classes.size();
}

MeanField initial_energy_mean_field(const GridSpec& grid, const DiscretizationConfig& disc) {
  const EnergyStateSpace sp = energy_state_space(grid, disc);
  MeanField mu(sp.follower_states(), kStorageActions);
  double total_pop = 0.0;
  for (const Bus& b : grid.buses) total_pop += b.prosumer_population;
  for (int node = 0; node < sp.nodes; ++node) {
    const double share = grid.buses[node].prosumer_population / total_pop;
    const double cell = share / (sp.buckets * sp.steps * kStorageActions);
    for (int bucket = 0; bucket < sp.buckets; ++bucket)
      for (int t = 0; t < sp.steps; ++t)
        for (int a = 0; a < kStorageActions; ++a)
          mu.at(sp.follower_index(node, bucket, t), a) = cell;
  }
  return mu;
}

GameSpec build_stackelberg_game(const GridSpec& grid, const ShapeSet& shapes,
                                const DiscretizationConfig& disc) {
  grid.validate();
  if (disc.tariff_grid.empty()) throw ConfigError("discretization: tariff grid is empty");
  if (disc.storage_buckets < 1) throw ConfigError("discretization: need at least one bucket");
  const EnergyStateSpace sp = energy_state_space(grid, disc);
  if (static_cast<size_t>(sp.follower_states()) > disc.state_cap)
    throw ConfigError("discretization: follower state space of " +
                      std::to_string(sp.follower_states()) + " exceeds the cap of " +
                      std::to_string(disc.state_cap));

  GameSpec spec;
  spec.leader_states = sp.leader_states();
  spec.follower_states = sp.follower_states();
  spec.leader_actions = static_cast<int>(disc.tariff_grid.size());
  spec.follower_actions = kStorageActions;
  spec.gamma_leader = 0.9;
  spec.gamma_follower = 0.95;
  spec.mf_dependent = true;

  // Follower kernel: deterministic bucket moves and time advance,
  // independent of the tariff and the mean field. Computed once.
  Vec transition_follower(spec.transition_table_size(Agent::follower), 0.0);
  for (int s = 0; s < sp.follower_states(); ++s) {
    const int node = sp.node_of(s), bucket = sp.bucket_of(s), t = sp.step_of(s);
    const StorageModel m = model_for(grid, disc, node);
    for (int a = 0; a < kStorageActions; ++a) {
      const int next_bucket = bucket_move(m, bucket, static_cast<StorageAction>(a)).first;
      const int sn = sp.follower_index(node, next_bucket, (t + 1) % sp.steps);
      for (int aL = 0; aL < spec.leader_actions; ++aL)
        transition_follower[spec.transition_index(Agent::follower, s, a, aL, sn)] = 1.0;
    }
  }

  // Declared reward bound: generous envelope over prices, flows and fixed
  // charges across all tariffs and mean fields.
  double max_slope = 0.0;
  for (const Generator& g : grid.generators)
    if (!g.free_fuel)
      max_slope = std::max(max_slope,
                           g.cost_a * (2 * disc.segments - 1) *
                                   (g.max_production_mw / disc.segments) +
                               g.cost_b);
  double max_adder = 0.0, max_fixed = 0.0;
  for (const Tariff& tf : disc.tariff_grid) {
    for (double v : tf.adder_consumer) max_adder = std::max(max_adder, v);
    for (double v : tf.adder_prosumer) max_adder = std::max(max_adder, v);
    for (double v : tf.fixed_consumer) max_fixed = std::max(max_fixed, v);
    for (double v : tf.fixed_prosumer) max_fixed = std::max(max_fixed, v);
  }
  double max_kwh = 0.0;
  for (int t = 0; t < sp.steps; ++t) {
    double d = std::abs(shapes.consumer_demand_kwh[t]);
    for (int b = 0; b < grid.n_buses(); ++b) {
      const StorageModel m = model_for(grid, disc, b);
      d = std::max(d, std::abs(shapes.prosumer_demand_kwh[b][t]) +
                          (m.buckets > 1 ? m.bucket_width_kwh() / m.efficiency : 0.0));
    }
    max_kwh = std::max(max_kwh, d);
  }
  const double price_margin = 10.0;  // loop-flow congestion can push LMPs past any one slope
  const double step_cost_bound =
      1.3 * max_kwh * (price_margin * max_slope / 1000.0 + max_adder) + max_fixed;
  double min_income = std::numeric_limits<double>::infinity();
  for (const Bus& b : grid.buses) {
    if (b.prosumer_population > 0) min_income = std::min(min_income, b.prosumer_income);
    if (b.consumer_population > 0) min_income = std::min(min_income, b.consumer_income);
  }
  const double eei_bound = 100.0 * sp.steps * step_cost_bound / (min_income / 365.0);
  spec.reward_bound = std::max(sp.steps * step_cost_bound, eei_bound) + 1.0;

  auto tables_at = [grid, shapes, disc, sp, spec_sizes = spec, transition_follower](
                       const MeanField& mu) -> GameTables {
    GameTables t;
    t.transition_follower = transition_follower;
    const GameSpec& sz = spec_sizes;
    t.transition_leader.assign(sz.transition_table_size(Agent::leader), 0.0);
    t.reward_leader.assign(sz.reward_table_size(Agent::leader), 0.0);
    t.reward_follower.assign(sz.reward_table_size(Agent::follower), 0.0);

    const std::vector<Vec> lmp = lmp_profile_for(grid, shapes, disc, mu);
    const DayProfile day = profiles(shapes, grid, 0, false);

    double lmp_mean = 0.0;
    for (int t2 = 0; t2 < sp.steps; ++t2)
      for (int b = 0; b < grid.n_buses(); ++b) lmp_mean += lmp[t2][b];
    lmp_mean /= sp.steps * grid.n_buses();
    const int lmp_bucket = edge_bucket(disc.lmp_bucket_edges, lmp_mean);

    for (int aL = 0; aL < sz.leader_actions; ++aL) {
      const Tariff& tariff = disc.tariff_grid[aL];
      const Vec classes = eei_by_class(grid, shapes, disc, tariff, mu, lmp);
      const double spread = leader_inequity(classes, LeaderObjective::eei_spread);
      const double inequity = leader_inequity(classes, disc.objective);
      // The summary state always buckets the spread; the reward carries the
      // configured objective.
      const int next_leader = sp.leader_index(lmp_bucket,
                                              edge_bucket(disc.eei_gap_bucket_edges, spread));
      for (int sL = 0; sL < sz.leader_states; ++sL) {
        for (int aF = 0; aF < sz.follower_actions; ++aF)
          t.transition_leader[sz.transition_index(Agent::leader, sL, aL, aF, next_leader)] = 1.0;
        for (int sF = 0; sF < sz.follower_states; ++sF)
          for (int aF = 0; aF < sz.follower_actions; ++aF)
            t.reward_leader[sz.reward_index(Agent::leader, sL, sF, aL, aF)] = -inequity;
      }

      // Follower reward: minus the representative prosumer's step cost.
      for (int s = 0; s < sz.follower_states; ++s) {
        const int node = sp.node_of(s), bucket = sp.bucket_of(s), step = sp.step_of(s);
        const StorageModel m = model_for(grid, disc, node);
        const double daily_fixed = tariff.fixed_prosumer[node] / sp.steps;
        for (int aF = 0; aF < sz.follower_actions; ++aF) {
          const double net = day.prosumer_kwh[node][step] +
                             bucket_move(m, bucket, static_cast<StorageAction>(aF)).second;
          const double price = lmp[step][node] / 1000.0;
          const double cost =
              (net >= 0.0 ? net * (price + tariff.adder_prosumer[node]) : net * price) +
              daily_fixed;
          for (int sL = 0; sL < sz.leader_states; ++sL)
            t.reward_follower[sz.reward_index(Agent::follower, s, sL, aF, aL)] = -cost;
        }
      }
    }
    return t;
  };

  spec.tables_at_mf = tables_at;
  spec.base = tables_at(initial_energy_mean_field(grid, disc));
  return spec;
}

SimulationOutput simulate(const GridSpec& grid, const ShapeSet& shapes,
                          const DiscretizationConfig& disc, const SimulationConfig& sim,
                          const MFEResult* policies) {
  grid.validate();
  const EnergyStateSpace sp = energy_state_space(grid, disc);
  if (sim.learn) {
    if (policies == nullptr)
      throw std::invalid_argument("simulate: learned mode requires solved policies");
    if (policies->follower_policy.states() != sp.follower_states() ||
        policies->leader_policy.states() != sp.leader_states())
      throw std::invalid_argument("simulate: policies do not match the discretization");
  }

  const int nb = grid.n_buses();
  const int T = grid.steps_per_day;
  std::mt19937_64 tariff_rng(subsystem_seed(sim.seed, "tariff"));
  const uint64_t profile_seed = subsystem_seed(sim.seed, "profiles");

  std::vector<StorageModel> models;
  for (int b = 0; b < nb; ++b) models.push_back(model_for(grid, disc, b));

  // Population distribution over buckets per node; everyone starts empty.
  std::vector<Vec> dist(nb, Vec(sp.buckets, 0.0));
  for (int b = 0; b < nb; ++b) dist[b][0] = 1.0;

  SimulationOutput out;
  out.imv_overall_bus.assign(nb, 0.0);
  std::vector<Vec> lmp_series(nb);  // full run, per bus

  int tariff_index = 0;
  int leader_state = 0;
  const int n_classes = 1 + nb;
  Vec total_exp_class(n_classes, 0.0);

  for (int d = 0; d < sim.days; ++d) {
    if (sim.learn && d % sim.days_per_leader_step == 0)
      tariff_index = sample_index(tariff_rng, policies->leader_policy.row(leader_state));
    const Tariff& tariff = sim.learn ? disc.tariff_grid[tariff_index] : sim.baseline_tariff;
    out.tariff_trace.push_back(sim.learn ? tariff_index : -1);

    const DayProfile day = profiles(shapes, grid, profile_seed + static_cast<uint64_t>(d), sim.noise);

    Vec day_exp_class(n_classes, 0.0);
    std::vector<Vec> day_lmp(nb);

    for (int t = 0; t < T; ++t) {
      // Per-node expected storage delta and next bucket distribution.
      std::vector<Vec> delta(nb, Vec(T, 0.0));
      std::vector<Vec> next_dist(nb, Vec(sp.buckets, 0.0));
      std::vector<Vec> action_mix(nb);  // (bucket, action) weights for cost accounting
      for (int b = 0; b < nb; ++b) {
        action_mix[b].assign(static_cast<size_t>(sp.buckets) * kStorageActions, 0.0);
        for (int bucket = 0; bucket < sp.buckets; ++bucket) {
          const double w0 = dist[b][bucket];
          if (w0 == 0.0) continue;
          for (int a = 0; a < kStorageActions; ++a) {
            double pw;
            if (sim.learn) {
              const int s = sp.follower_index(b, bucket, t);
              pw = policies->follower_policy.row(s)[a];
            } else {
              pw = a == static_cast<int>(StorageAction::hold) ? 1.0 : 0.0;
            }
            if (pw == 0.0) continue;
            const auto [next_bucket, dkwh] = bucket_move(models[b], bucket, static_cast<StorageAction>(a));
            delta[b][t] += w0 * pw * dkwh;
            next_dist[b][next_bucket] += w0 * pw;
            action_mix[b][static_cast<size_t>(bucket) * kStorageActions + a] = w0 * pw;
          }
        }
      }

      const Vec demand = demand_mw_at(grid, day, delta, t);
      const Vec factors = capacity_factors(grid, day.solar_factor[t]);
      DispatchResult dres;
      try {
        dres = dispatch(grid, demand, disc.segments, &factors);
      } catch (DispatchInfeasible& e) {
        throw DispatchInfeasible("day " + std::to_string(d) + " step " + std::to_string(t) + ": " +
                                     e.what(),
                                 e.certificate);
      }
      dres.verify(grid, demand);

      for (int b = 0; b < nb; ++b) {
        const double price = dres.lmp[b] / 1000.0;
        const double cons_net = day.consumer_kwh[b][t];
        const double cons_cost = cons_net * (price + tariff.adder_consumer[b]);
        // Expected prosumer cost over the realized (bucket, action) mix.
        double pcost = 0.0;
        for (int bucket = 0; bucket < sp.buckets; ++bucket)
          for (int a = 0; a < kStorageActions; ++a) {
            const double w = action_mix[b][static_cast<size_t>(bucket) * kStorageActions + a];
            if (w == 0.0) continue;
            const double net = day.prosumer_kwh[b][t] +
                               bucket_move(models[b], bucket, static_cast<StorageAction>(a)).second;
            pcost += w * (net >= 0.0 ? net * (price + tariff.adder_prosumer[b]) : net * price);
          }
        day_exp_class[0] += grid.buses[b].consumer_population * cons_cost;
        day_exp_class[1 + b] += pcost;

        double mean_level = 0.0;
        for (int bucket = 0; bucket < sp.buckets; ++bucket)
          mean_level += next_dist[b][bucket] *
                        (sp.buckets > 1 ? static_cast<double>(bucket) / (sp.buckets - 1) : 0.0);

        StepRecord rec;
        rec.day = d;
        rec.step = t;
        rec.bus = b;
        rec.lmp = dres.lmp[b];
        rec.net_demand_mw = demand[b];
        rec.storage_level_frac = mean_level;
        rec.prosumer_net_kwh = day.prosumer_kwh[b][t] + delta[b][t];
        rec.consumer_net_kwh = cons_net;
        rec.prosumer_cost_usd = pcost;
        rec.consumer_cost_usd = cons_cost;
        out.steps.push_back(rec);

        day_lmp[b].push_back(dres.lmp[b]);
        lmp_series[b].push_back(dres.lmp[b]);
      }
      for (size_t l = 0; l < grid.lines.size(); ++l)
        out.flows.push_back({d, t, static_cast<int>(l), dres.line_flow_mw[l],
                             grid.lines[l].flow_limit_mw});
      for (int b = 0; b < nb; ++b) dist[b] = next_dist[b];
    }

    // Daily metrics.
    DayMetrics m;
    m.day = d;
    for (int b = 0; b < nb; ++b) m.imv_bus.push_back(imv(day_lmp[b]));
    m.imv_mean = std::accumulate(m.imv_bus.begin(), m.imv_bus.end(), 0.0) / nb;

    double cons_pop = 0.0;
    double fixed_cons = 0.0;
    for (int b = 0; b < nb; ++b) {
      cons_pop += grid.buses[b].consumer_population;
      fixed_cons += grid.buses[b].consumer_population * tariff.fixed_consumer[b];
    }
    const double cons_daily = (day_exp_class[0] + fixed_cons) / cons_pop;
    m.eei_class.push_back(eei(cons_daily, grid.buses[0].consumer_income / 365.0));
    total_exp_class[0] += cons_daily;
    for (int b = 0; b < nb; ++b) {
      const double daily = day_exp_class[1 + b] + tariff.fixed_prosumer[b];
      m.eei_class.push_back(grid.buses[b].prosumer_population > 0
                                ? eei(daily, grid.buses[b].prosumer_income / 365.0)
                                : 0.0);
      total_exp_class[1 + b] += daily;
    }
    m.eei_spread = *std::max_element(m.eei_class.begin(), m.eei_class.end()) -
                   *std::min_element(m.eei_class.begin(), m.eei_class.end());
    out.day_metrics.push_back(m);

    // The utility observes yesterday's summary before its next move.
    double lmp_mean = 0.0;
    for (int b = 0; b < nb; ++b)
      lmp_mean += std::accumulate(day_lmp[b].begin(), day_lmp[b].end(), 0.0) / day_lmp[b].size();
    lmp_mean /= nb;
    leader_state = sp.leader_index(edge_bucket(disc.lmp_bucket_edges, lmp_mean),
                                   edge_bucket(disc.eei_gap_bucket_edges, m.eei_spread));
  }

  for (int b = 0; b < nb; ++b) out.imv_overall_bus[b] = imv(lmp_series[b]);
  out.imv_overall_mean =
      std::accumulate(out.imv_overall_bus.begin(), out.imv_overall_bus.end(), 0.0) / nb;
  out.eei_overall_class.assign(n_classes, 0.0);
  out.eei_overall_class[0] =
      eei(total_exp_class[0] / sim.days, grid.buses[0].consumer_income / 365.0);
  for (int b = 0; b < nb; ++b)
    out.eei_overall_class[1 + b] =
        grid.buses[b].prosumer_population > 0
            ? eei(total_exp_class[1 + b] / sim.days, grid.buses[b].prosumer_income / 365.0)
            : 0.0;
  out.eei_overall_spread =
      *std::max_element(out.eei_overall_class.begin(), out.eei_overall_class.end()) -
      *std::min_element(out.eei_overall_class.begin(), out.eei_overall_class.end());
  return out;
}

namespace {

Tariff parse_tariff(const json& j, int nb) {
  Tariff t;
  auto vec = [&](const char* key) {
    Vec v = j.at(key).get<Vec>();
    if (static_cast<int>(v.size()) != nb)
      throw ConfigError(std::string("tariff field ") + key + " must have one entry per bus");
    return v;
  };
  t.adder_consumer = vec("adder_consumer");
  t.adder_prosumer = vec("adder_prosumer");
  t.fixed_consumer = vec("fixed_consumer");
  t.fixed_prosumer = vec("fixed_prosumer");
  for (const Vec* v : {&t.adder_consumer, &t.adder_prosumer, &t.fixed_consumer, &t.fixed_prosumer})
    for (double x : *v)
      if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("tariff entries must be finite and >= 0");
  return t;
}

}  // namespace

EnergyConfig load_energy_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid file: invalid JSON: ") + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();

  EnergyConfig cfg;
  try {
    for (const auto& jb : doc.at("buses")) {
      Bus b;
      b.name = jb.at("name").get<std::string>();
      b.p_load_kw = jb.at("p_load_kw").get<double>();
      b.q_load_kvar = jb.value("q_load_kvar", 0.0);
      b.max_voltage_pu = jb.value("max_voltage_pu", 0.0);
      b.min_voltage_pu = jb.value("min_voltage_pu", 0.0);
      b.voltage_magnitude_pu = jb.value("voltage_magnitude_pu", 0.0);
      b.voltage_angle_deg = jb.value("voltage_angle_deg", 0.0);
      b.base_kv = jb.value("base_kv", 0.0);
      b.prosumer_population = jb.at("prosumer_population").get<int>();
      b.storage_capacity_kwh = jb.at("storage_capacity_kwh").get<double>();
      b.one_way_efficiency = jb.at("one_way_efficiency").get<double>();
      b.prosumer_income = jb.at("prosumer_income_usd").get<double>();
      b.consumer_population = jb.at("consumer_population").get<int>();
      b.consumer_income = jb.at("consumer_income_usd").get<double>();
      cfg.grid.buses.push_back(b);
    }
    auto bus_index = [&](const std::string& name) {
      for (int i = 0; i < cfg.grid.n_buses(); ++i)
        if (cfg.grid.buses[i].name == name) return i;
      throw ConfigError("grid file: unknown bus name " + name);
    };
    for (const auto& jl : doc.at("lines")) {
      Line l;
      l.name = jl.at("name").get<std::string>();
      l.source = bus_index(jl.at("source").get<std::string>());
      l.target = bus_index(jl.at("target").get<std::string>());
      l.reactance_ohm = jl.at("reactance_ohm").get<double>();
      l.susceptance_s = jl.value("susceptance_s", 0.0);
      l.flow_limit_mw = jl.at("flow_limit_mw").get<double>();
      cfg.grid.lines.push_back(l);
    }
    for (const auto& jg : doc.at("generators")) {
      Generator g;
      g.name = jg.at("name").get<std::string>();
      g.bus = bus_index(jg.at("bus").get<std::string>());
      g.fuel_type = jg.value("fuel_type", "");
      g.free_fuel = jg.value("free_fuel", g.fuel_type == "Solar");
      if (!g.free_fuel) {
        const auto& cc = jg.at("cost_curve");
        g.cost_a = cc.at(0).get<double>();
        g.cost_b = cc.at(1).get<double>();
        g.cost_c = cc.at(2).get<double>();
      }
      g.max_production_mw = jg.at("max_production_mw").get<double>();
      cfg.grid.generators.push_back(g);
    }
    cfg.grid.steps_per_day = doc.value("steps_per_day", 8);

    const auto& shapes = doc.at("shapes");
    std::vector<std::string> pros;
    for (const auto& p : shapes.at("prosumer_demand"))
      pros.push_back((dir / p.get<std::string>()).string());
    cfg.shapes = load_shapes((dir / shapes.at("consumer_demand").get<std::string>()).string(), pros,
                             (dir / shapes.at("solar").get<std::string>()).string());

    if (doc.contains("discretization")) {
      const auto& jd = doc.at("discretization");
      cfg.disc.storage_buckets = jd.value("storage_buckets", 4);
      cfg.disc.lmp_bucket_edges = jd.value("lmp_bucket_edges", Vec{});
      cfg.disc.eei_gap_bucket_edges = jd.value("eei_gap_bucket_edges", Vec{});
      cfg.disc.segments = jd.value("segments", 10);
      const std::string objective = jd.value("objective", "spread");
      if (objective == "spread")
        cfg.disc.objective = LeaderObjective::eei_spread;
      else if (objective == "variance")
        cfg.disc.objective = LeaderObjective::eei_variance;
      else
        throw ConfigError("discretization.objective must be 'spread' or 'variance'");
      for (const auto& jt : jd.at("tariff_grid"))
        cfg.disc.tariff_grid.push_back(parse_tariff(jt, cfg.grid.n_buses()));
    }
    cfg.baseline_tariff = parse_tariff(doc.at("baseline_tariff"), cfg.grid.n_buses());
    cfg.days_per_leader_step = doc.value("days_per_leader_step", 3);
    if (doc.contains("solver")) {
      const auto& js = doc.at("solver");
      cfg.solver_rho = js.value("rho", 0.05);
      cfg.solver_tol = js.value("tol", 1e-6);
      cfg.solver_max_outer = js.value("max_outer", 100);
      cfg.solver_max_inner = js.value("max_inner", 300);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid file: ") + e.what());
  }
  cfg.grid.validate();
  return cfg;
}

}  // namespace stackmf
