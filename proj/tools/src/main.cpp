#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stackmf/csv.hpp"
#include "stackmf/energy.hpp"
#include "stackmf/game_io.hpp"
#include "stackmf/meanfield.hpp"
#include "stackmf/rng.hpp"
#include "stackmf/sse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stackmf;

namespace {

constexpr const char* kVersion = "0.1.0";

// 0 success / 1 input error / 2 non-convergence / 3 runtime failure
enum ExitCode { kOk = 0, kInputError = 1, kNonConvergence = 2, kRuntimeFailure = 3 };

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

struct ManifestBuilder {
  json doc;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  ManifestBuilder(const std::string& command, const std::string& config_path, uint64_t seed) {
    doc["command"] = command;
    doc["config"] = config_path;
    doc["config_hash"] = file_hash(config_path);
    doc["seed"] = seed;
    doc["seeds"] = {{"tariff", subsystem_seed(seed, "tariff")},
                    {"profiles", subsystem_seed(seed, "profiles")}};
    doc["version"] = kVersion;
  }

  void add_output(const std::string& path) { outputs.push_back(path); }

  void write(const fs::path& dir) {
    doc["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    doc["outputs"] = outputs;
    for (const auto& p : outputs)
      if (!fs::exists(p)) throw std::runtime_error("manifest lists a missing output: " + p);
    std::ofstream out(dir / "run_manifest.json");
    out << doc.dump(2) << "\n";
  }
};

fs::path resolve_out_dir(std::string out_flag) {
  if (const char* env = std::getenv("STACKMF_OUT_DIR"); env && *env) out_flag = env;
  fs::path dir = out_flag.empty() ? fs::path(".") : fs::path(out_flag);
  fs::create_directories(dir);
  return dir;
}

struct VariantFlags {
  std::string name = "regularized";
  double epsilon = 0.1;
  double rho = 0.1;

  SSEVariant build() const {
    if (name == "exact") return exact_variant();
    if (name == "boltzmann") return boltzmann_variant(epsilon);
    if (name == "regularized") return regularized_variant(rho);
    throw ConfigError("unknown variant: " + name);
  }
};

void write_trajectory_csv(const fs::path& path, const SSEResult& res) {
  CsvWriter w(path.string());
  w.write_header({"iteration", "l1_change", "leader_value", "follower_value"});
  for (int i = 0; i < res.iterations; ++i) {
    w.begin_row();
    w.field(i);
    w.field(res.trajectory[i]);
    w.field(res.leader_values[i]);
    w.field(res.follower_values[i]);
    w.end_row();
  }
}

int cmd_solve_sse(const std::string& config, const VariantFlags& vf, double tol, int max_outer,
                  uint64_t seed, const std::string& out_flag) {
  const fs::path dir = resolve_out_dir(out_flag);
  GameSpec spec = load_game(config);
  SSEConfig cfg;
  cfg.tol = tol;
  cfg.max_outer = max_outer;
  ManifestBuilder manifest("solve-sse", config, seed);
  manifest.doc["variant"] = vf.name;

  SSEResult res = solve_sse(spec, uniform_policy(spec.effective_states(Agent::leader),
                                                 spec.leader_actions),
                            vf.build(), cfg);

  export_policy_csv(res.leader_policy, (dir / "leader_policy.csv").string());
  export_policy_csv(res.follower_policy, (dir / "follower_policy.csv").string());
  write_trajectory_csv(dir / "trajectory.csv", res);
  manifest.add_output((dir / "leader_policy.csv").string());
  manifest.add_output((dir / "follower_policy.csv").string());
  manifest.add_output((dir / "trajectory.csv").string());
  manifest.doc["convergence"] = {{"converged", res.converged},
                                 {"iterations", res.iterations},
                                 {"final_change", res.trajectory.empty() ? 0.0 : res.trajectory.back()},
                                 {"tol", tol}};
  if (res.variant.kind == SSEVariant::Kind::boltzmann) {
    manifest.doc["convergence"]["alpha_leader"] = res.alpha_leader;
    manifest.doc["convergence"]["alpha_follower"] = res.alpha_follower;
    manifest.doc["convergence"]["phi"] = res.phi;
  }
  manifest.write(dir);
  if (!res.converged) {
    std::cerr << "solve-sse: not converged after " << res.iterations << " iterations (last change "
              << (res.trajectory.empty() ? 0.0 : res.trajectory.back()) << ")\n";
    return kNonConvergence;
  }
  std::cout << "solve-sse: converged in " << res.iterations << " iterations\n";
  return kOk;
}

int cmd_solve_smfe(const std::string& config, const VariantFlags& vf, double tol, int max_outer,
                   int max_inner, uint64_t seed, const std::string& out_flag) {
  const fs::path dir = resolve_out_dir(out_flag);
  GameSpec spec = load_game(config);
  if (!spec.mf_dependent) throw ConfigError("solve-smfe: config must set mf_dependent");
  MFEConfig cfg;
  cfg.tol = tol;
  cfg.max_outer = max_outer;
  cfg.max_inner = max_inner;
  ManifestBuilder manifest("solve-smfe", config, seed);
  manifest.doc["variant"] = vf.name;
  manifest.doc["max_inner"] = max_inner;

  MFEResult res = solve_smfe(spec, uniform_policy(spec.leader_states, spec.leader_actions),
                             uniform_mean_field(spec.follower_states, spec.follower_actions),
                             vf.build(), cfg);

  export_policy_csv(res.leader_policy, (dir / "leader_policy.csv").string());
  export_policy_csv(res.follower_policy, (dir / "follower_policy.csv").string());
  export_mean_field_csv(res.mean_field, (dir / "mean_field.csv").string());
  {
    CsvWriter w((dir / "trajectory.csv").string());
    w.write_header({"iteration", "l1_change", "inner_iterations"});
    for (int i = 0; i < res.outer_iterations; ++i) {
      w.begin_row();
      w.field(i);
      w.field(res.leader_trajectory[i]);
      w.field(res.inner_iteration_counts[i]);
      w.end_row();
    }
  }
  for (const char* f : {"leader_policy.csv", "follower_policy.csv", "mean_field.csv",
                        "trajectory.csv"})
    manifest.add_output((dir / f).string());
  manifest.doc["convergence"] = {{"converged", res.converged},
                                 {"outer_iterations", res.outer_iterations},
                                 {"consistency_residual", res.consistency_residual},
                                 {"follower_optimality_residual", res.follower_optimality_residual},
                                 {"leader_optimality_residual", res.leader_optimality_residual},
                                 {"tol", tol}};
  manifest.write(dir);
  if (!res.converged) {
    std::cerr << "solve-smfe: not converged after " << res.outer_iterations << " outer iterations\n";
    return kNonConvergence;
  }
  std::cout << "solve-smfe: converged in " << res.outer_iterations
            << " outer iterations (consistency " << res.consistency_residual << ")\n";
  return kOk;
}

int cmd_energy(const std::string& grid_path, int days, uint64_t seed, const std::string& learn,
               const std::string& out_flag) {
  if (learn != "on" && learn != "off") throw ConfigError("--learn must be 'on' or 'off'");
  const fs::path dir = resolve_out_dir(out_flag);
  EnergyConfig cfg = load_energy_config(grid_path);
  ManifestBuilder manifest("energy", grid_path, seed);
  manifest.doc["days"] = days;
  manifest.doc["learn"] = learn;

  SimulationConfig sim;
  sim.days = days;
  sim.seed = seed;
  sim.learn = learn == "on";
  sim.baseline_tariff = cfg.baseline_tariff;
  sim.days_per_leader_step = cfg.days_per_leader_step;

  MFEResult solved;
  if (sim.learn) {
    GameSpec game = build_stackelberg_game(cfg.grid, cfg.shapes, cfg.disc);
    MFEConfig mfe;
    mfe.tol = cfg.solver_tol;
    mfe.max_outer = cfg.solver_max_outer;
    mfe.max_inner = cfg.solver_max_inner;
    solved = solve_smfe(game, uniform_policy(game.leader_states, game.leader_actions),
                        initial_energy_mean_field(cfg.grid, cfg.disc),
                        regularized_variant(cfg.solver_rho), mfe);
    manifest.doc["solver"] = {{"converged", solved.converged},
                              {"outer_iterations", solved.outer_iterations},
                              {"consistency_residual", solved.consistency_residual},
                              {"rho", cfg.solver_rho}};
    if (!solved.converged) {
      std::cerr << "energy: equilibrium solve did not converge\n";
      manifest.write(dir);
      return kNonConvergence;
    }
  }

  SimulationOutput out = simulate(cfg.grid, cfg.shapes, cfg.disc, sim,
                                  sim.learn ? &solved : nullptr);

  {
    CsvWriter w((dir / "per_step.csv").string());
    w.write_header({"day", "step", "bus", "lmp_usd_per_mwh", "net_demand_mw",
                    "storage_level_frac", "prosumer_net_kwh", "consumer_net_kwh",
                    "prosumer_cost_usd", "consumer_cost_usd"});
    for (const auto& r : out.steps) {
      w.begin_row();
      w.field(r.day);
      w.field(r.step);
      w.field(r.bus);
      w.field(r.lmp);
      w.field(r.net_demand_mw);
      w.field(r.storage_level_frac);
      w.field(r.prosumer_net_kwh);
      w.field(r.consumer_net_kwh);
      w.field(r.prosumer_cost_usd);
      w.field(r.consumer_cost_usd);
      w.end_row();
    }
  }
  {
    CsvWriter w((dir / "line_flows.csv").string());
    w.write_header({"day", "step", "line", "flow_mw", "limit_mw"});
    for (const auto& r : out.flows) {
      w.begin_row();
      w.field(r.day);
      w.field(r.step);
      w.field(r.line);
      w.field(r.flow_mw);
      w.field(r.limit_mw);
      w.end_row();
    }
  }
  {
    CsvWriter w((dir / "metrics.csv").string());
    std::vector<std::string> header{"day", "imv_mean"};
    for (int b = 0; b < cfg.grid.n_buses(); ++b) header.push_back("imv_" + cfg.grid.buses[b].name);
    header.push_back("eei_consumers");
    for (int b = 0; b < cfg.grid.n_buses(); ++b)
      header.push_back("eei_prosumers_" + cfg.grid.buses[b].name);
    header.push_back("eei_spread");
    w.write_header(header);
    for (const auto& m : out.day_metrics) {
      w.begin_row();
      w.field(m.day);
      w.field(m.imv_mean);
      for (double v : m.imv_bus) w.field(v);
      for (double v : m.eei_class) w.field(v);
      w.field(m.eei_spread);
      w.end_row();
    }
  }
  for (const char* f : {"per_step.csv", "line_flows.csv", "metrics.csv"})
    manifest.add_output((dir / f).string());
  manifest.doc["metrics"] = {{"imv_overall_mean", out.imv_overall_mean},
                             {"imv_overall_bus", out.imv_overall_bus},
                             {"eei_overall_class", out.eei_overall_class},
                             {"eei_overall_spread", out.eei_overall_spread}};
  manifest.write(dir);
  std::cout << "energy: " << days << " days simulated, IMV " << out.imv_overall_mean
            << ", EEI spread " << out.eei_overall_spread << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stationary Stackelberg and mean-field equilibrium solver with a 3-bus "
               "electricity-tariff experiment"};
  app.require_subcommand(1);

  std::string config, out_dir;
  VariantFlags vf;
  double tol = 1e-8;
  int max_outer = 500, max_inner = 500, days = 10;
  uint64_t seed = 1;
  std::string learn = "off";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "input file")->required();
    sub->add_option("--tol", tol, "outer-loop l1 tolerance");
    sub->add_option("--max-outer", max_outer, "outer iteration cap");
    sub->add_option("--seed", seed, "global seed");
    sub->add_option("--out", out_dir, "output directory (env STACKMF_OUT_DIR overrides)");
    sub->add_option("--variant", vf.name, "exact|boltzmann|regularized");
    sub->add_option("--epsilon", vf.epsilon, "projection radius (boltzmann)");
    sub->add_option("--rho", vf.rho, "entropy weight (regularized)");
  };

  CLI::App* sse = app.add_subcommand("solve-sse", "two-agent stationary equilibrium");
  add_common(sse);
  CLI::App* smfe = app.add_subcommand("solve-smfe", "mean-field stationary equilibrium");
  add_common(smfe);
  smfe->add_option("--max-inner", max_inner, "inner iteration cap (default 500)");

  CLI::App* energy = app.add_subcommand("energy", "3-bus tariff experiment");
  energy->add_option("grid", config, "grid file")->required();
  energy->add_option("--days", days, "days to simulate");
  energy->add_option("--seed", seed, "global seed");
  energy->add_option("--learn", learn, "on|off");
  energy->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sse->parsed()) return cmd_solve_sse(config, vf, tol, max_outer, seed, out_dir);
    if (smfe->parsed()) return cmd_solve_smfe(config, vf, tol, max_outer, max_inner, seed, out_dir);
    if (energy->parsed()) return cmd_energy(config, days, seed, learn, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInputError;
  } catch (const SolveError& e) {
    std::cerr << "non-convergence: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kInputError;
}
