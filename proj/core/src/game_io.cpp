#include "stackmf/game_io.hpp"

#include <fstream>

#include <json.hpp>

#include "stackmf/csv.hpp"

namespace stackmf {

using nlohmann::json;

namespace {

Vec flatten4(const json& arr, const char* field) {
  Vec out;
  try {
    for (const auto& a : arr)
      for (const auto& b : a)
        for (const auto& c : b)
          for (const auto& d : c) out.push_back(d.get<double>());
  } catch (const json::exception&) {
    throw ConfigError(std::string("game file: field '") + field +
                      "' must be a 4-deep nested numeric array");
  }
  return out;
}

}  // namespace

GameSpec parse_game(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("game file: invalid JSON: ") + e.what());
  }
  GameSpec spec;
  try {
    spec.leader_states = doc.at("leader_states").get<int>();
    spec.follower_states = doc.at("follower_states").get<int>();
    spec.leader_actions = doc.at("leader_actions").get<int>();
    spec.follower_actions = doc.at("follower_actions").get<int>();
    spec.gamma_leader = doc.at("gamma_leader").get<double>();
    spec.gamma_follower = doc.at("gamma_follower").get<double>();
    spec.reward_bound = doc.at("reward_bound").get<double>();
    spec.mf_dependent = doc.value("mf_dependent", false);
    spec.base.transition_leader = flatten4(doc.at("transition_leader"), "transition_leader");
    spec.base.transition_follower = flatten4(doc.at("transition_follower"), "transition_follower");
    spec.base.reward_leader = flatten4(doc.at("reward_leader"), "reward_leader");
    spec.base.reward_follower = flatten4(doc.at("reward_follower"), "reward_follower");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("game file: ") + e.what());
  }
  auto report = validate_game(spec);
  if (!report.ok())
    throw ConfigError("game file rejected by validation:\n" + report.to_string());
  return spec;
}

GameSpec load_game(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open game file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_game(text);
}

namespace {

json nest_transition(const GameSpec& spec, Agent ag, const Vec& table) {
  const int S = spec.states_of(ag), Ao = spec.actions_of(ag), At = spec.actions_of(opponent_of(ag));
  json out = json::array();
  for (int s = 0; s < S; ++s) {
    json level_a = json::array();
    for (int a = 0; a < Ao; ++a) {
      json level_b = json::array();
      for (int b = 0; b < At; ++b) {
        json row = json::array();
        for (int sn = 0; sn < S; ++sn) row.push_back(table[spec.transition_index(ag, s, a, b, sn)]);
        level_b.push_back(row);
      }
      level_a.push_back(level_b);
    }
    out.push_back(level_a);
  }
  return out;
}

json nest_reward(const GameSpec& spec, Agent ag, const Vec& table) {
  const int S = spec.states_of(ag), So = spec.states_of(opponent_of(ag));
  const int Ao = spec.actions_of(ag), At = spec.actions_of(opponent_of(ag));
  json out = json::array();
  for (int s = 0; s < S; ++s) {
    json l1 = json::array();
    for (int so = 0; so < So; ++so) {
      json l2 = json::array();
      for (int a = 0; a < Ao; ++a) {
        json l3 = json::array();
        for (int b = 0; b < At; ++b) l3.push_back(table[spec.reward_index(ag, s, so, a, b)]);
        l2.push_back(l3);
      }
      l1.push_back(l2);
    }
    out.push_back(l1);
  }
  return out;
}

}  // namespace

void save_game(const GameSpec& spec, const std::string& path) {
  json doc;
  doc["leader_states"] = spec.leader_states;
  doc["follower_states"] = spec.follower_states;
  doc["leader_actions"] = spec.leader_actions;
  doc["follower_actions"] = spec.follower_actions;
  doc["gamma_leader"] = spec.gamma_leader;
  doc["gamma_follower"] = spec.gamma_follower;
  doc["reward_bound"] = spec.reward_bound;
  doc["mf_dependent"] = spec.mf_dependent;
  doc["transition_leader"] = nest_transition(spec, Agent::leader, spec.base.transition_leader);
  doc["transition_follower"] = nest_transition(spec, Agent::follower, spec.base.transition_follower);
  doc["reward_leader"] = nest_reward(spec, Agent::leader, spec.base.reward_leader);
  doc["reward_follower"] = nest_reward(spec, Agent::follower, spec.base.reward_follower);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << doc.dump(2) << "\n";
}

void export_policy_csv(const Policy& p, const std::string& path) {
  CsvWriter w(path);
  w.write_header({"state", "action", "probability"});
  for (int s = 0; s < p.states(); ++s)
    for (int a = 0; a < p.actions(); ++a) {
      w.begin_row();
      w.field(s);
      w.field(a);
      w.field(p.row(s)[a]);
      w.end_row();
    }
}

Policy read_policy_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  int states = 0, actions = 0;
  const int cs = t.column("state"), ca = t.column("action"), cp = t.column("probability");
  if (cs < 0 || ca < 0 || cp < 0) throw ConfigError("policy csv: missing columns");
  for (size_t r = 0; r < t.rows.size(); ++r) {
    states = std::max(states, static_cast<int>(t.number(r, cs)) + 1);
    actions = std::max(actions, static_cast<int>(t.number(r, ca)) + 1);
  }
  Policy p(states, actions);
  for (size_t r = 0; r < t.rows.size(); ++r)
    p.row(static_cast<int>(t.number(r, cs)))[static_cast<int>(t.number(r, ca))] = t.number(r, cp);
  return p;
}

}  // namespace stackmf
