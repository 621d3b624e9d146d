#include "stackmf/game.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace stackmf {

const char* agent_name(Agent a) { return a == Agent::leader ? "leader" : "follower"; }

void Policy::validate() const {
  for (int s = 0; s < states(); ++s) {
    double sum = 0.0;
    for (double v : row(s)) {
      if (!(v >= 0.0)) throw std::invalid_argument("policy row " + std::to_string(s) + " has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kProbTolerance)
      throw std::invalid_argument("policy row " + std::to_string(s) + " sums to " + std::to_string(sum));
  }
}

Policy uniform_policy(int states, int actions) {
  Policy p(states, actions, 1.0 / actions);
  return p;
}

double policy_l1_distance(const Policy& p, const Policy& q) {
  if (p.states() != q.states() || p.actions() != q.actions())
    throw std::invalid_argument("policy_l1_distance: dimension mismatch");
  double worst = 0.0;
  for (int s = 0; s < p.states(); ++s) {
    double d = 0.0;
    auto pr = p.row(s), qr = q.row(s);
    for (int a = 0; a < p.actions(); ++a) d += std::abs(pr[a] - qr[a]);
    worst = std::max(worst, d);
  }
  return worst;
}

double MeanField::total() const {
  double t = 0.0;
  for (double v : mass) t += v;
  return t;
}

Vec MeanField::state_marginal() const {
  Vec m(states, 0.0);
  for (int s = 0; s < states; ++s)
    for (int a = 0; a < actions; ++a) m[s] += at(s, a);
  return m;
}

void MeanField::validate() const {
  for (double v : mass)
    if (!(v >= 0.0)) throw std::invalid_argument("mean field has a negative entry");
  if (std::abs(total() - 1.0) > kProbTolerance)
    throw std::invalid_argument("mean field mass is " + std::to_string(total()));
}

MeanField uniform_mean_field(int states, int actions) {
  return MeanField(states, actions, 1.0 / (static_cast<double>(states) * actions));
}

double mean_field_l1(const MeanField& a, const MeanField& b) {
  if (a.states != b.states || a.actions != b.actions)
    throw std::invalid_argument("mean_field_l1: dimension mismatch");
  double d = 0.0;
  for (size_t i = 0; i < a.mass.size(); ++i) d += std::abs(a.mass[i] - b.mass[i]);
  return d;
}

size_t GameSpec::transition_index(Agent ag, int s, int a_own, int a_other, int s_next) const {
  const int S = states_of(ag), Ao = actions_of(ag), At = actions_of(opponent_of(ag));
  (void)At;
  return ((static_cast<size_t>(s) * Ao + a_own) * actions_of(opponent_of(ag)) + a_other) * S + s_next;
}

size_t GameSpec::reward_index(Agent ag, int s_own, int s_other, int a_own, int a_other) const {
  const int So = states_of(opponent_of(ag));
  const int Ao = actions_of(ag), At = actions_of(opponent_of(ag));
  return ((static_cast<size_t>(s_own) * So + s_other) * Ao + a_own) * At + a_other;
}

double GameSpec::transition(const GameTables& t, Agent ag, int s, int a_own, int a_other,
                            int s_next) const {
  const Vec& tab = ag == Agent::leader ? t.transition_leader : t.transition_follower;
  return tab[transition_index(ag, s, a_own, a_other, s_next)];
}

double GameSpec::reward(const GameTables& t, Agent ag, int s_own, int s_other, int a_own,
                        int a_other) const {
  const Vec& tab = ag == Agent::leader ? t.reward_leader : t.reward_follower;
  return tab[reward_index(ag, s_own, s_other, a_own, a_other)];
}

size_t GameSpec::transition_table_size(Agent ag) const {
  return static_cast<size_t>(states_of(ag)) * actions_of(ag) * actions_of(opponent_of(ag)) *
         states_of(ag);
}

size_t GameSpec::reward_table_size(Agent ag) const {
  return static_cast<size_t>(states_of(ag)) * states_of(opponent_of(ag)) * actions_of(ag) *
         actions_of(opponent_of(ag));
}

GameTables GameSpec::tables_for(const MeanField* mu) const {
  if (mf_dependent && tables_at_mf && mu != nullptr) return tables_at_mf(*mu);
  return base;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    switch (v.kind) {
      case Violation::Kind::dimension: os << "dimension: "; break;
      case Violation::Kind::row_sum: os << "row-sum: "; break;
      case Violation::Kind::nonnegative: os << "negative-entry: "; break;
      case Violation::Kind::reward_bound: os << "reward-bound: "; break;
      case Violation::Kind::gamma_range: os << "gamma-range: "; break;
    }
    os << v.where << " (value " << v.value << ")\n";
  }
  return os.str();
}

namespace {

void check_tables(const GameSpec& spec, Agent ag, const GameTables& t, ValidationReport& rep) {
  const std::string who = agent_name(ag);
  const Vec& trans = ag == Agent::leader ? t.transition_leader : t.transition_follower;
  const Vec& rew = ag == Agent::leader ? t.reward_leader : t.reward_follower;
  if (trans.size() != spec.transition_table_size(ag)) {
    rep.violations.push_back({Violation::Kind::dimension, who + " transition table size",
                              static_cast<double>(trans.size())});
    return;
  }
  if (rew.size() != spec.reward_table_size(ag)) {
    rep.violations.push_back(
        {Violation::Kind::dimension, who + " reward table size", static_cast<double>(rew.size())});
    return;
  }
  const int S = spec.states_of(ag), Ao = spec.actions_of(ag), At = spec.actions_of(opponent_of(ag));
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < Ao; ++a)
      for (int b = 0; b < At; ++b) {
        double sum = 0.0;
        bool neg = false;
        for (int sn = 0; sn < S; ++sn) {
          double p = spec.transition(t, ag, s, a, b, sn);
          if (p < 0.0) neg = true;
          sum += p;
        }
        std::string where = who + " transition row (s=" + std::to_string(s) +
                            ", a=" + std::to_string(a) + ", a_other=" + std::to_string(b) + ")";
        if (neg) rep.violations.push_back({Violation::Kind::nonnegative, where, 0.0});
        if (std::abs(sum - 1.0) > kProbTolerance)
          rep.violations.push_back({Violation::Kind::row_sum, where, sum});
      }
  for (double r : rew)
    if (!(std::abs(r) <= spec.reward_bound)) {
      rep.violations.push_back({Violation::Kind::reward_bound, who + " reward table", r});
      break;
    }
}

}  // namespace

ValidationReport validate_game(const GameSpec& spec) {
  ValidationReport rep;
  if (spec.leader_states <= 0 || spec.follower_states <= 0 || spec.leader_actions <= 0 ||
      spec.follower_actions <= 0) {
    rep.violations.push_back({Violation::Kind::dimension, "state/action counts must be positive",
                              static_cast<double>(spec.leader_states)});
    return rep;
  }
  if (!(spec.gamma_leader >= 0.0 && spec.gamma_leader < 1.0))
    rep.violations.push_back({Violation::Kind::gamma_range, "gamma_leader", spec.gamma_leader});
  if (!(spec.gamma_follower >= 0.0 && spec.gamma_follower < 1.0))
    rep.violations.push_back({Violation::Kind::gamma_range, "gamma_follower", spec.gamma_follower});
  check_tables(spec, Agent::leader, spec.base, rep);
  check_tables(spec, Agent::follower, spec.base, rep);
  return rep;
}

std::vector<TrajectoryStep> sample_trajectory(const GameSpec& spec, const Policy& leader,
                                              const Policy& follower, int steps, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&rng](std::span<const double> dist) {
    double u = (rng() >> 11) * 0x1.0p-53;
    double acc = 0.0;
    for (size_t i = 0; i < dist.size(); ++i) {
      acc += dist[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(dist.size()) - 1;
  };
  std::vector<TrajectoryStep> out;
  out.reserve(steps);
  JointState st{0, 0};
  const GameTables& t = spec.base;
  for (int k = 0; k < steps; ++k) {
    int eL = spec.effective_index(Agent::leader, st.leader, st.follower);
    int eF = spec.effective_index(Agent::follower, st.follower, st.leader);
    int aL = draw(leader.row(eL));
    int aF = draw(follower.row(eF));
    out.push_back({st, aL, aF});
    Vec rowL(spec.leader_states), rowF(spec.follower_states);
    for (int sn = 0; sn < spec.leader_states; ++sn)
      rowL[sn] = spec.transition(t, Agent::leader, st.leader, aL, aF, sn);
    for (int sn = 0; sn < spec.follower_states; ++sn)
      rowF[sn] = spec.transition(t, Agent::follower, st.follower, aF, aL, sn);
    st.leader = draw(rowL);
    st.follower = draw(rowF);
  }
  return out;
}

}  // namespace stackmf
