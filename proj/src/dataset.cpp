#include "fairdice/dataset.hpp"

#include "fairdice/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace fairdice {

using nlohmann::json;

std::size_t TransitionDataset::n_trajectories() const {
  if (trajectory.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(trajectory.begin(), trajectory.end())) + 1;
}

void TransitionDataset::validate() const {
  const std::size_t n = size();
  if (rewards.size() != n * n_objectives || done.size() != n || trajectory.size() != n) {
    throw std::invalid_argument("TransitionDataset: column lengths disagree");
  }
  if (tabular()) {
    if (states.size() != n || next_states.size() != n || initial_states.size() != n) {
      throw std::invalid_argument("TransitionDataset: state columns disagree");
    }
  } else if (obs.size() != n * obs_dim || next_obs.size() != n * obs_dim ||
             initial_obs.size() != n_trajectories() * obs_dim) {
    throw std::invalid_argument("TransitionDataset: observation columns disagree");
  }
  if (!preferences.empty() && preferences.size() != n * n_objectives) {
    throw std::invalid_argument("TransitionDataset: preference tags disagree");
  }
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("TransitionDataset: non-finite reward");
  }
}

std::string describe(const Behavior& behavior) {
  struct Visitor {
    std::string operator()(const UniformRandom& b) const {
      return "uniform(stochasticity=" + json(b.stochasticity).dump() + ")";
    }
    std::string operator()(const OptimalityMix& b) const {
      return "optimality(" + json(b.level).dump() + ")";
    }
    std::string operator()(const GroupFairRef& b) const { return "reference(" + to_string(b.kind) + ")"; }
  };
  return std::visit(Visitor{}, behavior);
}

namespace {

struct Step {
  int s = 0;
  int a = 0;
  int s_next = 0;
  bool done = false;
  std::vector<double> reward;
};
using Trajectory = std::vector<Step>;

int sample_action(const std::vector<double>& policy, int s, int n_actions, Rng& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto row = policy.begin() + static_cast<std::ptrdiff_t>(s * n_actions);
  for (int a = 0; a < n_actions; ++a) {
    if (u < row[a]) return a;
    u -= row[a];
  }
  return n_actions - 1;
}

Trajectory rollout(const TabularMOMDP& env, const std::vector<double>& policy, std::size_t horizon,
                   double continue_probability, Rng& rng) {
  Trajectory traj;
  int s = env.sample_initial(rng);
  for (std::size_t t = 0; t < horizon && !env.terminal[static_cast<std::size_t>(s)]; ++t) {
    const int a = sample_action(policy, s, env.n_actions, rng);
    const Successor& succ = env.sample(s, a, rng);
    const bool done = env.terminal[static_cast<std::size_t>(succ.next)] != 0;
    traj.push_back({s, a, succ.next, done, succ.reward});
    s = succ.next;
    if (done) break;
    if (continue_probability < 1.0 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= continue_probability) {
      break;
    }
  }
  return traj;
}

TransitionDataset assemble(const TabularMOMDP& env, const std::vector<Trajectory>& trajectories,
                           std::string behavior, std::uint64_t seed) {
  TransitionDataset data;
  data.n_objectives = static_cast<std::size_t>(env.n_objectives);
  data.meta.env_id = env.id;
  data.meta.behavior = std::move(behavior);
  data.meta.seed = seed;
  data.meta.n_states = env.n_states;
  data.meta.n_actions = env.n_actions;
  data.meta.gamma = env.gamma;
  int traj_id = 0;
  for (const auto& traj : trajectories) {
    if (traj.empty()) continue;
    const int s0 = traj.front().s;
    for (const auto& step : traj) {
      data.states.push_back(step.s);
      data.actions.push_back(step.a);
      data.next_states.push_back(step.s_next);
      data.initial_states.push_back(s0);
      data.done.push_back(step.done ? 1 : 0);
      data.trajectory.push_back(traj_id);
      data.rewards.insert(data.rewards.end(), step.reward.begin(), step.reward.end());
    }
    ++traj_id;
  }
  data.meta.stats = compute_norm_stats(data);
  data.validate();
  return data;
}

std::vector<double> behavior_table(const TabularMOMDP& env, const Behavior& behavior) {
  const auto n = static_cast<std::size_t>(env.n_states * env.n_actions);
  const double uniform = 1.0 / static_cast<double>(env.n_actions);
  std::vector<double> table(n, uniform);
  if (const auto* mix = std::get_if<OptimalityMix>(&behavior)) {
    if (!(mix->level >= 0.0 && mix->level <= 1.0)) {
      throw std::invalid_argument("optimality level must lie in [0, 1]");
    }
    const auto greedy = scalarized_optimal_actions(env);
    for (int s = 0; s < env.n_states; ++s) {
      for (int a = 0; a < env.n_actions; ++a) {
        table[static_cast<std::size_t>(s * env.n_actions + a)] =
            (1.0 - mix->level) * uniform + (a == greedy[static_cast<std::size_t>(s)] ? mix->level : 0.0);
      }
    }
  } else if (std::holds_alternative<GroupFairRef>(behavior)) {
    throw std::invalid_argument("GroupFair reference policies need the GroupFair environment");
  }
  return table;
}

}  // namespace

TransitionDataset collect_with_policy(const TabularMOMDP& env, const std::vector<double>& policy,
                                      std::size_t n_trajectories, std::size_t horizon, Rng& rng,
                                      double continue_probability) {
  if (horizon < 1) throw std::invalid_argument("collect: horizon must be >= 1");
  if (!(continue_probability > 0.0 && continue_probability <= 1.0)) {
    throw std::invalid_argument("collect: continue probability must lie in (0, 1]");
  }
  if (policy.size() != static_cast<std::size_t>(env.n_states * env.n_actions)) {
    throw std::invalid_argument("collect: policy table has wrong size");
  }
  std::vector<Trajectory> trajectories;
  trajectories.reserve(n_trajectories);
  for (std::size_t i = 0; i < n_trajectories; ++i) {
    trajectories.push_back(rollout(env, policy, horizon, continue_probability, rng));
  }
  return assemble(env, trajectories, "policy-table", 0);
}

TransitionDataset collect_dataset(const TabularMOMDP& env, const Behavior& behavior,
                                  std::size_t n_trajectories, std::size_t horizon, Rng& rng,
                                  double continue_probability) {
  auto data = collect_with_policy(env, behavior_table(env, behavior), n_trajectories, horizon, rng,
                                  continue_probability);
  data.meta.behavior = describe(behavior);
  return data;
}

TransitionDataset collect_biased_four_rooms(const TabularMOMDP& env,
                                            const std::vector<double>& goal_mix,
                                            std::size_t n_trajectories, std::size_t horizon,
                                            Rng& rng) {
  if (goal_mix.size() != static_cast<std::size_t>(env.n_objectives)) {
    throw std::invalid_argument("biased collection: goal mix must have one entry per goal");
  }
  const double total = std::accumulate(goal_mix.begin(), goal_mix.end(), 0.0);
  std::vector<std::size_t> quota(goal_mix.size());
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < quota.size(); ++g) {
    quota[g] = static_cast<std::size_t>(std::floor(goal_mix[g] / total * static_cast<double>(n_trajectories)));
    assigned += quota[g];
  }
  // Largest-remainder rounding so the quotas add up.
  for (std::size_t g = 0; assigned < n_trajectories; g = (g + 1) % quota.size()) {
    if (goal_mix[g] > 0.0) {
      ++quota[g];
      ++assigned;
    }
  }

  const std::vector<double> uniform(static_cast<std::size_t>(env.n_states * env.n_actions),
                                    1.0 / static_cast<double>(env.n_actions));
  std::vector<Trajectory> accepted;
  std::vector<std::size_t> filled(quota.size(), 0);
  const std::size_t max_attempts = 10000 * std::max<std::size_t>(n_trajectories, 1);
  for (std::size_t attempt = 0; accepted.size() < n_trajectories; ++attempt) {
    if (attempt >= max_attempts) throw std::runtime_error("biased collection: goal quotas unreachable");
    auto traj = rollout(env, uniform, horizon, 1.0, rng);
    if (traj.empty() || !traj.back().done) continue;
    const auto& r = traj.back().reward;
    const auto g = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    if (filled[g] >= quota[g]) continue;
    ++filled[g];
    accepted.push_back(std::move(traj));
  }
  std::string label = "biased-goals(";
  for (std::size_t g = 0; g < goal_mix.size(); ++g) label += (g ? "/" : "") + json(goal_mix[g]).dump();
  return assemble(env, accepted, label + ")", 0);
}

TransitionDataset collect_groupfair(std::shared_ptr<const Membership> membership,
                                    const GroupFairConfig& config, ReferencePolicy kind,
                                    std::size_t n_rollouts, std::size_t horizon, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("collect: horizon must be >= 1");
  const std::size_t steps = std::min<std::size_t>(horizon, static_cast<std::size_t>(config.horizon));
  TransitionDataset data;
  data.n_objectives = static_cast<std::size_t>(config.n_individuals);
  data.obs_dim = static_cast<std::size_t>(config.n_options * config.n_groups);
  data.meta.env_id = "group-fair";
  data.meta.behavior = describe(GroupFairRef{kind});
  data.meta.n_actions = config.n_options;
  const std::size_t total = n_rollouts * steps;
  data.actions.reserve(total);
  data.done.reserve(total);
  data.trajectory.reserve(total);
  data.rewards.reserve(total * data.n_objectives);
  data.obs.reserve(total * data.obs_dim);
  data.next_obs.reserve(total * data.obs_dim);

  for (std::size_t ep = 0; ep < n_rollouts; ++ep) {
    auto state = groupfair_reset(membership, config, rng);
    data.initial_obs.insert(data.initial_obs.end(), state.options.begin(), state.options.end());
    for (std::size_t t = 0; t < steps; ++t) {
      const int a = reference_policy(kind, state, rng);
      auto step = groupfair_step(state, a, rng);
      data.obs.insert(data.obs.end(), state.options.begin(), state.options.end());
      data.next_obs.insert(data.next_obs.end(), step.next.options.begin(), step.next.options.end());
      data.actions.push_back(a);
      data.rewards.insert(data.rewards.end(), step.rewards.begin(), step.rewards.end());
      data.done.push_back(step.next.done() || t + 1 == steps ? 1 : 0);
      data.trajectory.push_back(static_cast<int>(ep));
      state = std::move(step.next);
    }
  }
  data.meta.stats = compute_norm_stats(data);
  data.validate();
  return data;
}

std::vector<int> trajectory_goals(const TransitionDataset& data) {
  std::vector<int> goals(data.n_trajectories(), -1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.done[i]) continue;
    const double* r = data.reward(i);
    const auto best = std::max_element(r, r + data.n_objectives);
    if (*best > 0.0) goals[static_cast<std::size_t>(data.trajectory[i])] = static_cast<int>(best - r);
  }
  return goals;
}

// --- files -----------------------------------------------------------------

std::filesystem::path metadata_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p += ".meta.json";
  return p;
}

namespace {

json stats_to_json(const NormStats& s) {
  return json{{"reward_min", s.reward_min},   {"reward_max", s.reward_max},
              {"reward_constant", s.reward_constant}, {"state_mean", s.state_mean},
              {"state_std", s.state_std},     {"state_constant", s.state_constant}};
}

NormStats stats_from_json(const json& j) {
  NormStats s;
  j.at("reward_min").get_to(s.reward_min);
  j.at("reward_max").get_to(s.reward_max);
  j.at("reward_constant").get_to(s.reward_constant);
  j.at("state_mean").get_to(s.state_mean);
  j.at("state_std").get_to(s.state_std);
  j.at("state_constant").get_to(s.state_constant);
  return s;
}

json row_slice(const double* p, std::size_t n) { return json(std::vector<double>(p, p + n)); }

}  // namespace

void write_dataset(const TransitionDataset& data, const std::filesystem::path& path) {
  data.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset to " + path.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    json line;
    if (data.tabular()) {
      line["s"] = data.states[i];
      line["s_next"] = data.next_states[i];
      line["s_initial"] = data.initial_states[i];
    } else {
      line["s"] = row_slice(data.observation(i), data.obs_dim);
      line["s_next"] = row_slice(data.next_observation(i), data.obs_dim);
      line["s_initial"] = row_slice(data.initial_observation(i), data.obs_dim);
    }
    line["a"] = data.actions[i];
    line["r"] = row_slice(data.reward(i), data.n_objectives);
    line["done"] = data.done[i] != 0;
    line["traj"] = data.trajectory[i];
    if (!data.preferences.empty()) {
      line["pref"] = row_slice(data.preferences.data() + i * data.n_objectives, data.n_objectives);
    }
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed while writing " + path.string());

  const json meta{{"env_id", data.meta.env_id},
                  {"seed", data.meta.seed},
                  {"behavior", data.meta.behavior},
                  {"n_objectives", data.n_objectives},
                  {"obs_dim", data.obs_dim},
                  {"n_states", data.meta.n_states},
                  {"n_actions", data.meta.n_actions},
                  {"gamma", data.meta.gamma},
                  {"n_transitions", data.size()},
                  {"n_trajectories", data.n_trajectories()},
                  {"env_params", data.meta.env_params},
                  {"stats", stats_to_json(data.meta.stats)}};
  std::ofstream mout(metadata_path(path));
  if (!mout) throw std::runtime_error("cannot write dataset metadata next to " + path.string());
  mout << meta.dump(2) << '\n';
}

TransitionDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream min(metadata_path(path));
  if (!min) throw std::runtime_error("missing dataset metadata " + metadata_path(path).string());
  const json meta = json::parse(min);
  TransitionDataset data;
  data.meta.env_id = meta.at("env_id").get<std::string>();
  data.meta.seed = meta.at("seed").get<std::uint64_t>();
  data.meta.behavior = meta.at("behavior").get<std::string>();
  data.meta.n_states = meta.at("n_states").get<int>();
  data.meta.n_actions = meta.at("n_actions").get<int>();
  data.meta.gamma = meta.at("gamma").get<double>();
  data.meta.stats = stats_from_json(meta.at("stats"));
  if (meta.contains("env_params")) {
    data.meta.env_params = meta["env_params"].get<std::map<std::string, double>>();
  }
  data.n_objectives = meta.at("n_objectives").get<std::size_t>();
  data.obs_dim = meta.at("obs_dim").get<std::size_t>();

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());
  std::string text;
  int inferred_traj = 0;
  bool prev_done = false;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    json line;
    try {
      line = json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    int traj = 0;
    if (line.contains("traj")) {
      traj = line["traj"].get<int>();
    } else {
      if (prev_done) ++inferred_traj;
      traj = inferred_traj;
    }
    data.trajectory.push_back(traj);
    data.actions.push_back(line.at("a").get<int>());
    const auto r = line.at("r").get<std::vector<double>>();
    if (r.size() != data.n_objectives) throw std::runtime_error("dataset line has wrong reward width");
    data.rewards.insert(data.rewards.end(), r.begin(), r.end());
    prev_done = line.at("done").get<bool>();
    data.done.push_back(prev_done ? 1 : 0);
    if (data.tabular()) {
      data.states.push_back(line.at("s").get<int>());
      data.next_states.push_back(line.at("s_next").get<int>());
      data.initial_states.push_back(line.at("s_initial").get<int>());
    } else {
      const auto s = line.at("s").get<std::vector<double>>();
      const auto sn = line.at("s_next").get<std::vector<double>>();
      data.obs.insert(data.obs.end(), s.begin(), s.end());
      data.next_obs.insert(data.next_obs.end(), sn.begin(), sn.end());
      const auto needed = (static_cast<std::size_t>(traj) + 1) * data.obs_dim;
      if (data.initial_obs.size() < needed) {
        const auto s0 = line.at("s_initial").get<std::vector<double>>();
        data.initial_obs.resize(needed);
        std::copy(s0.begin(), s0.end(),
                  data.initial_obs.begin() + static_cast<std::ptrdiff_t>(needed - data.obs_dim));
      }
    }
    if (line.contains("pref")) {
      const auto p = line["pref"].get<std::vector<double>>();
      data.preferences.insert(data.preferences.end(), p.begin(), p.end());
    }
  }
  data.validate();
  return data;
}

}  // namespace fairdice
