#pragma once

// Offline transition datasets: storage, collection from the environments,
// and the JSONL + sidecar metadata file format.

#include "fairdice/environments.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fairdice {

/// Per-objective reward range and per-dimension state moments.
struct NormStats {
  std::vector<double> reward_min;
  std::vector<double> reward_max;
  std::vector<unsigned char> reward_constant;  // max == min
  std::vector<double> state_mean;
  std::vector<double> state_std;
  std::vector<unsigned char> state_constant;  // std == 0
};

struct DatasetMeta {
  std::string env_id;
  std::uint64_t seed = 0;
  std::string behavior;
  int n_states = 0;   // tabular only
  int n_actions = 0;
  double gamma = 0.99;
  NormStats stats;
  std::map<std::string, double> env_params;  // what it takes to rebuild the environment
};

/// Column store of transitions. Tabular datasets (obs_dim == 0) carry state
/// indices; continuous datasets carry row-major observation matrices and a
/// per-trajectory table of initial observations.
struct TransitionDataset {
  DatasetMeta meta;
  std::size_t n_objectives = 0;
  std::size_t obs_dim = 0;

  std::vector<int> actions;
  std::vector<double> rewards;  // n x K
  std::vector<unsigned char> done;
  std::vector<int> trajectory;  // trajectory id per transition

  std::vector<int> states;
  std::vector<int> next_states;
  std::vector<int> initial_states;

  std::vector<double> obs;          // n x obs_dim
  std::vector<double> next_obs;     // n x obs_dim
  std::vector<double> initial_obs;  // n_trajectories x obs_dim

  std::vector<double> preferences;  // optional n x K tag, empty when absent

  [[nodiscard]] std::size_t size() const { return actions.size(); }
  [[nodiscard]] bool tabular() const { return obs_dim == 0; }
  [[nodiscard]] std::size_t n_trajectories() const;
  [[nodiscard]] const double* reward(std::size_t i) const { return rewards.data() + i * n_objectives; }
  [[nodiscard]] const double* observation(std::size_t i) const { return obs.data() + i * obs_dim; }
  [[nodiscard]] const double* next_observation(std::size_t i) const {
    return next_obs.data() + i * obs_dim;
  }
  [[nodiscard]] const double* initial_observation(std::size_t i) const {
    return initial_obs.data() + static_cast<std::size_t>(trajectory[i]) * obs_dim;
  }
  void validate() const;
};

// --- behaviours ------------------------------------------------------------

struct UniformRandom {
  double stochasticity = 0.1;  // environment slip used when the env was built
};
struct OptimalityMix {
  double level = 0.5;
};
struct GroupFairRef {
  ReferencePolicy kind = ReferencePolicy::Random;
};
using Behavior = std::variant<UniformRandom, OptimalityMix, GroupFairRef>;

std::string describe(const Behavior& behavior);

/// Rolls out `behavior` for n_trajectories episodes of at most `horizon` steps.
/// With continue_probability < 1 an episode also stops (without a terminal
/// flag) after each step with probability 1 - continue_probability; setting
/// it to gamma makes visit counts follow the discounted occupancy.
TransitionDataset collect_dataset(const TabularMOMDP& env, const Behavior& behavior,
                                  std::size_t n_trajectories, std::size_t horizon, Rng& rng,
                                  double continue_probability = 1.0);

/// Same with an explicit stochastic policy table (|S| x |A|, row-major).
TransitionDataset collect_with_policy(const TabularMOMDP& env, const std::vector<double>& policy,
                                      std::size_t n_trajectories, std::size_t horizon, Rng& rng,
                                      double continue_probability = 1.0);

/// Uniform-random four-rooms trajectories resampled so that the completed
/// goal mix matches `goal_mix` (e.g. 0.8 / 0.1 / 0.1).
TransitionDataset collect_biased_four_rooms(const TabularMOMDP& env,
                                            const std::vector<double>& goal_mix,
                                            std::size_t n_trajectories, std::size_t horizon,
                                            Rng& rng);

/// GroupFair rollouts under a reference policy; observations are the flattened options.
TransitionDataset collect_groupfair(std::shared_ptr<const Membership> membership,
                                    const GroupFairConfig& config, ReferencePolicy kind,
                                    std::size_t n_rollouts, std::size_t horizon, Rng& rng);

/// Final-goal index of each trajectory (-1 when it never reached a goal).
std::vector<int> trajectory_goals(const TransitionDataset& data);

// --- files -----------------------------------------------------------------

/// Writes `path` (one JSON transition per line) and `path` + ".meta.json".
void write_dataset(const TransitionDataset& data, const std::filesystem::path& path);
TransitionDataset read_dataset(const std::filesystem::path& path);
std::filesystem::path metadata_path(const std::filesystem::path& dataset_path);

}  // namespace fairdice
