#pragma once

// Discrete multi-objective environments: a tabular MOMDP container with the
// four-rooms and random-MOMDP builders, and the GroupFair allocation game.

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace fairdice {

using Rng = std::mt19937_64;

struct Successor {
  int next = 0;
  double prob = 0.0;
  std::vector<double> reward;  // K-vector granted on this transition
};

/// Finite MOMDP. Rewards live on (s, a, s') edges; R(s, a) is their expectation.
/// Terminal states end the episode on arrival and carry no further reward.
struct TabularMOMDP {
  std::string id;
  int n_states = 0;
  int n_actions = 0;
  int n_objectives = 0;
  double gamma = 0.99;
  std::vector<std::vector<Successor>> transitions;  // indexed s * n_actions + a
  std::vector<double> p0;
  std::vector<unsigned char> terminal;

  void validate() const;
  [[nodiscard]] const std::vector<Successor>& successors(int s, int a) const {
    return transitions[static_cast<std::size_t>(s * n_actions + a)];
  }
  [[nodiscard]] std::vector<double> expected_reward(int s, int a) const;
  [[nodiscard]] const Successor& sample(int s, int a, Rng& rng) const;
  [[nodiscard]] int sample_initial(Rng& rng) const;
};

// --- four rooms ------------------------------------------------------------

struct FourRoomsLayout {
  static constexpr int kSize = 13;  // 11 x 11 interior plus the outer wall
  std::array<std::string, kSize> rows;
  std::pair<int, int> start;
  std::array<std::pair<int, int>, 3> goals;
};

const FourRoomsLayout& four_rooms_layout();

/// 11x11 four-rooms grid, 4 moves, start top-left, three one-hot goals.
/// With probability `stochasticity` the executed move is uniformly random.
TabularMOMDP build_four_rooms(double stochasticity = 0.1, double gamma = 0.99);

/// Grid cell of each state of build_four_rooms (row, col).
std::vector<std::pair<int, int>> four_rooms_cells();

// --- random MOMDP ----------------------------------------------------------

struct RandomMomdpConfig {
  int n_states = 50;
  int n_actions = 4;
  int n_goals = 3;
  int sparsity = 4;  // successors per (s, a)
  double gamma = 0.95;
};

/// State 0 is the start; n_goals distinct absorbing goals pay e_i on arrival.
TabularMOMDP generate_random_momdp(const RandomMomdpConfig& config, Rng& rng);

/// Indices of the goal states of a random MOMDP, in objective order.
std::vector<int> terminal_goals(const TabularMOMDP& env);

/// Greedy policy for the equally weighted scalarized reward (ties to lowest index).
std::vector<int> scalarized_optimal_actions(const TabularMOMDP& env, double tol = 1e-12);

// --- GroupFair -------------------------------------------------------------

struct GroupFairConfig {
  int n_individuals = 100;
  int n_groups = 5;
  int n_options = 7;
  int horizon = 500;
  double advantage_scale = 0.1;
};

inline constexpr int kMembershipsPerIndividual = 3;
using Membership = std::vector<std::array<int, kMembershipsPerIndividual>>;

/// Uniform memberships drawn like numpy's legacy RandomState(seed).randint(0, 5, (100, 3)).
Membership groupfair_fixed_membership(std::uint32_t seed = 42, int n_individuals = 100,
                                      int n_groups = 5);

std::vector<int> group_sizes(const Membership& membership, int n_groups);

struct GroupFairState {
  std::shared_ptr<const Membership> membership;
  GroupFairConfig config;
  std::vector<double> totals;   // g_i, one per group
  std::vector<double> options;  // O, n_options x n_groups row-major
  int timestep = 0;

  [[nodiscard]] double option(int a, int g) const {
    return options[static_cast<std::size_t>(a * config.n_groups + g)];
  }
  [[nodiscard]] bool done() const { return timestep >= config.horizon; }
  /// Flattened O, the policy's observation.
  [[nodiscard]] std::vector<double> observation() const { return options; }
};

GroupFairState groupfair_reset(std::shared_ptr<const Membership> membership,
                               const GroupFairConfig& config, Rng& rng);

struct GroupFairStep {
  GroupFairState next;
  std::vector<double> rewards;  // one per individual
};

GroupFairStep groupfair_step(const GroupFairState& state, int action, Rng& rng);

/// Dirichlet concentrations 1 + tanh(scale * (g_i - mean g)).
std::vector<double> groupfair_concentration(const GroupFairState& state);

/// Per-individual rewards for option `a`: sum of the option's share over memberships.
std::vector<double> groupfair_rewards(const GroupFairState& state, int action);

enum class ReferencePolicy { Random, Biased, UtilOptim, Fair };

ReferencePolicy parse_reference_policy(const std::string& name);
std::string to_string(ReferencePolicy kind);

int reference_policy(ReferencePolicy kind, const GroupFairState& state, Rng& rng);

std::vector<double> sample_dirichlet(const std::vector<double>& concentration, Rng& rng);

}  // namespace fairdice
