#include "fairdice/environments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fairdice {

void TabularMOMDP::validate() const {
  if (n_states <= 0 || n_actions <= 0 || n_objectives <= 0) {
    throw std::invalid_argument("TabularMOMDP: empty dimensions");
  }
  if (transitions.size() != static_cast<std::size_t>(n_states * n_actions)) {
    throw std::invalid_argument("TabularMOMDP: transition table has wrong size");
  }
  if (p0.size() != static_cast<std::size_t>(n_states) ||
      terminal.size() != static_cast<std::size_t>(n_states)) {
    throw std::invalid_argument("TabularMOMDP: state arrays have wrong size");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMOMDP: gamma outside [0,1)");
  for (const auto& row : transitions) {
    if (row.empty()) throw std::invalid_argument("TabularMOMDP: (s,a) without successors");
    double total = 0.0;
    for (const auto& succ : row) {
      if (succ.next < 0 || succ.next >= n_states || succ.prob < 0.0) {
        throw std::invalid_argument("TabularMOMDP: bad successor entry");
      }
      if (succ.reward.size() != static_cast<std::size_t>(n_objectives)) {
        throw std::invalid_argument("TabularMOMDP: reward dimension mismatch");
      }
      for (double r : succ.reward) {
        if (!std::isfinite(r)) throw std::invalid_argument("TabularMOMDP: non-finite reward");
      }
      total += succ.prob;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("TabularMOMDP: row not stochastic");
  }
  const double p0_total = std::accumulate(p0.begin(), p0.end(), 0.0);
  if (std::abs(p0_total - 1.0) > 1e-9) throw std::invalid_argument("TabularMOMDP: p0 not normalized");
}

std::vector<double> TabularMOMDP::expected_reward(int s, int a) const {
  std::vector<double> out(static_cast<std::size_t>(n_objectives), 0.0);
  for (const auto& succ : successors(s, a)) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += succ.prob * succ.reward[k];
  }
  return out;
}

const Successor& TabularMOMDP::sample(int s, int a, Rng& rng) const {
  const auto& row = successors(s, a);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (const auto& succ : row) {
    if (u < succ.prob) return succ;
    u -= succ.prob;
  }
  return row.back();
}

int TabularMOMDP::sample_initial(Rng& rng) const {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (int s = 0; s < n_states; ++s) {
    if (u < p0[static_cast<std::size_t>(s)]) return s;
    u -= p0[static_cast<std::size_t>(s)];
  }
  return n_states - 1;
}

// --- four rooms ------------------------------------------------------------

const FourRoomsLayout& four_rooms_layout() {
  static const FourRoomsLayout layout{
      {
          "wwwwwwwwwwwww",
          "w     w     w",
          "w     w     w",
          "w           w",
          "w     w     w",
          "w     w     w",
          "ww wwww     w",
          "w     www www",
          "w     w     w",
          "w     w     w",
          "w           w",
          "w     w     w",
          "wwwwwwwwwwwww",
      },
      {1, 1},
      {{{3, 9}, {9, 3}, {9, 9}}},
  };
  return layout;
}

std::vector<std::pair<int, int>> four_rooms_cells() {
  const auto& layout = four_rooms_layout();
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < FourRoomsLayout::kSize; ++r) {
    for (int c = 0; c < FourRoomsLayout::kSize; ++c) {
      if (layout.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] != 'w') {
        cells.emplace_back(r, c);
      }
    }
  }
  return cells;
}

TabularMOMDP build_four_rooms(double stochasticity, double gamma) {
  if (!(stochasticity >= 0.0 && stochasticity <= 1.0)) {
    throw std::invalid_argument("build_four_rooms: stochasticity outside [0,1]");
  }
  const auto& layout = four_rooms_layout();
  const auto cells = four_rooms_cells();
  constexpr int kSize = FourRoomsLayout::kSize;
  std::vector<int> index(kSize * kSize, -1);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    index[static_cast<std::size_t>(cells[i].first * kSize + cells[i].second)] = static_cast<int>(i);
  }
  auto state_of = [&](std::pair<int, int> cell) {
    return index[static_cast<std::size_t>(cell.first * kSize + cell.second)];
  };

  TabularMOMDP env;
  env.id = "four-rooms";
  env.n_states = static_cast<int>(cells.size());
  env.n_actions = 4;
  env.n_objectives = 3;
  env.gamma = gamma;
  env.p0.assign(cells.size(), 0.0);
  env.p0[static_cast<std::size_t>(state_of(layout.start))] = 1.0;
  env.terminal.assign(cells.size(), 0);
  std::vector<int> goal_objective(cells.size(), -1);
  for (int g = 0; g < 3; ++g) {
    const int s = state_of(layout.goals[static_cast<std::size_t>(g)]);
    env.terminal[static_cast<std::size_t>(s)] = 1;
    goal_objective[static_cast<std::size_t>(s)] = g;
  }

  constexpr std::array<std::pair<int, int>, 4> kMoves{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};
  env.transitions.resize(cells.size() * 4);
  for (int s = 0; s < env.n_states; ++s) {
    const auto [row, col] = cells[static_cast<std::size_t>(s)];
    for (int a = 0; a < 4; ++a) {
      auto& out = env.transitions[static_cast<std::size_t>(s * 4 + a)];
      if (env.terminal[static_cast<std::size_t>(s)]) {
        out.push_back({s, 1.0, std::vector<double>(3, 0.0)});
        continue;
      }
      std::vector<double> probs(cells.size(), 0.0);
      for (int m = 0; m < 4; ++m) {
        const double p = (m == a ? 1.0 - stochasticity : 0.0) + stochasticity / 4.0;
        if (p == 0.0) continue;
        const int r2 = row + kMoves[static_cast<std::size_t>(m)].first;
        const int c2 = col + kMoves[static_cast<std::size_t>(m)].second;
        const int target = layout.rows[static_cast<std::size_t>(r2)][static_cast<std::size_t>(c2)] == 'w'
                               ? s
                               : state_of({r2, c2});
        probs[static_cast<std::size_t>(target)] += p;
      }
      for (int t = 0; t < env.n_states; ++t) {
        const double p = probs[static_cast<std::size_t>(t)];
        if (p == 0.0) continue;
        std::vector<double> reward(3, 0.0);
        const int g = goal_objective[static_cast<std::size_t>(t)];
        if (g >= 0) reward[static_cast<std::size_t>(g)] = 1.0;
        out.push_back({t, p, std::move(reward)});
      }
    }
  }
  env.validate();
  return env;
}

// --- random MOMDP ----------------------------------------------------------

TabularMOMDP generate_random_momdp(const RandomMomdpConfig& config, Rng& rng) {
  if (config.n_goals < 1 || config.n_goals >= config.n_states) {
    throw std::invalid_argument("generate_random_momdp: need 1 <= n_goals < n_states");
  }
  if (config.n_actions < 1) throw std::invalid_argument("generate_random_momdp: no actions");
  if (config.sparsity < 1 || config.sparsity > config.n_states) {
    throw std::invalid_argument("generate_random_momdp: sparsity leaves states without successors");
  }
  const int n = config.n_states;
  const int k = config.n_goals;

  TabularMOMDP env;
  env.id = "momdp";
  env.n_states = n;
  env.n_actions = config.n_actions;
  env.n_objectives = k;
  env.gamma = config.gamma;
  env.p0.assign(static_cast<std::size_t>(n), 0.0);
  env.p0[0] = 1.0;
  env.terminal.assign(static_cast<std::size_t>(n), 0);

  std::vector<int> candidates(static_cast<std::size_t>(n - 1));
  std::iota(candidates.begin(), candidates.end(), 1);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<int> goal_objective(static_cast<std::size_t>(n), -1);
  for (int g = 0; g < k; ++g) {
    const int s = candidates[static_cast<std::size_t>(g)];
    env.terminal[static_cast<std::size_t>(s)] = 1;
    goal_objective[static_cast<std::size_t>(s)] = g;
  }

  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  std::gamma_distribution<double> unit_gamma(1.0, 1.0);
  env.transitions.resize(static_cast<std::size_t>(n * config.n_actions));
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < config.n_actions; ++a) {
      auto& out = env.transitions[static_cast<std::size_t>(s * config.n_actions + a)];
      if (env.terminal[static_cast<std::size_t>(s)]) {
        out.push_back({s, 1.0, std::vector<double>(static_cast<std::size_t>(k), 0.0)});
        continue;
      }
      std::vector<int> succ;
      std::sample(all.begin(), all.end(), std::back_inserter(succ), config.sparsity, rng);
      std::vector<double> weights(succ.size());
      double total = 0.0;
      for (auto& w : weights) total += (w = unit_gamma(rng));
      for (std::size_t i = 0; i < succ.size(); ++i) {
        std::vector<double> reward(static_cast<std::size_t>(k), 0.0);
        const int g = goal_objective[static_cast<std::size_t>(succ[i])];
        if (g >= 0) reward[static_cast<std::size_t>(g)] = 1.0;
        out.push_back({succ[i], weights[i] / total, std::move(reward)});
      }
    }
  }
  env.validate();
  return env;
}

std::vector<int> terminal_goals(const TabularMOMDP& env) {
  std::vector<int> goals(static_cast<std::size_t>(env.n_objectives), -1);
  for (int s = 0; s < env.n_states; ++s) {
    for (int a = 0; a < env.n_actions; ++a) {
      for (const auto& succ : env.successors(s, a)) {
        for (int g = 0; g < env.n_objectives; ++g) {
          if (succ.reward[static_cast<std::size_t>(g)] > 0.0 &&
              env.terminal[static_cast<std::size_t>(succ.next)]) {
            goals[static_cast<std::size_t>(g)] = succ.next;
          }
        }
      }
    }
  }
  return goals;
}

std::vector<int> scalarized_optimal_actions(const TabularMOMDP& env, double tol) {
  const auto n = static_cast<std::size_t>(env.n_states);
  std::vector<double> v(n, 0.0);
  std::vector<int> greedy(n, 0);
  const double inv_k = 1.0 / static_cast<double>(env.n_objectives);
  for (int iter = 0; iter < 100000; ++iter) {
    double delta = 0.0;
    std::vector<double> next(n, 0.0);
    for (int s = 0; s < env.n_states; ++s) {
      if (env.terminal[static_cast<std::size_t>(s)]) continue;
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < env.n_actions; ++a) {
        double q = 0.0;
        for (const auto& succ : env.successors(s, a)) {
          const double r = std::accumulate(succ.reward.begin(), succ.reward.end(), 0.0) * inv_k;
          const double cont = env.terminal[static_cast<std::size_t>(succ.next)]
                                  ? 0.0
                                  : v[static_cast<std::size_t>(succ.next)];
          q += succ.prob * (r + env.gamma * cont);
        }
        if (q > best + 1e-12) {
          best = q;
          best_a = a;
        }
      }
      next[static_cast<std::size_t>(s)] = best;
      greedy[static_cast<std::size_t>(s)] = best_a;
      delta = std::max(delta, std::abs(best - v[static_cast<std::size_t>(s)]));
    }
    v = std::move(next);
    if (delta < tol) break;
  }
  return greedy;
}

// --- GroupFair -------------------------------------------------------------

Membership groupfair_fixed_membership(std::uint32_t seed, int n_individuals, int n_groups) {
  if (n_groups < 1 || n_individuals < 1) throw std::invalid_argument("membership: empty shape");
  // Masked rejection sampling on 32-bit Mersenne Twister output, as numpy's
  // legacy bounded integer generator does.
  std::mt19937 gen(seed);
  const auto range = static_cast<std::uint32_t>(n_groups - 1);
  std::uint32_t mask = range;
  for (int shift = 1; shift < 32; shift <<= 1) mask |= mask >> shift;
  Membership out(static_cast<std::size_t>(n_individuals));
  for (auto& row : out) {
    for (auto& g : row) {
      std::uint32_t v = 0;
      do {
        v = static_cast<std::uint32_t>(gen()) & mask;
      } while (v > range);
      g = static_cast<int>(v);
    }
  }
  return out;
}

std::vector<int> group_sizes(const Membership& membership, int n_groups) {
  std::vector<int> sizes(static_cast<std::size_t>(n_groups), 0);
  for (const auto& row : membership) {
    for (int g : row) ++sizes[static_cast<std::size_t>(g)];
  }
  return sizes;
}

std::vector<double> sample_dirichlet(const std::vector<double>& concentration, Rng& rng) {
  std::vector<double> out(concentration.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(concentration[i] > 0.0)) throw std::domain_error("Dirichlet concentration must be positive");
    out[i] = std::gamma_distribution<double>(concentration[i], 1.0)(rng);
    total += out[i];
  }
  if (!(total > 0.0)) {
    // Every component underflowed; put the mass on the largest concentration.
    const auto it = std::max_element(concentration.begin(), concentration.end());
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(it - concentration.begin())] = 1.0;
    return out;
  }
  for (auto& x : out) x /= total;
  return out;
}

namespace {

void redraw_options(GroupFairState& state, Rng& rng) {
  const auto conc = groupfair_concentration(state);
  const auto g = static_cast<std::size_t>(state.config.n_groups);
  state.options.resize(static_cast<std::size_t>(state.config.n_options) * g);
  for (int a = 0; a < state.config.n_options; ++a) {
    const auto row = sample_dirichlet(conc, rng);
    std::copy(row.begin(), row.end(), state.options.begin() + static_cast<std::ptrdiff_t>(a * g));
  }
}

}  // namespace

std::vector<double> groupfair_concentration(const GroupFairState& state) {
  const double mean = std::accumulate(state.totals.begin(), state.totals.end(), 0.0) /
                      static_cast<double>(state.totals.size());
  std::vector<double> conc(state.totals.size());
  for (std::size_t i = 0; i < conc.size(); ++i) {
    // 1 + tanh(x) written as 2 / (1 + e^{-2x}) so it stays positive for large deficits.
    const double x = state.config.advantage_scale * (state.totals[i] - mean);
    conc[i] = 2.0 / (1.0 + std::exp(-2.0 * x));
  }
  return conc;
}

GroupFairState groupfair_reset(std::shared_ptr<const Membership> membership,
                               const GroupFairConfig& config, Rng& rng) {
  if (!membership || membership->size() != static_cast<std::size_t>(config.n_individuals)) {
    throw std::invalid_argument("groupfair_reset: membership does not match config");
  }
  GroupFairState state;
  state.membership = std::move(membership);
  state.config = config;
  state.totals.assign(static_cast<std::size_t>(config.n_groups), 0.0);
  redraw_options(state, rng);
  return state;
}

std::vector<double> groupfair_rewards(const GroupFairState& state, int action) {
  if (action < 0 || action >= state.config.n_options) {
    throw std::out_of_range("groupfair: invalid option index " + std::to_string(action));
  }
  std::vector<double> rewards(state.membership->size(), 0.0);
  for (std::size_t x = 0; x < rewards.size(); ++x) {
    for (int g : (*state.membership)[x]) rewards[x] += state.option(action, g);
  }
  return rewards;
}

GroupFairStep groupfair_step(const GroupFairState& state, int action, Rng& rng) {
  if (state.done()) throw std::logic_error("groupfair_step: episode already finished");
  GroupFairStep out{state, groupfair_rewards(state, action)};
  for (int g = 0; g < state.config.n_groups; ++g) {
    out.next.totals[static_cast<std::size_t>(g)] += state.option(action, g);
  }
  ++out.next.timestep;
  redraw_options(out.next, rng);
  return out;
}

ReferencePolicy parse_reference_policy(const std::string& name) {
  if (name == "random") return ReferencePolicy::Random;
  if (name == "biased") return ReferencePolicy::Biased;
  if (name == "util" || name == "util-optim") return ReferencePolicy::UtilOptim;
  if (name == "fair") return ReferencePolicy::Fair;
  throw std::invalid_argument("unknown reference policy '" + name + "'");
}

std::string to_string(ReferencePolicy kind) {
  switch (kind) {
    case ReferencePolicy::Random: return "random";
    case ReferencePolicy::Biased: return "biased";
    case ReferencePolicy::UtilOptim: return "util-optim";
    case ReferencePolicy::Fair: return "fair";
  }
  return "random";
}

int reference_policy(ReferencePolicy kind, const GroupFairState& state, Rng& rng) {
  const int n_opt = state.config.n_options;
  if (kind == ReferencePolicy::Random) {
    return std::uniform_int_distribution<int>(0, n_opt - 1)(rng);
  }
  auto score = [&](int a) {
    switch (kind) {
      case ReferencePolicy::Biased: return state.option(a, 0);
      case ReferencePolicy::UtilOptim: return state.option(a, 3);
      default: {
        double s = 0.0;
        for (int g = 0; g < state.config.n_groups; ++g) s += std::log(state.option(a, g));
        return s;
      }
    }
  };
  int best = 0;
  double best_score = score(0);
  for (int a = 1; a < n_opt; ++a) {
    const double s = score(a);
    if (s > best_score) {
      best_score = s;
      best = a;
    }
  }
  return best;
}

}  // namespace fairdice
