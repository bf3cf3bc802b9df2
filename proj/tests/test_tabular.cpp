#include "fairdice/tabular.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace fairdice;
using testing::relative_error;

namespace {

/// Tabular dataset built from explicit (s, a, r, s', done) tuples, one trajectory per tuple.
TransitionDataset tuples(int n_states, int n_actions, std::size_t k,
                         const std::vector<std::tuple<int, int, std::vector<double>, int, bool>>& rows) {
  TransitionDataset d;
  d.meta.env_id = "hand";
  d.meta.n_states = n_states;
  d.meta.n_actions = n_actions;
  d.n_objectives = k;
  int t = 0;
  for (const auto& [s, a, r, sn, done] : rows) {
    d.states.push_back(s);
    d.actions.push_back(a);
    d.rewards.insert(d.rewards.end(), r.begin(), r.end());
    d.next_states.push_back(sn);
    d.done.push_back(done ? 1 : 0);
    d.initial_states.push_back(s);
    d.trajectory.push_back(t++);
  }
  return d;
}

HyperParams params(double alpha, double beta, double gamma = 0.9) {
  HyperParams hp;
  hp.alpha = alpha;
  hp.beta = beta;
  hp.gamma = gamma;
  return hp;
}

TransitionDataset small_random_dataset(std::uint64_t seed) {
  Rng rng(seed);
  RandomMomdpConfig cfg;
  cfg.n_states = 8;
  cfg.n_actions = 3;
  cfg.sparsity = 3;
  const auto env = generate_random_momdp(cfg, rng);
  return collect_dataset(env, OptimalityMix{0.5}, 60, 30, rng);
}

/// Deterministic chain 0 -> 1 -> 2 -> 3 (goal); action 0 advances, action 1 stays.
TabularMOMDP chain() {
  TabularMOMDP env;
  env.id = "chain";
  env.n_states = 4;
  env.n_actions = 2;
  env.n_objectives = 3;
  env.gamma = 0.9;
  env.p0 = {1, 0, 0, 0};
  env.terminal = {0, 0, 0, 1};
  env.transitions.resize(8);
  for (int s = 0; s < 4; ++s) {
    const int advance = std::min(s + 1, 3);
    std::vector<double> r(3, 0.0);
    if (s == 2) r[0] = 1.0;
    env.transitions[static_cast<std::size_t>(s * 2)] = {{advance, 1.0, r}};
    env.transitions[static_cast<std::size_t>(s * 2 + 1)] = {{s, 1.0, {0, 0, 0}}};
  }
  env.validate();
  return env;
}

}  // namespace

TEST_SUITE("objective") {
  TEST_CASE("gradient and hessian agree with central differences") {
    const auto data = small_random_dataset(3);
    for (double alpha : {0.0, 0.5, 1.0, 1.25}) {
      const FullBatchObjective obj(aggregate(data), params(alpha, 0.7));
      std::mt19937_64 rng(4);
      std::normal_distribution<double> n(0.0, 0.5);
      std::vector<double> nu(8), mu(3);
      for (double& x : nu) x = n(rng);
      for (double& x : mu) x = alpha == 0.0 ? 1.0 : std::exp(n(rng));
      Eigen::VectorXd grad;
      Eigen::MatrixXd hess;
      obj.value_and_gradient(nu, mu, grad, &hess);
      REQUIRE(static_cast<std::size_t>(grad.size()) == 8 + obj.n_free_mu());

      const auto stacked_value = [&](const Eigen::VectorXd& x) {
        std::vector<double> a(x.data(), x.data() + 8);
        std::vector<double> m = mu;
        for (std::size_t j = 0; j < obj.n_free_mu(); ++j) m[j] = x(static_cast<Eigen::Index>(8 + j));
        return obj.value(a, m);
      };
      Eigen::VectorXd x(grad.size());
      for (int i = 0; i < 8; ++i) x(i) = nu[static_cast<std::size_t>(i)];
      for (std::size_t j = 0; j < obj.n_free_mu(); ++j) x(static_cast<Eigen::Index>(8 + j)) = mu[j];

      std::vector<double> analytic, numeric;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        analytic.push_back(grad(i));
        numeric.push_back(testing::central_difference(
            [&](double v) {
              auto y = x;
              y(i) = v;
              return stacked_value(y);
            },
            x(i)));
      }
      CHECK(relative_error(analytic, numeric) < 1e-4);

      // Hessian columns from differences of the analytic gradient.
      std::vector<double> h_analytic, h_numeric;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const auto grad_at = [&](double v) {
          auto y = x;
          y(i) = v;
          std::vector<double> a(y.data(), y.data() + 8);
          std::vector<double> m = mu;
          for (std::size_t j = 0; j < obj.n_free_mu(); ++j) m[j] = y(static_cast<Eigen::Index>(8 + j));
          Eigen::VectorXd g;
          obj.value_and_gradient(a, m, g);
          return g;
        };
        const Eigen::VectorXd col = (grad_at(x(i) + 1e-6) - grad_at(x(i) - 1e-6)) / 2e-6;
        for (Eigen::Index r = 0; r < x.size(); ++r) {
          h_analytic.push_back(hess(r, i));
          h_numeric.push_back(col(r));
        }
      }
      CHECK(relative_error(h_analytic, h_numeric) < 1e-4);
    }
  }

  TEST_CASE("objective matches the minibatch loss on the whole dataset") {
    const auto data = small_random_dataset(5);
    const auto hp = params(1.0, 0.4);
    const FullBatchObjective obj(aggregate(data), hp);
    std::vector<double> nu{0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2, 0.05};
    std::vector<double> mu{0.7, 1.2, 0.9};
    std::vector<double> ns, nn, ni;
    for (std::size_t i = 0; i < data.size(); ++i) {
      ns.push_back(nu[static_cast<std::size_t>(data.states[i])]);
      nn.push_back(nu[static_cast<std::size_t>(data.next_states[i])]);
      ni.push_back(nu[static_cast<std::size_t>(data.initial_states[i])]);
    }
    const TdBatch batch{ns, nn, ni, data.rewards, data.done, 3};
    CHECK(obj.value(nu, mu) == doctest::Approx(critic_mu_loss(batch, PreferenceVector::from_mu(mu), hp).total).epsilon(1e-12));
  }
}

TEST_SUITE("solver") {
  TEST_CASE("single transition solution is stationary") {
    const auto data = tuples(2, 1, 2, {{0, 0, {0.4, 0.6}, 1, true}});
    const auto hp = params(1.0, 1.0);
    const auto sol = solve_critic_full_batch(data, hp);
    CHECK(sol.trace.converged);
    const FullBatchObjective obj(aggregate(data), hp);
    const auto mu = sol.mu.mu();
    for (std::size_t i = 0; i < 2; ++i) {
      const double g = testing::central_difference(
          [&](double v) {
            auto nu = sol.critic.nu;
            nu[i] = v;
            return obj.value(nu, mu);
          },
          sol.critic.nu[i]);
      CHECK(std::abs(g) < 1e-6);
    }
    for (std::size_t j = 0; j < 2; ++j) {
      const double g = testing::central_difference(
          [&](double v) {
            auto m = mu;
            m[j] = v;
            return obj.value(sol.critic.nu, m);
          },
          mu[j]);
      CHECK(std::abs(g) < 1e-6);
    }
  }

  TEST_CASE("large beta reproduces the behaviour policy") {
    const auto data = tuples(2, 3, 2,
                             {{0, 0, {1, 0}, 1, true},
                              {0, 0, {0, 1}, 1, true},
                              {0, 1, {0.5, 0.5}, 1, true},
                              {0, 2, {0, 0}, 1, true},
                              {1, 1, {1, 1}, 0, true},
                              {1, 2, {0, 0.2}, 0, true}});
    const auto sol = solve_critic_full_batch(data, params(1.0, 1e6));
    const auto pi = extract_policy(data, sol.critic, sol.mu, params(1.0, 1e6));
    CHECK(total_variation(pi, empirical_policy(data), data) < 1e-4);
  }

  TEST_CASE("newton solutions are stationary on random data") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto data = small_random_dataset(seed);
      for (double alpha : {0.0, 0.5, 1.0, 1.25}) {
        const auto hp = params(alpha, 0.5);
        const auto sol = solve_critic_full_batch(data, hp);
        CHECK(sol.trace.converged);
        CHECK(sol.trace.final_grad_norm < 1e-8);
        for (double m : sol.mu.mu()) CHECK(m > 0.0);
        if (alpha == 0.0) {
          for (double m : sol.mu.mu()) CHECK(m == 1.0);
        }
      }
    }
  }

  TEST_CASE("adam trace stays finite and descends") {
    const auto data = small_random_dataset(2);
    SolveOptions opt;
    opt.method = TabularSolver::Adam;
    opt.iters = 3000;
    opt.lr = 1e-2;
    const auto sol = solve_critic_full_batch(data, params(1.0, 1.0), opt);
    REQUIRE(!sol.trace.loss.empty());
    for (double l : sol.trace.loss) CHECK(std::isfinite(l));
    CHECK(sol.trace.loss.back() < sol.trace.loss.front());

    const auto newton = solve_critic_full_batch(data, params(1.0, 1.0));
    CHECK(sol.trace.loss.back() >= newton.trace.loss.back() - 1e-9);
  }

  TEST_CASE("flipped sign collapses a preference weight") {
    const auto data = small_random_dataset(1);
    SolveOptions opt;
    opt.method = TabularSolver::Adam;
    opt.iters = 20000;
    opt.lr = 1e-2;
    opt.grad_tol = 0.0;
    auto hp = params(1.0, 1.0);
    hp.regularizer_sign = RegularizerSign::FlippedForTypoTest;
    const auto flipped = solve_critic_full_batch(data, hp, opt);
    CHECK(flipped.trace.min_mu.back() < 1e-3);
    hp.regularizer_sign = RegularizerSign::Correct;
    const auto correct = solve_critic_full_batch(data, hp, opt);
    CHECK(correct.trace.min_mu.back() > 1e-2);
  }
}

TEST_SUITE("policy extraction") {
  TEST_CASE("zero rewards and zero critic give the empirical policy") {
    const auto data = tuples(2, 3, 1,
                             {{0, 0, {0}, 1, false}, {0, 0, {0}, 1, false}, {0, 2, {0}, 0, false}, {1, 1, {0}, 0, true}});
    const TabularCritic critic{{0.0, 0.0}};
    const auto pi = extract_policy(data, critic, PreferenceVector::ones(1), params(1.0, 1.0, 0.0));
    const auto bc = empirical_policy(data);
    for (std::size_t i = 0; i < pi.probs.size(); ++i) CHECK(pi.probs[i] == doctest::Approx(bc.probs[i]));
    CHECK(pi.prob(0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(pi.prob(0, 1) == 0.0);
  }

  TEST_CASE("underflowing weights drop an action") {
    const auto data = tuples(2, 2, 1, {{0, 0, {0}, 1, true}, {0, 1, {0}, 1, true}});
    // e = 200 for action 0 and -800 for action 1, whose weight underflows to 0.
    const auto data2 = tuples(2, 2, 1, {{0, 0, {1000.0}, 1, true}, {0, 1, {0.0}, 1, true}});
    const TabularCritic critic{{800.0, 0.0}};
    const auto pi = extract_policy(data2, critic, PreferenceVector::ones(1), params(1.0, 1.0));
    CHECK(pi.prob(0, 0) == 1.0);
    CHECK(pi.prob(0, 1) == 0.0);
    // Every weight underflows.
    const TabularCritic huge{{1e6, 0.0}};
    const auto fallback = extract_policy(data, huge, PreferenceVector::ones(1), params(1.0, 1.0));
    fallback.validate();
  }

  TEST_CASE("closed form maximizes the weighted log-likelihood") {
    const auto data = small_random_dataset(7);
    const auto hp = params(1.0, 0.3);
    const auto sol = solve_critic_full_batch(data, hp);
    const auto pi = extract_policy(data, sol.critic, sol.mu, hp);
    pi.validate();

    // Per-state weights summed by action, then a brute-force search over the simplex.
    std::vector<double> w(24, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      double e = -sol.critic.nu[static_cast<std::size_t>(data.states[i])];
      for (std::size_t j = 0; j < 3; ++j) e += sol.mu.mu()[j] * data.reward(i)[j];
      if (!data.done[i]) e += hp.gamma * sol.critic.nu[static_cast<std::size_t>(data.next_states[i])];
      w[static_cast<std::size_t>(data.states[i] * 3 + data.actions[i])] += w_star(e, hp.beta);
    }
    for (int s = 0; s < 8; ++s) {
      const double* ws = &w[static_cast<std::size_t>(s * 3)];
      if (ws[0] + ws[1] + ws[2] == 0.0) continue;
      const auto objective = [&](double p0, double p1, double p2) {
        const double p[3] = {p0, p1, p2};
        double out = 0.0;
        for (int a = 0; a < 3; ++a) {
          if (ws[a] > 0.0) out += ws[a] * std::log(std::max(p[a], 1e-300));
        }
        return out;
      };
      double best = -1e300;
      const int n = 200;
      for (int i = 0; i <= n; ++i) {
        for (int j = 0; i + j <= n; ++j) {
          best = std::max(best, objective(i / double(n), j / double(n), (n - i - j) / double(n)));
        }
      }
      const double closed = objective(pi.prob(s, 0), pi.prob(s, 1), pi.prob(s, 2));
      CHECK(closed >= best - 1e-12);
    }
  }

  TEST_CASE("rows are normalized and unseen states are uniform") {
    const auto data = tuples(3, 4, 1, {{0, 1, {0.3}, 1, false}, {1, 3, {0.1}, 0, true}});
    const auto sol = solve_critic_full_batch(data, params(1.0, 0.5));
    const auto pi = extract_policy(data, sol.critic, sol.mu, params(1.0, 0.5));
    for (int s = 0; s < 3; ++s) {
      double row = 0.0;
      for (int a = 0; a < 4; ++a) row += pi.prob(s, a);
      CHECK(std::abs(row - 1.0) < 1e-9);
    }
    for (int a = 0; a < 4; ++a) CHECK(pi.prob(2, a) == 0.25);
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("deterministic chain pays gamma squared") {
    const auto env = chain();
    TabularPolicy advance{4, 2, {1, 0, 1, 0, 1, 0, 1, 0}};
    const auto exact = evaluate_tabular_policy(env, advance, 0.9, {.method = EvalMethod::Exact});
    CHECK(exact.exact);
    CHECK(exact.returns[0] == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(exact.returns[1] == 0.0);
    CHECK(exact.returns[2] == 0.0);
    const auto mc = evaluate_tabular_policy(env, advance, 0.9, {.method = EvalMethod::MonteCarlo, .mc_episodes = 50});
    CHECK(mc.returns[0] == doctest::Approx(0.81).epsilon(1e-12));
  }

  TEST_CASE("exact and Monte-Carlo agree") {
    const auto env = build_four_rooms(0.1, 0.99);
    const auto uniform = TabularPolicy::uniform(env.n_states, env.n_actions);
    const auto exact = evaluate_tabular_policy(env, uniform, 0.99, {.method = EvalMethod::Exact});
    const auto mc = evaluate_tabular_policy(env, uniform, 0.99,
                                            {.method = EvalMethod::MonteCarlo, .mc_episodes = 20000, .seed = 3});
    CHECK_FALSE(mc.exact);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(exact.returns[i] > 0.0);
      CHECK(std::abs(exact.returns[i] - mc.returns[i]) < 3.0 * mc.std_error[i] + 1e-12);
    }
  }

  TEST_CASE("policy shape is checked") {
    const auto env = chain();
    TabularPolicy wrong{3, 2, std::vector<double>(6, 0.5)};
    CHECK_THROWS(evaluate_tabular_policy(env, wrong, 0.9));
  }
}
