#include "fairdice/losses.hpp"
#include "fairdice/nn.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace fairdice;
using testing::bisect;
using testing::central_difference;
using testing::relative_error;

namespace {

HyperParams alpha_fair(double alpha, double beta = 1.0, double gamma = 0.99) {
  HyperParams hp;
  hp.alpha = alpha;
  hp.beta = beta;
  hp.gamma = gamma;
  return hp;
}

struct Fixture {
  std::vector<double> nu_s, nu_next, nu_init, rewards;
  std::vector<unsigned char> terminal;
  std::size_t k = 0;

  [[nodiscard]] TdBatch batch() const {
    return {nu_s, nu_next, nu_init, rewards, terminal, k};
  }
};

Fixture random_fixture(std::size_t b, std::size_t k, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Fixture f;
  f.k = k;
  for (std::size_t i = 0; i < b; ++i) {
    f.nu_s.push_back(n(rng));
    f.nu_next.push_back(n(rng));
    f.nu_init.push_back(n(rng));
    f.terminal.push_back(u(rng) < 0.25 ? 1 : 0);
    for (std::size_t j = 0; j < k; ++j) f.rewards.push_back(u(rng));
  }
  return f;
}

/// Straight-line re-derivation of the critic loss, used as an independent oracle.
double critic_loss_oracle(const Fixture& f, const std::vector<double>& mu, const HyperParams& hp) {
  const std::size_t b = f.nu_s.size();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double e = -f.nu_s[i];
    for (std::size_t j = 0; j < f.k; ++j) e += mu[j] * f.rewards[i * f.k + j];
    if (!f.terminal[i]) e += hp.gamma * f.nu_next[i];
    const double y = e / hp.beta;
    const double w = y < 0 ? std::exp(y) : y + 1.0;
    const double fw = w < 1 ? w * std::log(w) - w + 1 : 0.5 * (w - 1) * (w - 1);
    total += (1 - hp.gamma) * f.nu_init[i] + w * e - hp.beta * fw;
  }
  total /= static_cast<double>(b);
  const double sign = hp.regularizer_sign == RegularizerSign::Correct ? 1.0 : -1.0;
  for (double m : mu) {
    double reg = 0.0;
    if (hp.alpha == 1.0) {
      reg = -std::log(m) - 1.0;
    } else {
      const double k = std::pow(m, -1.0 / hp.alpha);
      reg = std::pow(k, 1 - hp.alpha) / (1 - hp.alpha) - m * k;
    }
    total += sign * reg;
  }
  return total;
}

}  // namespace

TEST_SUITE("divergence") {
  TEST_CASE("soft chi-square values") {
    CHECK(soft_chi2_f(1.0) == 0.0);
    CHECK(soft_chi2_f(2.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(soft_chi2_f(0.5) == doctest::Approx(0.5 * std::log(0.5) - 0.5 + 1.0).epsilon(1e-15));
    CHECK(soft_chi2_f(0.5) == doctest::Approx(0.1534).epsilon(1e-3));
    CHECK(soft_chi2_f(0.0) == 1.0);
    CHECK_THROWS_AS(soft_chi2_f(-0.1), std::domain_error);
  }

  TEST_CASE("soft chi-square is convex, nonnegative and C1 at one") {
    for (double w = 0.0; w <= 6.0; w += 0.01) {
      CHECK(soft_chi2_f(w) >= 0.0);
      if (w >= 0.01) {
        const double mid = soft_chi2_f(w);
        CHECK(soft_chi2_f(w - 0.01) + soft_chi2_f(w + 0.01) - 2 * mid >= -1e-14);
      }
    }
    const double left = central_difference([](double w) { return soft_chi2_f(w); }, 1.0 - 1e-4, 1e-6);
    const double right = central_difference([](double w) { return soft_chi2_f(w); }, 1.0 + 1e-4, 1e-6);
    CHECK(std::abs(left - right) < 1e-3);
    CHECK(soft_chi2_f_prime(1.0) == 0.0);
  }

  TEST_CASE("f' inverse matches bisection on f'") {
    for (double y : {0.0, 1.0, -1.0, 3.5, -7.25}) {
      const double oracle = bisect([y](double w) { return soft_chi2_f_prime(w) - y; }, 1e-300, 50.0, 400);
      CHECK(relative_error(f_prime_inverse(y), oracle) < 1e-12);
    }
    CHECK(f_prime_inverse(0.0) == 1.0);
    CHECK(f_prime_inverse(1.0) == 2.0);
    CHECK(f_prime_inverse(-1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(f_prime_inverse(-1.0) == doctest::Approx(0.3679).epsilon(1e-4));
  }

  TEST_CASE("f' composed with its inverse is the identity on [-10, 10]") {
    double worst = 0.0;
    for (int i = 0; i <= 2000; ++i) {
      const double y = -10.0 + 0.01 * i;
      worst = std::max(worst, std::abs(soft_chi2_f_prime(f_prime_inverse(y)) - y));
    }
    CHECK(worst < 1e-10);
  }

  TEST_CASE("f' inverse is monotone with the analytic derivative") {
    double prev = -1.0;
    for (double y = -20.0; y <= 20.0; y += 0.05) {
      CHECK(f_prime_inverse(y) >= prev);
      prev = f_prime_inverse(y);
      if (std::abs(y) > 1e-3) {
        const double fd = central_difference([](double v) { return f_prime_inverse(v); }, y);
        CHECK(relative_error(f_prime_inverse_derivative(y), fd) < 1e-4);
      }
    }
    CHECK(log_f_prime_inverse(-800.0) == -800.0);
  }
}

TEST_SUITE("td error and weights") {
  TEST_CASE("td error examples") {
    const std::vector<double> mu2{0.5, 0.5}, r10{1, 0};
    CHECK(td_error(mu2, r10, 1.0, 2.0, 0.99, false) == doctest::Approx(1.48).epsilon(1e-14));
    const std::vector<double> mu1{1}, r0{0};
    CHECK(td_error(mu1, r0, 0.0, 5.0, 0.9, true) == 0.0);
    const std::vector<double> mu3{0.2, 0.8}, r11{1, 1};
    CHECK(td_error(mu3, r11, 0.0, 0.0, 0.9, false) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> r3{1, 1, 1};
    CHECK_THROWS_AS(td_error(mu3, r3, 0.0, 0.0, 0.9, false), std::invalid_argument);
  }

  TEST_CASE("w* examples") {
    CHECK(w_star(0.0, 1.0) == 1.0);
    CHECK(w_star(1.0, 1.0) == 2.0);
    const double w = w_star(1.0, 1000.0);
    CHECK(w == doctest::Approx(1.001).epsilon(1e-9));
    CHECK(std::abs(w - 1.0) <= 2.0 / 1000.0);
  }

  TEST_CASE("w* is nonnegative, monotone in e and collapses to one as beta grows") {
    for (double beta : {1e-5, 1e-2, 1.0, 10.0, 1e4}) {
      CHECK(w_star(0.0, beta) == 1.0);
      double prev = 0.0;
      for (double e = -50.0; e <= 50.0; e += 0.25) {
        const double w = w_star(e, beta);
        CHECK(w >= 0.0);
        CHECK(w >= prev);
        prev = w;
      }
    }
    for (double e : {-3.0, -0.5, 0.2, 4.0}) {
      double prev = std::numeric_limits<double>::infinity();
      for (double beta = 1e-3; beta <= 1e8; beta *= 3.0) {
        const double dev = std::abs(w_star(e, beta) - 1.0);
        CHECK(dev <= prev);
        prev = dev;
      }
      CHECK(prev < 1e-7);
    }
  }
}

TEST_SUITE("utilities") {
  TEST_CASE("utility and k* examples") {
    CHECK(utility(3.7, alpha_fair(0.0)) == 3.7);
    CHECK(k_star(0.25, alpha_fair(1.0)) == 4.0);
    CHECK(k_star(4.0, alpha_fair(2.0)) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(utility(std::exp(1.0), alpha_fair(1.0)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(utility(4.0, alpha_fair(0.5)) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK_THROWS_AS(k_star(0.0, alpha_fair(1.0)), std::domain_error);
    CHECK_THROWS_AS(k_star(-1.0, alpha_fair(2.0)), std::domain_error);
    CHECK_THROWS_AS(utility(-1.0, alpha_fair(1.0)), std::domain_error);
  }

  TEST_CASE("k* inverts the marginal utility") {
    HyperParams piecewise;
    piecewise.utility_kind = UtilityKind::PiecewiseLog;
    std::vector<HyperParams> kinds{alpha_fair(0.5), alpha_fair(1.0), alpha_fair(1.25), alpha_fair(2.0),
                                   alpha_fair(3.0), piecewise};
    for (const auto& hp : kinds) {
      double worst = 0.0;
      for (int i = 1; i <= 10000; ++i) {
        const double mu = 10.0 * i / 10000.0;
        worst = std::max(worst, std::abs(utility_prime(k_star(mu, hp), hp) - mu));
      }
      CHECK(worst < 1e-12);
    }
  }

  TEST_CASE("piecewise log is C1 at one") {
    HyperParams hp;
    hp.utility_kind = UtilityKind::PiecewiseLog;
    CHECK(utility(1.0, hp) == 0.0);
    CHECK(utility_prime(1.0, hp) == 1.0);
    CHECK(utility(std::nextafter(1.0, 0.0), hp) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(k_star(1.0, hp) == 1.0);
    CHECK(k_star(1.5, hp) == 0.5);
    CHECK(utility(-3.0, hp) == doctest::Approx(-12.0).epsilon(1e-15));
  }

  TEST_CASE("regularizer derivatives match finite differences") {
    HyperParams piecewise;
    piecewise.utility_kind = UtilityKind::PiecewiseLog;
    for (const auto& hp : {alpha_fair(0.5), alpha_fair(1.0), alpha_fair(1.25), piecewise}) {
      for (double mu : {0.1, 0.7, 1.3, 4.0}) {
        const double fd = central_difference([&](double m) { return regularizer(m, hp); }, mu);
        CHECK(relative_error(regularizer_derivative(mu, hp), fd) < 1e-4);
        const double fd2 = central_difference([&](double m) { return regularizer_derivative(m, hp); }, mu);
        CHECK(relative_error(regularizer_second_derivative(mu, hp), fd2) < 1e-4);
      }
    }
  }
}

TEST_SUITE("critic loss") {
  TEST_CASE("single transition at zero error") {
    Fixture f{{0.0}, {0.0}, {0.0}, {0.0}, {0}, 1};
    const auto loss = critic_mu_loss(f.batch(), PreferenceVector::ones(1), alpha_fair(1.0, 1.0, 0.0));
    CHECK(loss.total == -1.0);
    CHECK(loss.regularizer_term == -1.0);
    CHECK(loss.w[0] == 1.0);
  }

  TEST_CASE("large beta turns the middle term into the TD error") {
    const auto f = random_fixture(16, 3, 5);
    const PreferenceVector mu(std::vector<double>{0.1, -0.3, 0.2});
    const auto loss = critic_mu_loss(f.batch(), mu, alpha_fair(1.0, 1e6));
    double mean_e = 0.0;
    for (double e : loss.e) mean_e += e / static_cast<double>(loss.e.size());
    CHECK(std::abs(loss.transition_term - mean_e) < 1e-3);
  }

  TEST_CASE("matches an independent re-implementation") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto f = random_fixture(8, 3, seed, 2.0);
      std::mt19937_64 rng(seed + 100);
      std::normal_distribution<double> n(0.0, 1.0);
      std::vector<double> xi{n(rng), n(rng), n(rng)};
      const PreferenceVector mu(xi);
      for (double alpha : {0.5, 1.0, 1.25, 2.0}) {
        for (auto sign : {RegularizerSign::Correct, RegularizerSign::FlippedForTypoTest}) {
          auto hp = alpha_fair(alpha, 0.3 + seed * 0.1);
          hp.regularizer_sign = sign;
          const double got = critic_mu_loss(f.batch(), mu, hp).total;
          CHECK(relative_error(got, critic_loss_oracle(f, mu.mu(), hp)) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("analytic gradients agree with central differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto f = random_fixture(12, 2, seed, 1.5);
      const std::vector<double> mu0{0.8, 1.6};
      for (double alpha : {0.5, 1.0, 1.25}) {
        const auto hp = alpha_fair(alpha, 0.5);
        const auto loss = critic_mu_loss(f.batch(), PreferenceVector::from_mu(mu0), hp, true);
        std::vector<double> analytic, numeric;
        const auto probe = [&](std::vector<double>& field, std::size_t i, double g) {
          const double saved = field[i];
          auto eval = [&](double v) {
            field[i] = v;
            const double out = critic_mu_loss(f.batch(), PreferenceVector::from_mu(mu0), hp).total;
            field[i] = saved;
            return out;
          };
          analytic.push_back(g);
          numeric.push_back(central_difference(eval, saved));
        };
        for (std::size_t i = 0; i < f.nu_s.size(); ++i) {
          probe(f.nu_s, i, loss.d_nu_s[i]);
          probe(f.nu_next, i, loss.d_nu_next[i]);
          probe(f.nu_init, i, loss.d_nu_initial[i]);
        }
        for (std::size_t j = 0; j < mu0.size(); ++j) {
          auto eval = [&](double m) {
            auto mu = mu0;
            mu[j] = m;
            return critic_mu_loss(f.batch(), PreferenceVector::from_mu(mu), hp).total;
          };
          analytic.push_back(loss.d_mu[j]);
          numeric.push_back(central_difference(eval, mu0[j]));
        }
        CHECK(relative_error(analytic, numeric) < 1e-4);
      }
    }
  }

  TEST_CASE("rejects mismatched inputs") {
    Fixture f{{0.0, 1.0}, {0.0}, {0.0, 0.0}, {0.0, 0.0}, {0, 0}, 1};
    CHECK_THROWS_AS(critic_mu_loss(f.batch(), PreferenceVector::ones(1), alpha_fair(1.0)), std::invalid_argument);
    const auto g = random_fixture(4, 2, 1);
    CHECK_THROWS_AS(critic_mu_loss(g.batch(), PreferenceVector::ones(3), alpha_fair(1.0)), std::invalid_argument);
  }

  TEST_CASE("flipped regularizer sign sends a preference weight to zero") {
    const auto f = random_fixture(64, 3, 9);
    for (auto sign : {RegularizerSign::Correct, RegularizerSign::FlippedForTypoTest}) {
      auto hp = alpha_fair(1.0, 1.0);
      hp.regularizer_sign = sign;
      std::vector<double> xi(3, 0.0);
      nn::Adam opt({.lr = 1e-2}, 3);
      Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
      for (int it = 0; it < 5000; ++it) {
        const PreferenceVector mu(std::vector<double>(theta.data(), theta.data() + 3));
        const auto loss = critic_mu_loss(f.batch(), mu, hp, true);
        Eigen::VectorXd g(3);
        for (int j = 0; j < 3; ++j) g(j) = loss.d_mu[static_cast<std::size_t>(j)] * mu.mu()[static_cast<std::size_t>(j)];
        opt.step(theta, g);
      }
      const double min_mu = std::exp(theta.minCoeff());
      if (sign == RegularizerSign::Correct) {
        CHECK(min_mu >= 1e-2);
      } else {
        CHECK(min_mu < 1e-3);
      }
    }
  }
}

TEST_SUITE("policy losses") {
  TEST_CASE("weights are rescaled to mean one") {
    const std::vector<double> w{2, 4, 6};
    const auto n = normalize_weights(w);
    CHECK(n[0] == doctest::Approx(0.5));
    CHECK(n[1] == doctest::Approx(1.0));
    CHECK(n[2] == doctest::Approx(1.5));
  }

  TEST_CASE("equal weights reduce to behaviour cloning") {
    const std::vector<double> lp{-0.2, -1.3, -0.7, -2.2};
    const std::vector<double> w(4, 3.3);
    const std::vector<unsigned char> mask(4, 0);
    CHECK(policy_loss_weighted(lp, w, mask).value == doctest::Approx(policy_loss_bc(lp).value).epsilon(1e-15));
  }

  TEST_CASE("weighted loss matches direct summation") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> lp, w;
      std::vector<unsigned char> mask;
      for (int i = 0; i < 32; ++i) {
        lp.push_back(-u(rng));
        w.push_back(u(rng));
        mask.push_back(u(rng) < 0.2 ? 1 : 0);
      }
      double sw = 0.0;
      for (double x : w) sw += x;
      double oracle = 0.0;
      for (int i = 0; i < 32; ++i) oracle -= (mask[i] ? 0.0 : w[i] * 32.0 / sw) * lp[i] / 32.0;
      CHECK(relative_error(policy_loss_weighted(lp, w, mask).value, oracle) < 1e-13);
    }
  }

  TEST_CASE("all-zero weights fall back to uniform with a flag") {
    const std::vector<double> lp{-1.0, -2.0}, w{0.0, 0.0};
    const std::vector<unsigned char> mask(2, 0);
    const auto loss = policy_loss_weighted(lp, w, mask);
    CHECK(loss.uniform_fallback);
    CHECK(loss.value == doctest::Approx(1.5));
    CHECK_FALSE(policy_loss_weighted(lp, std::vector<double>{1.0, 0.0}, mask).uniform_fallback);
  }

  TEST_CASE("outer-product loss by hand") {
    const std::vector<double> lp{-1.0, -2.0}, w{1.0, 1.0};
    const std::vector<unsigned char> mask(2, 0);
    const auto buggy = policy_loss_buggy_outer(lp, w, mask);
    CHECK(-buggy.value * 2.0 == doctest::Approx(-6.0));  // sum over the 2x2 outer product
    CHECK(-policy_loss_weighted(lp, w, mask).value == doctest::Approx(-1.5));
  }

  TEST_CASE("outer-product loss is batch size times behaviour cloning") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::vector<double> lp, w;
    for (int i = 0; i < 16; ++i) {
      lp.push_back(-u(rng));
      w.push_back(u(rng));
    }
    const std::vector<unsigned char> mask(16, 0);
    const auto buggy = policy_loss_buggy_outer(lp, w, mask);
    CHECK(buggy.value == doctest::Approx(16.0 * policy_loss_bc(lp).value).epsilon(1e-13));
    double s = 0.0;
    for (double x : buggy.normalized_w) s += x;
    CHECK(s == doctest::Approx(16.0));
    // Every sample gets the same gradient coefficient, whatever w is.
    for (double d : buggy.d_log_probs) CHECK(d == doctest::Approx(buggy.d_log_probs[0]));
  }

  TEST_CASE("outer-product gradient is parallel to the behaviour-cloning gradient") {
    nn::MlpSpec spec{.input_dim = 5, .hidden = {16, 16}, .output_dim = 4, .head = nn::Head::Categorical};
    nn::Mlp net(spec);
    std::mt19937_64 rng(11);
    net.initialize(rng);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::uniform_int_distribution<int> act(0, 3);
    for (int trial = 0; trial < 10; ++trial) {
      nn::Matrix x(5, 32);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
      std::vector<int> actions(32);
      std::vector<double> w(32);
      std::vector<unsigned char> mask(32, 0);
      for (int i = 0; i < 32; ++i) {
        actions[static_cast<std::size_t>(i)] = act(rng);
        w[static_cast<std::size_t>(i)] = u(rng);
      }
      const auto grad_for = [&](bool buggy) {
        return nn::forward_backward(net, x, [&](const nn::Matrix& logits) {
                 const auto lp = nn::log_softmax(logits);
                 const auto l = nn::gather_log_probs(lp, actions);
                 const auto loss = buggy ? policy_loss_buggy_outer(l, w, mask) : policy_loss_bc(l);
                 return std::make_pair(loss.value, nn::log_prob_backward(lp, actions, loss.d_log_probs));
               }).gradient;
      };
      const auto gb = grad_for(true), gc = grad_for(false);
      const double cosine = gb.dot(gc) / (gb.norm() * gc.norm());
      CHECK(std::abs(cosine - 1.0) < 1e-6);
    }
  }

  TEST_CASE("policy loss gradients agree with central differences") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    std::vector<double> lp, w;
    std::vector<unsigned char> mask;
    for (int i = 0; i < 10; ++i) {
      lp.push_back(-u(rng));
      w.push_back(u(rng));
      mask.push_back(i % 4 == 0);
    }
    using Loss = PolicyLoss (*)(std::span<const double>, std::span<const double>, std::span<const unsigned char>);
    for (Loss fn : {Loss{policy_loss_weighted}, Loss{policy_loss_buggy_outer}}) {
      const auto loss = fn(lp, w, mask);
      std::vector<double> numeric;
      for (std::size_t i = 0; i < lp.size(); ++i) {
        numeric.push_back(central_difference(
            [&](double v) {
              auto copy = lp;
              copy[i] = v;
              return fn(copy, w, mask).value;
            },
            lp[i]));
      }
      CHECK(relative_error(loss.d_log_probs, numeric) < 1e-4);
    }
  }
}

TEST_SUITE("gradient penalty") {
  TEST_CASE("examples") {
    const std::vector<double> three{3.0}, seven{7.0};
    CHECK(gradient_penalty(three, 0.1) == 0.0);
    CHECK(gradient_penalty(seven, 0.1) == doctest::Approx(0.4).epsilon(1e-15));
    const std::vector<double> many{0.0, 9.0, 100.0};
    CHECK(gradient_penalty(many, 0.0) == 0.0);
    CHECK_THROWS_AS(gradient_penalty(std::vector<double>{-1.0}, 1.0), std::domain_error);
  }

  TEST_CASE("derivative agrees with central differences") {
    const std::vector<double> norms{1.0, 5.5, 8.0, 12.0};
    const auto d = gradient_penalty_derivative(norms, 0.3);
    std::vector<double> numeric;
    for (std::size_t i = 0; i < norms.size(); ++i) {
      numeric.push_back(central_difference(
          [&](double v) {
            auto c = norms;
            c[i] = v;
            return gradient_penalty(c, 0.3);
          },
          norms[i]));
    }
    CHECK(relative_error(d, numeric) < 1e-4);
  }
}

TEST_SUITE("hyperparameters") {
  TEST_CASE("validation") {
    HyperParams hp;
    CHECK_NOTHROW(hp.validate());
    hp.beta = 0.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp = {};
    hp.gamma = 1.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp = {};
    hp.alpha = -0.5;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp = {};
    hp.lambda_gp = -1.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
  }

  TEST_CASE("preference weights are the exponential of their parameters") {
    const PreferenceVector p(std::vector<double>{0.0, std::log(2.0), -1.0});
    CHECK(p.mu()[0] == 1.0);
    CHECK(p.mu()[1] == doctest::Approx(2.0));
    CHECK(p.mu()[2] == doctest::Approx(std::exp(-1.0)));
    for (double m : p.mu()) CHECK(m > 0.0);
    const std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS(PreferenceVector::from_mu(bad));
  }
}
