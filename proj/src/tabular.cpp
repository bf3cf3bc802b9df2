#include "fairdice/tabular.hpp"

#include "fairdice/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

namespace fairdice {

void TabularPolicy::validate(double tol) const {
  if (probs.size() != static_cast<std::size_t>(n_states * n_actions)) {
    throw std::invalid_argument("TabularPolicy: table has wrong size");
  }
  for (int s = 0; s < n_states; ++s) {
    double total = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double p = prob(s, a);
      if (p < 0.0 || !std::isfinite(p)) throw std::invalid_argument("TabularPolicy: bad probability");
      total += p;
    }
    if (std::abs(total - 1.0) > tol) throw std::invalid_argument("TabularPolicy: row not normalized");
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  return {n_states, n_actions,
          std::vector<double>(static_cast<std::size_t>(n_states * n_actions),
                              1.0 / static_cast<double>(n_actions))};
}

AggregatedData aggregate(const TransitionDataset& data) {
  if (!data.tabular()) throw std::invalid_argument("aggregate: dataset is not tabular");
  if (data.size() == 0) throw std::invalid_argument("aggregate: empty dataset");
  AggregatedData agg;
  agg.n_states = data.meta.n_states;
  agg.n_actions = data.meta.n_actions;
  agg.n_objectives = data.n_objectives;
  for (std::size_t i = 0; i < data.size(); ++i) {
    agg.n_states = std::max({agg.n_states, data.states[i] + 1, data.next_states[i] + 1,
                             data.initial_states[i] + 1});
    agg.n_actions = std::max(agg.n_actions, data.actions[i] + 1);
  }

  using Key = std::tuple<int, int, int, unsigned char, std::vector<double>>;
  std::map<Key, std::size_t> index;
  std::vector<double> counts;
  const std::size_t k = data.n_objectives;
  agg.initial.assign(static_cast<std::size_t>(agg.n_states), 0.0);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<double> r(data.reward(i), data.reward(i) + k);
    Key key{data.states[i], data.actions[i], data.next_states[i], data.done[i], r};
    auto [it, inserted] = index.emplace(std::move(key), counts.size());
    if (inserted) {
      agg.s.push_back(data.states[i]);
      agg.a.push_back(data.actions[i]);
      agg.s_next.push_back(data.next_states[i]);
      agg.done.push_back(data.done[i]);
      agg.rewards.insert(agg.rewards.end(), r.begin(), r.end());
      counts.push_back(0.0);
    }
    counts[it->second] += 1.0;
    agg.initial[static_cast<std::size_t>(data.initial_states[i])] += inv_n;
  }
  agg.weight.resize(counts.size());
  std::transform(counts.begin(), counts.end(), agg.weight.begin(), [&](double c) { return c * inv_n; });
  return agg;
}

// --- objective -------------------------------------------------------------

FullBatchObjective::FullBatchObjective(AggregatedData data, HyperParams hp)
    : data_(std::move(data)), hp_(hp) {
  hp_.validate();
}

double FullBatchObjective::value(const std::vector<double>& nu, const std::vector<double>& mu) const {
  Eigen::VectorXd unused;
  return value_and_gradient(nu, mu, unused, nullptr);
}

double FullBatchObjective::value_and_gradient(const std::vector<double>& nu,
                                              const std::vector<double>& mu, Eigen::VectorXd& grad,
                                              Eigen::MatrixXd* hessian) const {
  const auto n_s = static_cast<Eigen::Index>(data_.n_states);
  const std::size_t k = data_.n_objectives;
  const auto n_mu = static_cast<Eigen::Index>(n_free_mu());
  const Eigen::Index dim = n_s + n_mu;
  grad = Eigen::VectorXd::Zero(dim);
  if (hessian) *hessian = Eigen::MatrixXd::Zero(dim, dim);

  double total = 0.0;
  for (Eigen::Index s = 0; s < n_s; ++s) {
    const double c = (1.0 - hp_.gamma) * data_.initial[static_cast<std::size_t>(s)];
    total += c * nu[static_cast<std::size_t>(s)];
    grad(s) += c;
  }

  for (std::size_t t = 0; t < data_.weight.size(); ++t) {
    const double* r = data_.rewards.data() + t * k;
    const int s = data_.s[t];
    const int sn = data_.s_next[t];
    const bool term = data_.done[t] != 0;
    const double cont = term ? 0.0 : hp_.gamma;
    double e = cont * nu[static_cast<std::size_t>(sn)] - nu[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < k; ++i) e += mu[i] * r[i];
    const double w = w_star(e, hp_.beta);
    const double c = data_.weight[t];
    total += c * (w * e - hp_.beta * soft_chi2_f(w));

    grad(s) -= c * w;
    grad(sn) += c * w * cont;
    for (Eigen::Index i = 0; i < n_mu; ++i) grad(n_s + i) += c * w * r[i];

    if (hessian) {
      const double curv = c * f_prime_inverse_derivative(e / hp_.beta) / hp_.beta;
      if (curv == 0.0) continue;
      // Sparse outer product of de/d(nu, mu).
      std::vector<std::pair<Eigen::Index, double>> a{{s, -1.0}};
      if (cont != 0.0) {
        if (sn == s) a[0].second += cont;
        else a.emplace_back(sn, cont);
      }
      for (Eigen::Index i = 0; i < n_mu; ++i) {
        if (r[i] != 0.0) a.emplace_back(n_s + i, r[i]);
      }
      for (const auto& [p, vp] : a) {
        for (const auto& [q, vq] : a) (*hessian)(p, q) += curv * vp * vq;
      }
    }
  }

  if (n_mu > 0) {
    const double sign = hp_.regularizer_sign == RegularizerSign::Correct ? 1.0 : -1.0;
    for (Eigen::Index i = 0; i < n_mu; ++i) {
      const double m = mu[static_cast<std::size_t>(i)];
      total += sign * regularizer(m, hp_);
      grad(n_s + i) += sign * regularizer_derivative(m, hp_);
      if (hessian) (*hessian)(n_s + i, n_s + i) += sign * regularizer_second_derivative(m, hp_);
    }
  }
  return total;
}

// --- solvers ---------------------------------------------------------------

namespace {

double min_of(const std::vector<double>& v) {
  return v.empty() ? 1.0 : *std::min_element(v.begin(), v.end());
}

TabularSolution solve_newton(const FullBatchObjective& obj, const SolveOptions& options) {
  const auto n_s = static_cast<std::size_t>(obj.data().n_states);
  const std::size_t n_mu = obj.n_free_mu();
  std::vector<double> nu(n_s, 0.0);
  std::vector<double> mu(obj.data().n_objectives, 1.0);

  TabularSolution sol;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double f = obj.value_and_gradient(nu, mu, grad, &hess);
  for (std::size_t iter = 0; iter < options.newton_iters; ++iter) {
    if (!std::isfinite(f)) throw SolverError("non-finite loss in Newton solve", iter);
    sol.trace.loss.push_back(f);
    sol.trace.min_mu.push_back(min_of(mu));
    sol.trace.iterations = iter;
    sol.trace.final_grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (sol.trace.final_grad_norm < options.newton_tol) {
      sol.trace.converged = true;
      break;
    }

    const double scale = std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
    Eigen::VectorXd step;
    for (double ridge = 1e-12 * scale;; ridge *= 10.0) {
      Eigen::MatrixXd damped = hess;
      damped.diagonal().array() += ridge;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        step = ldlt.solve(-grad);
        if (step.allFinite() && step.dot(grad) < 0.0) break;
      }
      if (ridge > 1e12 * scale) {
        step = -grad;
        break;
      }
    }

    // Keep mu strictly positive, then backtrack on the Armijo condition.
    double t = 1.0;
    for (std::size_t i = 0; i < n_mu; ++i) {
      const double d = step(static_cast<Eigen::Index>(n_s + i));
      if (d < 0.0) t = std::min(t, -0.99 * mu[i] / d);
    }
    const double slope = step.dot(grad);
    std::vector<double> nu_try(n_s);
    std::vector<double> mu_try = mu;
    double f_try = f;
    bool accepted = false;
    for (int ls = 0; ls < 80; ++ls, t *= 0.5) {
      for (std::size_t s = 0; s < n_s; ++s) nu_try[s] = nu[s] + t * step(static_cast<Eigen::Index>(s));
      for (std::size_t i = 0; i < n_mu; ++i) mu_try[i] = mu[i] + t * step(static_cast<Eigen::Index>(n_s + i));
      f_try = obj.value(nu_try, mu_try);
      if (std::isfinite(f_try) && f_try <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    nu = nu_try;
    mu = mu_try;
    f = obj.value_and_gradient(nu, mu, grad, &hess);
  }
  sol.critic.nu = std::move(nu);
  sol.mu = PreferenceVector::from_mu(mu);
  return sol;
}

TabularSolution solve_adam(const FullBatchObjective& obj, const SolveOptions& options) {
  const auto n_s = static_cast<std::size_t>(obj.data().n_states);
  const std::size_t n_mu = obj.n_free_mu();
  const std::size_t k = obj.data().n_objectives;
  Eigen::VectorXd params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_s + n_mu));
  nn::Adam adam({.lr = options.lr}, static_cast<std::size_t>(params.size()));

  std::vector<double> nu(n_s);
  std::vector<double> mu(k, 1.0);
  Eigen::VectorXd grad;
  TabularSolution sol;
  sol.trace.loss.reserve(options.iters);
  for (std::size_t iter = 0; iter < options.iters; ++iter) {
    for (std::size_t s = 0; s < n_s; ++s) nu[s] = params(static_cast<Eigen::Index>(s));
    for (std::size_t i = 0; i < n_mu; ++i) mu[i] = std::exp(params(static_cast<Eigen::Index>(n_s + i)));
    const double f = obj.value_and_gradient(nu, mu, grad);
    if (!std::isfinite(f) || !grad.allFinite()) {
      throw SolverError("non-finite loss at iteration " + std::to_string(iter), iter);
    }
    // Chain rule through mu = exp(xi).
    for (std::size_t i = 0; i < n_mu; ++i) grad(static_cast<Eigen::Index>(n_s + i)) *= mu[i];
    sol.trace.loss.push_back(f);
    sol.trace.min_mu.push_back(min_of(mu));
    sol.trace.iterations = iter + 1;
    sol.trace.final_grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (sol.trace.final_grad_norm < options.grad_tol) {
      sol.trace.converged = true;
      break;
    }
    adam.step(params, grad);
  }
  for (std::size_t s = 0; s < n_s; ++s) nu[s] = params(static_cast<Eigen::Index>(s));
  std::vector<double> xi(k, 0.0);
  for (std::size_t i = 0; i < n_mu; ++i) xi[i] = params(static_cast<Eigen::Index>(n_s + i));
  sol.critic.nu = std::move(nu);
  sol.mu = PreferenceVector(std::move(xi));
  return sol;
}

}  // namespace

TabularSolution solve_critic_full_batch(const TransitionDataset& data, const HyperParams& hp,
                                        const SolveOptions& options) {
  FullBatchObjective obj(aggregate(data), hp);
  if (options.method == TabularSolver::Newton) return solve_newton(obj, options);
  return solve_adam(obj, options);
}

// --- policies --------------------------------------------------------------

TabularPolicy extract_policy(const TransitionDataset& data, const TabularCritic& critic,
                             const PreferenceVector& mu, const HyperParams& hp) {
  const AggregatedData agg = aggregate(data);
  const std::size_t k = agg.n_objectives;
  if (critic.nu.size() < static_cast<std::size_t>(agg.n_states)) {
    throw std::invalid_argument("extract_policy: critic does not cover the dataset states");
  }
  // log of (count x w*) per tuple; w* can underflow for small beta, so stay in log space.
  std::vector<double> log_w(agg.weight.size());
  for (std::size_t t = 0; t < log_w.size(); ++t) {
    const std::span<const double> r(agg.rewards.data() + t * k, k);
    const double e = td_error(mu.mu(), r, critic.nu[static_cast<std::size_t>(agg.s[t])],
                              critic.nu[static_cast<std::size_t>(agg.s_next[t])], hp.gamma,
                              agg.done[t] != 0);
    log_w[t] = std::log(agg.weight[t]) + log_f_prime_inverse(e / hp.beta);
  }
  const auto n_s = static_cast<std::size_t>(agg.n_states);
  const auto n_a = static_cast<std::size_t>(agg.n_actions);
  std::vector<double> max_log(n_s, -std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < log_w.size(); ++t) {
    auto& m = max_log[static_cast<std::size_t>(agg.s[t])];
    m = std::max(m, log_w[t]);
  }
  TabularPolicy pi{agg.n_states, agg.n_actions, std::vector<double>(n_s * n_a, 0.0)};
  for (std::size_t t = 0; t < log_w.size(); ++t) {
    const auto s = static_cast<std::size_t>(agg.s[t]);
    pi.probs[s * n_a + static_cast<std::size_t>(agg.a[t])] += std::exp(log_w[t] - max_log[s]);
  }
  for (std::size_t s = 0; s < n_s; ++s) {
    const auto row = pi.probs.begin() + static_cast<std::ptrdiff_t>(s * n_a);
    const double total = std::accumulate(row, row + static_cast<std::ptrdiff_t>(n_a), 0.0);
    if (total > 0.0) {
      std::transform(row, row + static_cast<std::ptrdiff_t>(n_a), row, [&](double p) { return p / total; });
    } else {
      std::fill(row, row + static_cast<std::ptrdiff_t>(n_a), 1.0 / static_cast<double>(n_a));
    }
  }
  return pi;
}

TabularPolicy empirical_policy(const TransitionDataset& data) {
  const AggregatedData agg = aggregate(data);
  const auto n_a = static_cast<std::size_t>(agg.n_actions);
  TabularPolicy pi{agg.n_states, agg.n_actions,
                   std::vector<double>(static_cast<std::size_t>(agg.n_states) * n_a, 0.0)};
  std::vector<double> totals(static_cast<std::size_t>(agg.n_states), 0.0);
  for (std::size_t t = 0; t < agg.weight.size(); ++t) {
    const auto s = static_cast<std::size_t>(agg.s[t]);
    pi.probs[s * n_a + static_cast<std::size_t>(agg.a[t])] += agg.weight[t];
    totals[s] += agg.weight[t];
  }
  for (std::size_t s = 0; s < totals.size(); ++s) {
    for (std::size_t a = 0; a < n_a; ++a) {
      auto& p = pi.probs[s * n_a + a];
      p = totals[s] > 0.0 ? p / totals[s] : 1.0 / static_cast<double>(n_a);
    }
  }
  return pi;
}

double total_variation(const TabularPolicy& a, const TabularPolicy& b, const TransitionDataset& data) {
  if (a.n_actions != b.n_actions || a.n_states != b.n_states) {
    throw std::invalid_argument("total_variation: policy shapes differ");
  }
  double acc = 0.0;
  for (int s : data.states) {
    double tv = 0.0;
    for (int act = 0; act < a.n_actions; ++act) tv += std::abs(a.prob(s, act) - b.prob(s, act));
    acc += 0.5 * tv;
  }
  return data.states.empty() ? 0.0 : acc / static_cast<double>(data.states.size());
}

// --- evaluation ------------------------------------------------------------

PolicyReturns evaluate_tabular_policy(const TabularMOMDP& env, const TabularPolicy& policy,
                                      double gamma, const EvalOptions& options) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("evaluate: gamma must lie in [0, 1)");
  if (policy.n_states != env.n_states || policy.n_actions != env.n_actions) {
    throw std::invalid_argument("evaluate: policy shape does not match environment");
  }
  const auto n = static_cast<Eigen::Index>(env.n_states);
  const auto k = static_cast<Eigen::Index>(env.n_objectives);
  const bool exact = options.method == EvalMethod::Exact ||
                     (options.method == EvalMethod::Auto &&
                      static_cast<std::size_t>(env.n_states * env.n_actions) <= options.exact_limit);
  PolicyReturns out;
  out.exact = exact;
  if (exact) {
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, k);
    for (int s = 0; s < env.n_states; ++s) {
      if (env.terminal[static_cast<std::size_t>(s)]) continue;
      for (int a = 0; a < env.n_actions; ++a) {
        const double p = policy.prob(s, a);
        if (p == 0.0) continue;
        for (const auto& succ : env.successors(s, a)) {
          for (Eigen::Index i = 0; i < k; ++i) rhs(s, i) += p * succ.prob * succ.reward[static_cast<std::size_t>(i)];
          if (!env.terminal[static_cast<std::size_t>(succ.next)]) system(s, succ.next) -= gamma * p * succ.prob;
        }
      }
    }
    const Eigen::MatrixXd values = system.partialPivLu().solve(rhs);
    const Eigen::Map<const Eigen::VectorXd> p0(env.p0.data(), n);
    const Eigen::VectorXd j = values.transpose() * p0;
    out.returns.assign(j.data(), j.data() + k);
    out.std_error.assign(static_cast<std::size_t>(k), 0.0);
    return out;
  }

  Rng rng(options.seed);
  std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
  std::vector<double> sum_sq(static_cast<std::size_t>(k), 0.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t ep = 0; ep < options.mc_episodes; ++ep) {
    std::vector<double> ret(static_cast<std::size_t>(k), 0.0);
    int s = env.sample_initial(rng);
    double discount = 1.0;
    for (std::size_t t = 0; t < options.horizon && !env.terminal[static_cast<std::size_t>(s)]; ++t) {
      double u = unif(rng);
      int a = env.n_actions - 1;
      for (int b = 0; b < env.n_actions; ++b) {
        if (u < policy.prob(s, b)) {
          a = b;
          break;
        }
        u -= policy.prob(s, b);
      }
      const Successor& succ = env.sample(s, a, rng);
      for (std::size_t i = 0; i < ret.size(); ++i) ret[i] += discount * succ.reward[i];
      discount *= gamma;
      s = succ.next;
    }
    for (std::size_t i = 0; i < ret.size(); ++i) {
      sum[i] += ret[i];
      sum_sq[i] += ret[i] * ret[i];
    }
  }
  const auto episodes = static_cast<double>(options.mc_episodes);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum[i] / episodes;
    const double var = std::max(0.0, sum_sq[i] / episodes - mean * mean);
    out.returns.push_back(mean);
    out.std_error.push_back(std::sqrt(var / std::max(1.0, episodes - 1.0)));
  }
  return out;
}

}  // namespace fairdice
