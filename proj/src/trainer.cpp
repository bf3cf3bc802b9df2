#include "fairdice/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <tuple>

namespace fairdice {

using nn::Matrix;
using nn::Vector;
using json = nlohmann::json;

LossMode parse_loss_mode(const std::string& name) {
  if (name == "fairdice" || name == "fixed") return LossMode::FairDice;
  if (name == "buggy" || name == "fairdice-buggy") return LossMode::FairDiceBuggy;
  if (name == "bc" || name == "plain-bc") return LossMode::PlainBC;
  throw std::invalid_argument("unknown loss mode '" + name + "'");
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::FairDice: return "fairdice";
    case LossMode::FairDiceBuggy: return "buggy";
    case LossMode::PlainBC: return "bc";
  }
  return "?";
}

void TrainConfig::validate() const {
  hp.validate();
  if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  for (auto h : hidden) {
    if (h == 0) throw std::invalid_argument("TrainConfig: hidden widths must be positive");
  }
}

std::vector<double> TrainArtifact::mu() const { return PreferenceVector(xi).mu(); }

nn::Mlp TrainArtifact::policy() const {
  nn::Mlp net(policy_spec);
  net.params() = policy_params;
  return net;
}

nn::Mlp TrainArtifact::critic() const {
  nn::Mlp net(nu_spec);
  net.params() = nu_params;
  return net;
}

namespace {

/// Independent generator per purpose so that, e.g., batches do not depend on the loss mode.
Rng stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return Rng(seq);
}

enum Stream : std::uint32_t { kPolicyInit = 1, kCriticInit = 2, kBatches = 3, kPenalty = 4 };

/// Normalized network inputs for every transition, stored column-wise.
struct Inputs {
  Matrix obs;
  Matrix next_obs;
  Matrix initial_obs;  // one column per transition
  Matrix rewards;      // K x n, min-max normalized
};

Matrix one_hot(const std::vector<int>& states, std::size_t width) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) m(states[i], static_cast<Eigen::Index>(i)) = 1.0;
  return m;
}

std::size_t input_width(const TransitionDataset& data) {
  if (!data.tabular()) return data.obs_dim;
  int n = data.meta.n_states;
  for (std::size_t i = 0; i < data.size(); ++i) {
    n = std::max({n, data.states[i] + 1, data.next_states[i] + 1, data.initial_states[i] + 1});
  }
  return static_cast<std::size_t>(n);
}

Inputs build_inputs(const TransitionDataset& raw, const NormStats& stats, std::size_t width) {
  const TransitionDataset data = minmax_normalize_rewards(raw, stats);
  Inputs in;
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto k = static_cast<Eigen::Index>(data.n_objectives);
  in.rewards = Eigen::Map<const Matrix>(data.rewards.data(), k, n);
  if (data.tabular()) {
    in.obs = one_hot(data.states, width);
    in.next_obs = one_hot(data.next_states, width);
    in.initial_obs = one_hot(data.initial_states, width);
    return in;
  }
  const TransitionDataset norm = meanstd_normalize_states(data, stats);
  const auto d = static_cast<Eigen::Index>(norm.obs_dim);
  in.obs = Eigen::Map<const Matrix>(norm.obs.data(), d, n);
  in.next_obs = Eigen::Map<const Matrix>(norm.next_obs.data(), d, n);
  in.initial_obs.resize(d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    in.initial_obs.col(i) = Eigen::Map<const Vector>(norm.initial_observation(static_cast<std::size_t>(i)), d);
  }
  return in;
}

Matrix gather(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

void check_finite(double v, std::size_t iteration, const char* component) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string("non-finite ") + component + " at iteration " + std::to_string(iteration),
                        iteration, component);
  }
}

struct CriticStep {
  double loss = 0.0;
  double penalty = 0.0;
  std::vector<double> w;
  Vector grad;  // [nu params, xi]
};

CriticStep critic_step(const nn::Mlp& nu, const PreferenceVector& pref, const HyperParams& hp,
                       const Inputs& in, const std::vector<std::size_t>& batch,
                       const std::vector<unsigned char>& terminal, bool penalize, Rng& penalty_rng,
                       std::size_t iteration) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Matrix s = gather(in.obs, batch);
  const Matrix s_next = gather(in.next_obs, batch);
  const Matrix s_init = gather(in.initial_obs, batch);
  Matrix x(s.rows(), 3 * b);
  x << s, s_next, s_init;
  nn::Mlp::Tape tape;
  const Matrix values = nu.forward(x, &tape);

  const Matrix r = gather(in.rewards, batch);
  const std::vector<double> rewards(r.data(), r.data() + r.size());  // column-major K x B = row-major B x K
  TdBatch td{.nu_s = {values.data(), static_cast<std::size_t>(b)},
             .nu_next = {values.data() + b, static_cast<std::size_t>(b)},
             .nu_initial = {values.data() + 2 * b, static_cast<std::size_t>(b)},
             .rewards = rewards,
             .terminal = terminal,
             .n_objectives = static_cast<std::size_t>(r.rows())};
  CriticLoss loss = critic_mu_loss(td, pref, hp, true);
  check_finite(loss.total, iteration, "critic loss");

  CriticStep out;
  const std::size_t n_nu = nu.n_params();
  Vector grad_nu = Vector::Zero(static_cast<Eigen::Index>(n_nu));
  Matrix d_out(1, 3 * b);
  for (Eigen::Index i = 0; i < b; ++i) {
    d_out(0, i) = loss.d_nu_s[static_cast<std::size_t>(i)];
    d_out(0, b + i) = loss.d_nu_next[static_cast<std::size_t>(i)];
    d_out(0, 2 * b + i) = loss.d_nu_initial[static_cast<std::size_t>(i)];
  }
  nu.backward(tape, d_out, grad_nu);

  if (penalize) {
    const double eps = std::uniform_real_distribution<double>(0.0, 1.0)(penalty_rng);
    const Matrix mix = eps * s_init + (1.0 - eps) * s_next;
    nn::Mlp::Tape mix_tape;
    nu.forward(mix, &mix_tape);
    nn::Mlp::InputGradTape grad_tape;
    const Matrix g = nu.input_gradient(mix_tape, &grad_tape);
    const Vector norms = g.colwise().norm();
    const std::span<const double> norm_span(norms.data(), static_cast<std::size_t>(norms.size()));
    out.penalty = gradient_penalty(norm_span, hp.lambda_gp);
    check_finite(out.penalty, iteration, "gradient penalty");
    const auto d_norm = gradient_penalty_derivative(norm_span, hp.lambda_gp);
    Matrix d_g = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (d_norm[static_cast<std::size_t>(j)] != 0.0 && norms(j) > 0.0) {
        d_g.col(j) = d_norm[static_cast<std::size_t>(j)] / norms(j) * g.col(j);
      }
    }
    nu.input_gradient_backward(mix_tape, grad_tape, d_g, grad_nu);
  }

  const std::size_t k = pref.size();
  out.grad.resize(static_cast<Eigen::Index>(n_nu + k));
  out.grad.head(static_cast<Eigen::Index>(n_nu)) = grad_nu;
  for (std::size_t j = 0; j < k; ++j) {
    // mu = exp(xi); a utilitarian utility pins mu at one.
    out.grad(static_cast<Eigen::Index>(n_nu + j)) = hp.utilitarian() ? 0.0 : loss.d_mu[j] * pref.mu()[j];
  }
  out.loss = loss.total;
  out.w = std::move(loss.w);
  return out;
}

PolicyLoss policy_objective(LossMode mode, std::span<const double> log_probs,
                            std::span<const double> w, std::span<const unsigned char> terminal) {
  switch (mode) {
    case LossMode::FairDice: return policy_loss_weighted(log_probs, w, terminal);
    case LossMode::FairDiceBuggy: return policy_loss_buggy_outer(log_probs, w, terminal);
    case LossMode::PlainBC: return policy_loss_bc(log_probs);
  }
  throw std::logic_error("policy_objective: bad mode");
}

/// Policy loss and its parameter gradient on a prepared minibatch.
std::pair<PolicyLoss, Vector> policy_gradient(const nn::Mlp& pi, LossMode mode, const Matrix& s,
                                              const std::vector<int>& actions,
                                              std::span<const double> w,
                                              std::span<const unsigned char> terminal) {
  nn::Mlp::Tape tape;
  const Matrix logits = pi.forward(s, &tape);
  const Matrix lp = nn::log_softmax(logits);
  const auto log_probs = nn::gather_log_probs(lp, actions);
  PolicyLoss loss = policy_objective(mode, log_probs, w, terminal);
  const Matrix d_logits = nn::log_prob_backward(lp, actions, loss.d_log_probs);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(pi.n_params()));
  pi.backward(tape, d_logits, grad);
  return {std::move(loss), std::move(grad)};
}

}  // namespace

TrainArtifact train(const TransitionDataset& data, const TrainConfig& config,
                    const TrainCallback& callback) {
  config.validate();
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (config.batch_size > data.size()) throw std::invalid_argument("train: batch larger than dataset");

  TrainArtifact art;
  art.config = config;
  art.env_id = data.meta.env_id;
  art.obs_dim = input_width(data);
  art.n_objectives = data.n_objectives;
  art.n_actions = data.meta.n_actions;
  for (int a : data.actions) art.n_actions = std::max(art.n_actions, a + 1);
  art.stats = compute_norm_stats(data);  // always from the training data itself
  const Inputs in = build_inputs(data, art.stats, art.obs_dim);

  art.policy_spec = {.input_dim = art.obs_dim, .hidden = config.hidden,
                     .output_dim = static_cast<std::size_t>(art.n_actions),
                     .activation = config.activation, .head = nn::Head::Categorical};
  art.nu_spec = {.input_dim = art.obs_dim, .hidden = config.hidden, .output_dim = 1,
                 .activation = config.activation, .head = nn::Head::Scalar};
  nn::Mlp pi(art.policy_spec);
  nn::Mlp nu(art.nu_spec);
  Rng policy_init = stream(config.seed, kPolicyInit);
  Rng critic_init = stream(config.seed, kCriticInit);
  Rng batch_rng = stream(config.seed, kBatches);
  Rng penalty_rng = stream(config.seed, kPenalty);
  pi.initialize(policy_init);
  nu.initialize(critic_init);

  const std::size_t k = data.n_objectives;
  const std::size_t n_nu = nu.n_params();
  PreferenceVector pref = PreferenceVector::ones(k);
  Vector critic_theta(static_cast<Eigen::Index>(n_nu + k));
  critic_theta << nu.params(), Vector::Zero(static_cast<Eigen::Index>(k));
  nn::Adam critic_opt({.lr = config.lr}, static_cast<std::size_t>(critic_theta.size()));
  nn::Adam policy_opt({.lr = config.lr, .schedule = nn::Schedule::CosineToZero,
                       .total_steps = config.iterations},
                      pi.n_params());

  const bool uses_critic = config.mode != LossMode::PlainBC;
  const bool penalize = uses_critic && !data.tabular() && config.hp.lambda_gp > 0.0;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<std::size_t> batch(config.batch_size);
  std::vector<unsigned char> terminal(config.batch_size);
  std::vector<int> actions(config.batch_size);
  std::vector<double> ones(config.batch_size, 1.0);

  art.mu_trace.reserve(config.iterations * k);
  art.critic_loss.reserve(config.iterations);
  art.penalty.reserve(config.iterations);
  art.policy_loss.reserve(config.iterations);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t j = 0; j < batch.size(); ++j) {
      batch[j] = pick(batch_rng);
      terminal[j] = data.done[batch[j]];
      actions[j] = data.actions[batch[j]];
    }
    art.mu_trace.insert(art.mu_trace.end(), pref.mu().begin(), pref.mu().end());

    std::span<const double> w(ones);
    CriticStep cs;
    if (uses_critic) {
      try {
        cs = critic_step(nu, pref, config.hp, in, batch, terminal, penalize, penalty_rng, it);
      } catch (const nn::NumericError& e) {
        throw TrainingError(std::string("critic network: ") + e.what(), it,
                            "critic layer " + std::to_string(e.layer()));
      }
      const double total = cs.loss + cs.penalty;
      check_finite(total, it, "critic loss");
      critic_opt.step(critic_theta, cs.grad);
      nu.params() = critic_theta.head(static_cast<Eigen::Index>(n_nu));
      if (!config.hp.utilitarian()) {
        const Vector xi = critic_theta.tail(static_cast<Eigen::Index>(k));
        pref.set_xi(std::span<const double>(xi.data(), k));
      }
      w = cs.w;
    }
    art.critic_loss.push_back(cs.loss);
    art.penalty.push_back(cs.penalty);

    PolicyLoss ploss;
    Vector pgrad;
    try {
      std::tie(ploss, pgrad) = policy_gradient(pi, config.mode, gather(in.obs, batch), actions, w, terminal);
    } catch (const nn::NumericError& e) {
      throw TrainingError(std::string("policy network: ") + e.what(), it,
                          "policy layer " + std::to_string(e.layer()));
    }
    check_finite(ploss.value, it, "policy loss");
    if (ploss.uniform_fallback) ++art.uniform_fallbacks;
    policy_opt.step(pi.params(), pgrad);
    art.policy_loss.push_back(ploss.value);

    if (callback && config.eval_every > 0 && (it + 1) % config.eval_every == 0) {
      art.nu_params = nu.params();
      art.policy_params = pi.params();
      art.xi = pref.xi();
      callback(it + 1, art);
    }
  }
  art.nu_params = nu.params();
  art.policy_params = pi.params();
  art.xi = pref.xi();
  return art;
}

Matrix prepare_observations(const TrainArtifact& artifact, const Matrix& raw) {
  if (static_cast<std::size_t>(raw.rows()) != artifact.obs_dim) {
    throw std::invalid_argument("prepare_observations: observation width mismatch");
  }
  Matrix x = raw;
  if (artifact.stats.state_mean.empty()) return x;  // one-hot inputs are used as is
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    const auto u = static_cast<std::size_t>(j);
    x.row(j).array() -= artifact.stats.state_mean[u];
    if (!artifact.stats.state_constant[u]) x.row(j) /= artifact.stats.state_std[u];
  }
  return x;
}

Matrix policy_probabilities(const TrainArtifact& artifact, const Matrix& raw) {
  const nn::Mlp pi = artifact.policy();
  return nn::log_softmax(pi.forward(prepare_observations(artifact, raw))).array().exp();
}

double mean_kl(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols() || p.cols() == 0) {
    throw std::invalid_argument("mean_kl: shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index a = 0; a < p.rows(); ++a) {
      if (p(a, j) > 0.0) total += p(a, j) * (std::log(p(a, j)) - std::log(q(a, j)));
    }
  }
  return total / static_cast<double>(p.cols());
}

double PolicyGradientPair::cosine() const {
  const double denom = buggy.norm() * bc.norm();
  return denom > 0.0 ? buggy.dot(bc) / denom : 1.0;
}

PolicyGradientPair buggy_and_bc_gradients(const TrainArtifact& artifact, const TransitionDataset& data,
                                          const std::vector<std::size_t>& batch,
                                          const std::vector<double>& w) {
  if (w.size() != batch.size()) throw std::invalid_argument("buggy_and_bc_gradients: w length");
  const Inputs in = build_inputs(data, artifact.stats, artifact.obs_dim);
  std::vector<unsigned char> terminal(batch.size());
  std::vector<int> actions(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    terminal[j] = data.done[batch[j]];
    actions[j] = data.actions[batch[j]];
  }
  const nn::Mlp pi = artifact.policy();
  const Matrix s = gather(in.obs, batch);
  PolicyGradientPair out;
  out.buggy = policy_gradient(pi, LossMode::FairDiceBuggy, s, actions, w, terminal).second;
  out.bc = policy_gradient(pi, LossMode::PlainBC, s, actions, w, terminal).second;
  return out;
}

// --- evaluation ------------------------------------------------------------

std::vector<double> EvalReport::mean_returns() const {
  std::vector<double> m(n_objectives, 0.0);
  const std::size_t n = n_rollouts();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < n_objectives; ++i) m[i] += returns[r * n_objectives + i];
  }
  for (auto& v : m) v /= static_cast<double>(std::max<std::size_t>(n, 1));
  return m;
}

namespace {
double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace

double EvalReport::mean_nsw() const { return mean_of(nsw); }
double EvalReport::mean_utilitarian() const { return mean_of(utilitarian); }
double EvalReport::mean_jain() const { return mean_of(jain); }

EvalReport summarize_returns(std::vector<double> returns, std::size_t k) {
  if (k == 0 || returns.size() % k != 0) throw std::invalid_argument("summarize_returns: ragged returns");
  EvalReport rep;
  rep.n_objectives = k;
  rep.returns = std::move(returns);
  const std::size_t n = rep.returns.size() / k;
  for (std::size_t r = 0; r < n; ++r) {
    const std::span<const double> j(rep.returns.data() + r * k, k);
    const NswValue v = nsw(j);
    if (v.nonpositive) ++rep.nonpositive_rollouts;
    rep.nsw.push_back(v.value);
    rep.utilitarian.push_back(utilitarian(j));
    const bool all_zero = std::all_of(j.begin(), j.end(), [](double x) { return x == 0.0; });
    rep.jain.push_back(all_zero ? 0.0 : jain_index(j));
  }
  return rep;
}

EvalReport evaluate_policy_mc(const GroupFairEval& env, const TrainArtifact& artifact, Rng& rng) {
  if (env.n_rollouts < 1) throw std::invalid_argument("evaluate: need at least one rollout");
  const auto& cfg = env.config;
  const std::size_t k = static_cast<std::size_t>(cfg.n_individuals);
  const std::size_t d = static_cast<std::size_t>(cfg.n_options * cfg.n_groups);
  if (artifact.obs_dim != d) throw std::invalid_argument("evaluate: artifact was not trained on GroupFair");
  const nn::Mlp pi = artifact.policy();
  const std::size_t steps = std::min<std::size_t>(env.horizon, static_cast<std::size_t>(cfg.horizon));

  std::vector<GroupFairState> states;
  states.reserve(env.n_rollouts);
  for (std::size_t r = 0; r < env.n_rollouts; ++r) states.push_back(groupfair_reset(env.membership, cfg, rng));
  std::vector<double> returns(env.n_rollouts * k, 0.0);
  Matrix raw(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(env.n_rollouts));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t r = 0; r < env.n_rollouts; ++r) {
      raw.col(static_cast<Eigen::Index>(r)) = Eigen::Map<const Vector>(states[r].options.data(), static_cast<Eigen::Index>(d));
    }
    const Matrix probs = nn::log_softmax(pi.forward(prepare_observations(artifact, raw))).array().exp();
    for (std::size_t r = 0; r < env.n_rollouts; ++r) {
      const auto col = probs.col(static_cast<Eigen::Index>(r));
      int a = 0;
      if (env.selection == ActionSelection::Greedy) {
        col.maxCoeff(&a);
      } else {
        double u = unif(rng);
        a = static_cast<int>(col.size()) - 1;
        for (Eigen::Index i = 0; i < col.size(); ++i) {
          if (u < col(i)) {
            a = static_cast<int>(i);
            break;
          }
          u -= col(i);
        }
      }
      auto step = groupfair_step(states[r], a, rng);
      for (std::size_t i = 0; i < k; ++i) returns[r * k + i] += step.rewards[i];
      states[r] = std::move(step.next);
    }
  }
  return summarize_returns(std::move(returns), k);
}

EvalReport evaluate_reference_policy(const GroupFairEval& env, ReferencePolicy kind, Rng& rng) {
  if (env.n_rollouts < 1) throw std::invalid_argument("evaluate: need at least one rollout");
  const auto& cfg = env.config;
  const std::size_t k = static_cast<std::size_t>(cfg.n_individuals);
  const std::size_t steps = std::min<std::size_t>(env.horizon, static_cast<std::size_t>(cfg.horizon));
  std::vector<double> returns(env.n_rollouts * k, 0.0);
  for (std::size_t r = 0; r < env.n_rollouts; ++r) {
    auto state = groupfair_reset(env.membership, cfg, rng);
    for (std::size_t t = 0; t < steps; ++t) {
      const int a = reference_policy(kind, state, rng);
      auto step = groupfair_step(state, a, rng);
      for (std::size_t i = 0; i < k; ++i) returns[r * k + i] += step.rewards[i];
      state = std::move(step.next);
    }
  }
  return summarize_returns(std::move(returns), k);
}

Matrix sample_groupfair_states(const GroupFairEval& env, ReferencePolicy kind, std::size_t n, Rng& rng) {
  const auto& cfg = env.config;
  const auto d = static_cast<Eigen::Index>(cfg.n_options * cfg.n_groups);
  constexpr std::size_t kStride = 5;  // keep every fifth visited state
  Matrix out(d, static_cast<Eigen::Index>(n));
  std::size_t filled = 0;
  while (filled < n) {
    auto state = groupfair_reset(env.membership, cfg, rng);
    for (int t = 0; t < cfg.horizon && filled < n; ++t) {
      if (static_cast<std::size_t>(t) % kStride == 0) {
        out.col(static_cast<Eigen::Index>(filled++)) = Eigen::Map<const Vector>(state.options.data(), d);
      }
      state = groupfair_step(state, reference_policy(kind, state, rng), rng).next;
    }
  }
  return out;
}

// --- artifact files --------------------------------------------------------

namespace {

constexpr char kMagic[] = "FAIRDICE-ARTIFACT 1\n";

json spec_to_json(const nn::MlpSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden", s.hidden},
          {"output_dim", s.output_dim},
          {"activation", s.activation == nn::Activation::ReLU ? "relu" : "tanh"},
          {"head", s.head == nn::Head::Categorical ? "categorical" : "scalar"},
          {"gain", s.gain}};
}

nn::MlpSpec spec_from_json(const json& j) {
  nn::MlpSpec s;
  s.input_dim = j.at("input_dim");
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.output_dim = j.at("output_dim");
  s.activation = j.at("activation") == "relu" ? nn::Activation::ReLU : nn::Activation::Tanh;
  s.head = j.at("head") == "categorical" ? nn::Head::Categorical : nn::Head::Scalar;
  s.gain = j.at("gain");
  return s;
}

json config_to_json(const TrainConfig& c) {
  return {{"alpha", c.hp.alpha},
          {"beta", c.hp.beta},
          {"lambda_gp", c.hp.lambda_gp},
          {"gamma", c.hp.gamma},
          {"utility", c.hp.utility_kind == UtilityKind::AlphaFair ? "alpha-fair" : "piecewise-log"},
          {"regularizer_sign", c.hp.regularizer_sign == RegularizerSign::Correct ? "correct" : "flipped"},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"eval_every", c.eval_every},
          {"mode", to_string(c.mode)},
          {"lr", c.lr},
          {"hidden", c.hidden},
          {"activation", c.activation == nn::Activation::ReLU ? "relu" : "tanh"},
          {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.hp.alpha = j.at("alpha");
  c.hp.beta = j.at("beta");
  c.hp.lambda_gp = j.at("lambda_gp");
  c.hp.gamma = j.at("gamma");
  c.hp.utility_kind = j.at("utility") == "alpha-fair" ? UtilityKind::AlphaFair : UtilityKind::PiecewiseLog;
  c.hp.regularizer_sign =
      j.at("regularizer_sign") == "correct" ? RegularizerSign::Correct : RegularizerSign::FlippedForTypoTest;
  c.iterations = j.at("iterations");
  c.batch_size = j.at("batch_size");
  c.eval_every = j.at("eval_every");
  c.mode = parse_loss_mode(j.at("mode"));
  c.lr = j.at("lr");
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.activation = j.at("activation") == "relu" ? nn::Activation::ReLU : nn::Activation::Tanh;
  c.seed = j.at("seed");
  return c;
}

json stats_json(const NormStats& s) {
  return {{"reward_min", s.reward_min},         {"reward_max", s.reward_max},
          {"reward_constant", s.reward_constant}, {"state_mean", s.state_mean},
          {"state_std", s.state_std},           {"state_constant", s.state_constant}};
}

NormStats stats_from(const json& j) {
  NormStats s;
  s.reward_min = j.at("reward_min").get<std::vector<double>>();
  s.reward_max = j.at("reward_max").get<std::vector<double>>();
  s.reward_constant = j.at("reward_constant").get<std::vector<unsigned char>>();
  s.state_mean = j.at("state_mean").get<std::vector<double>>();
  s.state_std = j.at("state_std").get<std::vector<double>>();
  s.state_constant = j.at("state_constant").get<std::vector<unsigned char>>();
  return s;
}

static_assert(std::endian::native == std::endian::little, "artifact blobs are little-endian");

}  // namespace

void write_artifact(const TrainArtifact& a, const std::filesystem::path& path) {
  struct Block {
    const char* name;
    const double* data;
    std::size_t size;
  };
  const std::vector<Block> blocks{
      {"nu_params", a.nu_params.data(), static_cast<std::size_t>(a.nu_params.size())},
      {"policy_params", a.policy_params.data(), static_cast<std::size_t>(a.policy_params.size())},
      {"xi", a.xi.data(), a.xi.size()},
      {"mu_trace", a.mu_trace.data(), a.mu_trace.size()},
      {"critic_loss", a.critic_loss.data(), a.critic_loss.size()},
      {"penalty", a.penalty.data(), a.penalty.size()},
      {"policy_loss", a.policy_loss.data(), a.policy_loss.size()},
  };
  json header{{"config", config_to_json(a.config)},
              {"env_id", a.env_id},
              {"obs_dim", a.obs_dim},
              {"n_objectives", a.n_objectives},
              {"n_actions", a.n_actions},
              {"stats", stats_json(a.stats)},
              {"nu_spec", spec_to_json(a.nu_spec)},
              {"policy_spec", spec_to_json(a.policy_spec)},
              {"uniform_fallbacks", a.uniform_fallbacks},
              {"summary", a.summary},
              {"blocks", json::array()}};
  for (const auto& b : blocks) header["blocks"].push_back({{"name", b.name}, {"size", b.size}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write artifact " + path.string());
  out.write(kMagic, sizeof(kMagic) - 1);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : blocks) {
    out.write(reinterpret_cast<const char*>(b.data), static_cast<std::streamsize>(b.size * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing artifact " + path.string());
}

TrainArtifact read_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open artifact " + path.string());
  std::string magic(sizeof(kMagic) - 1, '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kMagic) throw std::runtime_error(path.string() + " is not a fairdice artifact");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated artifact header in " + path.string());
  const json h = json::parse(text);

  TrainArtifact a;
  a.config = config_from_json(h.at("config"));
  a.env_id = h.at("env_id");
  a.obs_dim = h.at("obs_dim");
  a.n_objectives = h.at("n_objectives");
  a.n_actions = h.at("n_actions");
  a.stats = stats_from(h.at("stats"));
  a.nu_spec = spec_from_json(h.at("nu_spec"));
  a.policy_spec = spec_from_json(h.at("policy_spec"));
  a.uniform_fallbacks = h.at("uniform_fallbacks");
  a.summary = h.at("summary").get<std::map<std::string, double>>();

  auto read_block = [&](std::size_t n) {
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("truncated artifact payload in " + path.string());
    return v;
  };
  for (const auto& b : h.at("blocks")) {
    const std::string name = b.at("name");
    auto v = read_block(b.at("size").get<std::size_t>());
    if (name == "nu_params") a.nu_params = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    else if (name == "policy_params") a.policy_params = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    else if (name == "xi") a.xi = std::move(v);
    else if (name == "mu_trace") a.mu_trace = std::move(v);
    else if (name == "critic_loss") a.critic_loss = std::move(v);
    else if (name == "penalty") a.penalty = std::move(v);
    else if (name == "policy_loss") a.policy_loss = std::move(v);
  }
  return a;
}

}  // namespace fairdice
