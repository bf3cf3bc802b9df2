#include "fairdice/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fairdice {

void HyperParams::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be nonnegative");
  if (!(lambda_gp >= 0.0)) throw std::invalid_argument("lambda_gp must be nonnegative");
}

PreferenceVector::PreferenceVector(std::vector<double> xi) : xi_(std::move(xi)) {
  mu_.resize(xi_.size());
  std::transform(xi_.begin(), xi_.end(), mu_.begin(), [](double x) { return std::exp(x); });
}

PreferenceVector PreferenceVector::ones(std::size_t k) {
  return PreferenceVector(std::vector<double>(k, 0.0));
}

PreferenceVector PreferenceVector::from_mu(std::span<const double> mu) {
  std::vector<double> xi(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(mu[i] > 0.0)) throw std::domain_error("preference weights must be positive");
    xi[i] = std::log(mu[i]);
  }
  PreferenceVector p(std::move(xi));
  std::copy(mu.begin(), mu.end(), p.mu_.begin());
  return p;
}

void PreferenceVector::set_xi(std::span<const double> xi) {
  xi_.assign(xi.begin(), xi.end());
  mu_.resize(xi_.size());
  std::transform(xi_.begin(), xi_.end(), mu_.begin(), [](double x) { return std::exp(x); });
}

// --- soft chi-square -------------------------------------------------------

double soft_chi2_f(double w) {
  if (w < 0.0 || std::isnan(w)) throw std::domain_error("soft chi-square is defined for w >= 0");
  if (w < 1.0) return w > 0.0 ? w * std::log(w) - w + 1.0 : 1.0;
  const double d = w - 1.0;
  return 0.5 * d * d;
}

double soft_chi2_f_prime(double w) {
  if (w < 0.0 || std::isnan(w)) throw std::domain_error("soft chi-square is defined for w >= 0");
  if (w < 1.0) return std::log(w);
  return w - 1.0;
}

double f_prime_inverse(double y) { return y < 0.0 ? std::exp(y) : y + 1.0; }

double f_prime_inverse_derivative(double y) { return y < 0.0 ? std::exp(y) : 1.0; }

double log_f_prime_inverse(double y) { return y < 0.0 ? y : std::log1p(y); }

double soft_chi2_conjugate(double y) {
  // y < 0: w = e^y gives e^y - 1; y >= 0: w = y + 1 gives y^2/2 + y.
  return y < 0.0 ? std::expm1(y) : 0.5 * y * y + y;
}

double w_star(double e, double beta) { return std::max(0.0, f_prime_inverse(e / beta)); }

double td_error(std::span<const double> mu, std::span<const double> r, double nu_s,
                double nu_s_next, double gamma, bool terminal) {
  if (mu.size() != r.size()) {
    throw std::invalid_argument("td_error: preference has " + std::to_string(mu.size()) +
                                " entries but reward has " + std::to_string(r.size()));
  }
  const double scalar = std::inner_product(mu.begin(), mu.end(), r.begin(), 0.0);
  return scalar + (terminal ? 0.0 : gamma * nu_s_next) - nu_s;
}

// --- utilities -------------------------------------------------------------

namespace {

bool is_log(const HyperParams& hp) { return hp.alpha == 1.0; }

void require_positive_mu(double mu) {
  if (!(mu > 0.0)) throw std::domain_error("k*: preference weight must be positive");
}

}  // namespace

double utility(double x, const HyperParams& hp) {
  if (hp.utility_kind == UtilityKind::PiecewiseLog) {
    if (x >= 1.0) return std::log(x);
    const double d = x - 2.0;
    return -0.5 * d * d + 0.5;
  }
  if (hp.alpha == 0.0) return x;
  if (!(x > 0.0)) throw std::domain_error("alpha-fair utility needs x > 0");
  if (is_log(hp)) return std::log(x);
  return std::pow(x, 1.0 - hp.alpha) / (1.0 - hp.alpha);
}

double utility_prime(double x, const HyperParams& hp) {
  if (hp.utility_kind == UtilityKind::PiecewiseLog) return x >= 1.0 ? 1.0 / x : 2.0 - x;
  if (hp.alpha == 0.0) return 1.0;
  if (!(x > 0.0)) throw std::domain_error("alpha-fair utility needs x > 0");
  if (is_log(hp)) return 1.0 / x;
  return std::pow(x, -hp.alpha);
}

double k_star(double mu, const HyperParams& hp) {
  require_positive_mu(mu);
  if (hp.utility_kind == UtilityKind::PiecewiseLog) return mu <= 1.0 ? 1.0 / mu : 2.0 - mu;
  if (hp.alpha == 0.0) throw std::domain_error("k*: utilitarian utility has constant derivative");
  if (is_log(hp)) return 1.0 / mu;
  return std::pow(mu, -1.0 / hp.alpha);
}

double regularizer(double mu, const HyperParams& hp) {
  if (hp.utilitarian()) return 0.0;
  require_positive_mu(mu);
  if (hp.utility_kind == UtilityKind::PiecewiseLog) {
    if (mu <= 1.0) return -std::log(mu) - 1.0;
    return 0.5 * mu * mu - 2.0 * mu + 0.5;
  }
  if (is_log(hp)) return -std::log(mu) - 1.0;
  const double k = std::pow(mu, -1.0 / hp.alpha);
  return std::pow(k, 1.0 - hp.alpha) / (1.0 - hp.alpha) - mu * k;
}

double regularizer_derivative(double mu, const HyperParams& hp) {
  if (hp.utilitarian()) return 0.0;
  return -k_star(mu, hp);
}

double regularizer_second_derivative(double mu, const HyperParams& hp) {
  if (hp.utilitarian()) return 0.0;
  require_positive_mu(mu);
  if (hp.utility_kind == UtilityKind::PiecewiseLog) return mu <= 1.0 ? 1.0 / (mu * mu) : 1.0;
  if (is_log(hp)) return 1.0 / (mu * mu);
  return std::pow(mu, -1.0 / hp.alpha - 1.0) / hp.alpha;
}

// --- critic loss -----------------------------------------------------------

void TdBatch::validate() const {
  const std::size_t b = nu_s.size();
  if (b == 0) throw std::invalid_argument("TdBatch: empty batch");
  if (nu_next.size() != b || nu_initial.size() != b || terminal.size() != b ||
      rewards.size() != b * n_objectives) {
    throw std::invalid_argument("TdBatch: arrays disagree on batch length");
  }
}

CriticLoss critic_mu_loss(const TdBatch& batch, const PreferenceVector& mu, const HyperParams& hp,
                          bool with_gradients) {
  batch.validate();
  const std::size_t b = batch.size();
  const std::size_t k = batch.n_objectives;
  if (mu.size() != k) throw std::invalid_argument("critic_mu_loss: preference dimension mismatch");
  const auto& m = mu.mu();
  const double inv_b = 1.0 / static_cast<double>(b);

  CriticLoss out;
  out.w.resize(b);
  out.e.resize(b);
  if (with_gradients) {
    out.d_nu_s.assign(b, 0.0);
    out.d_nu_next.assign(b, 0.0);
    out.d_nu_initial.assign(b, (1.0 - hp.gamma) * inv_b);
    out.d_mu.assign(k, 0.0);
  }

  double initial = 0.0;
  double transition = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto r = batch.rewards.subspan(i * k, k);
    const bool term = batch.terminal[i] != 0;
    const double e = td_error(m, r, batch.nu_s[i], batch.nu_next[i], hp.gamma, term);
    const double w = w_star(e, hp.beta);
    out.e[i] = e;
    out.w[i] = w;
    initial += (1.0 - hp.gamma) * batch.nu_initial[i];
    transition += w * e - hp.beta * soft_chi2_f(w);
    if (with_gradients) {
      // d/de [w* e - beta f(w*)] = w* since f'(w*) = e / beta.
      out.d_nu_s[i] = -w * inv_b;
      out.d_nu_next[i] = term ? 0.0 : hp.gamma * w * inv_b;
      for (std::size_t j = 0; j < k; ++j) out.d_mu[j] += w * r[j] * inv_b;
    }
  }
  out.initial_term = initial * inv_b;
  out.transition_term = transition * inv_b;

  const double sign = hp.regularizer_sign == RegularizerSign::Correct ? 1.0 : -1.0;
  double reg = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    reg += regularizer(m[j], hp);
    if (with_gradients) out.d_mu[j] += sign * regularizer_derivative(m[j], hp);
  }
  out.regularizer_term = sign * reg;
  out.total = out.initial_term + out.transition_term + out.regularizer_term;
  return out;
}

// --- policy losses ---------------------------------------------------------

namespace {

void require_same_length(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw std::invalid_argument("policy loss: input lengths differ");
  if (a == 0) throw std::invalid_argument("policy loss: empty batch");
}

}  // namespace

std::vector<double> normalize_weights(std::span<const double> w, bool* fallback) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> out(w.size(), 1.0);
  const bool degenerate = !(total > 0.0) || !std::isfinite(total);
  if (fallback) *fallback = degenerate;
  if (degenerate) return out;
  const double scale = static_cast<double>(w.size()) / total;
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] * scale;
  return out;
}

PolicyLoss policy_loss_weighted(std::span<const double> log_probs, std::span<const double> w,
                                std::span<const unsigned char> terminal) {
  require_same_length(log_probs.size(), w.size(), terminal.size());
  const std::size_t b = log_probs.size();
  const double inv_b = 1.0 / static_cast<double>(b);
  PolicyLoss out;
  out.normalized_w = normalize_weights(w, &out.uniform_fallback);
  out.d_log_probs.resize(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double coef = terminal[i] ? 0.0 : out.normalized_w[i];
    acc += coef * log_probs[i];
    out.d_log_probs[i] = -coef * inv_b;
  }
  out.value = -acc * inv_b;
  return out;
}

PolicyLoss policy_loss_buggy_outer(std::span<const double> log_probs, std::span<const double> w,
                                   std::span<const unsigned char> terminal) {
  require_same_length(log_probs.size(), w.size(), terminal.size());
  const std::size_t b = log_probs.size();
  const double inv_b = 1.0 / static_cast<double>(b);
  PolicyLoss out;
  out.normalized_w = normalize_weights(w, &out.uniform_fallback);
  // The (B,1) weight column broadcasts against the (B,) log-prob row, so the
  // (B,B) sum factorizes into (sum_i mask_i w~_i) * (sum_j log_probs_j).
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < b; ++i) weight_sum += terminal[i] ? 0.0 : out.normalized_w[i];
  const double lp_sum = std::accumulate(log_probs.begin(), log_probs.end(), 0.0);
  out.value = -weight_sum * lp_sum * inv_b;
  out.d_log_probs.assign(b, -weight_sum * inv_b);
  return out;
}

PolicyLoss policy_loss_bc(std::span<const double> log_probs) {
  if (log_probs.empty()) throw std::invalid_argument("policy loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(log_probs.size());
  PolicyLoss out;
  out.normalized_w.assign(log_probs.size(), 1.0);
  out.value = -std::accumulate(log_probs.begin(), log_probs.end(), 0.0) * inv_b;
  out.d_log_probs.assign(log_probs.size(), -inv_b);
  return out;
}

// --- gradient penalty ------------------------------------------------------

double gradient_penalty(std::span<const double> norms, double lambda) {
  if (lambda == 0.0) return 0.0;
  double acc = 0.0;
  for (double n : norms) {
    if (n < 0.0) throw std::domain_error("gradient_penalty: negative norm");
    const double p = std::max(0.0, n - kGradientNormThreshold);
    acc += p * p;
  }
  return lambda * acc;
}

std::vector<double> gradient_penalty_derivative(std::span<const double> norms, double lambda) {
  std::vector<double> out(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    out[i] = 2.0 * lambda * std::max(0.0, norms[i] - kGradientNormThreshold);
  }
  return out;
}

}  // namespace fairdice
