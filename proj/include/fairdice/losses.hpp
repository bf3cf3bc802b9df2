#pragma once

// Scalar pieces of the FairDICE objective: the soft chi-square divergence,
// alpha-fair utilities and their conjugate regularizer, the TD-style error,
// the closed-form importance weight, and the policy losses.

#include <cstddef>
#include <span>
#include <vector>

namespace fairdice {

enum class UtilityKind { AlphaFair, PiecewiseLog };
enum class RegularizerSign { Correct, FlippedForTypoTest };

struct HyperParams {
  double alpha = 1.0;
  double beta = 1.0;
  double lambda_gp = 0.0;
  double gamma = 0.99;
  UtilityKind utility_kind = UtilityKind::AlphaFair;
  RegularizerSign regularizer_sign = RegularizerSign::Correct;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;

  /// True when the utility has a constant derivative (alpha = 0), in which
  /// case the preference vector is pinned to one.
  [[nodiscard]] bool utilitarian() const {
    return utility_kind == UtilityKind::AlphaFair && alpha == 0.0;
  }
};

/// Preference weights mu_i = exp(xi_i) over free parameters xi.
class PreferenceVector {
 public:
  PreferenceVector() = default;
  explicit PreferenceVector(std::vector<double> xi);
  static PreferenceVector ones(std::size_t k);
  static PreferenceVector from_mu(std::span<const double> mu);

  [[nodiscard]] std::size_t size() const { return xi_.size(); }
  [[nodiscard]] const std::vector<double>& xi() const { return xi_; }
  [[nodiscard]] const std::vector<double>& mu() const { return mu_; }
  void set_xi(std::span<const double> xi);

 private:
  std::vector<double> xi_;
  std::vector<double> mu_;
};

// --- soft chi-square divergence -------------------------------------------

/// f(w) = w log w - w + 1 on [0, 1), (w - 1)^2 / 2 on [1, inf).
double soft_chi2_f(double w);
double soft_chi2_f_prime(double w);
/// Inverse of f': exp(y) for y < 0, y + 1 otherwise.
double f_prime_inverse(double y);
/// Derivative of f_prime_inverse.
double f_prime_inverse_derivative(double y);
/// log(f_prime_inverse(y)), accurate for very negative y.
double log_f_prime_inverse(double y);
/// Convex conjugate f*(y) = y w(y) - f(w(y)), w(y) = f_prime_inverse(y).
double soft_chi2_conjugate(double y);

/// max{0, (f')^{-1}(e / beta)}.
double w_star(double e, double beta);

double td_error(std::span<const double> mu, std::span<const double> r, double nu_s,
                double nu_s_next, double gamma, bool terminal);

// --- utilities -------------------------------------------------------------

double utility(double x, const HyperParams& hp);
double utility_prime(double x, const HyperParams& hp);
/// Solves u'(k) = mu. Throws std::domain_error for mu <= 0 or a utilitarian utility.
double k_star(double mu, const HyperParams& hp);
/// u(k*) - mu k*, the per-objective regularizer (before the sign switch).
double regularizer(double mu, const HyperParams& hp);
/// d/dmu of regularizer; equals -k*(mu).
double regularizer_derivative(double mu, const HyperParams& hp);
/// d^2/dmu^2 of regularizer; equals -dk*/dmu.
double regularizer_second_derivative(double mu, const HyperParams& hp);

// --- critic / preference loss ----------------------------------------------

/// Column view over a minibatch. rewards is row-major, batch x K.
struct TdBatch {
  std::span<const double> nu_s;
  std::span<const double> nu_next;
  std::span<const double> nu_initial;
  std::span<const double> rewards;
  std::span<const unsigned char> terminal;
  std::size_t n_objectives = 0;

  [[nodiscard]] std::size_t size() const { return nu_s.size(); }
  void validate() const;
};

struct CriticLoss {
  double total = 0.0;
  double initial_term = 0.0;
  double transition_term = 0.0;
  double regularizer_term = 0.0;
  /// Per-sample weights w*, treated as constants by the policy update.
  std::vector<double> w;
  std::vector<double> e;
  /// Gradients with respect to the three critic evaluations and mu.
  std::vector<double> d_nu_s;
  std::vector<double> d_nu_next;
  std::vector<double> d_nu_initial;
  std::vector<double> d_mu;
};

/// Mean over the batch of (1-gamma) nu(s0) + w* e - beta f(w*) plus the
/// signed regularizer sum. Gradients are filled when with_gradients is set.
CriticLoss critic_mu_loss(const TdBatch& batch, const PreferenceVector& mu,
                          const HyperParams& hp, bool with_gradients = false);

// --- policy losses ---------------------------------------------------------

struct PolicyLoss {
  double value = 0.0;
  /// dLoss / dlog_prob per sample.
  std::vector<double> d_log_probs;
  std::vector<double> normalized_w;
  /// Set when every weight was zero and uniform weights were substituted.
  bool uniform_fallback = false;
};

/// Rescales w to batch-mean 1 (uniform fallback when all zero).
std::vector<double> normalize_weights(std::span<const double> w, bool* fallback = nullptr);

/// -mean(mask * w~ * log_probs) with w~ mean-1 normalized before masking.
PolicyLoss policy_loss_weighted(std::span<const double> log_probs, std::span<const double> w,
                                std::span<const unsigned char> terminal);

/// Broadcast (B,1) x (B,) mistake: -(1/B) sum_{i,j} mask_i w~_i log_probs_j.
PolicyLoss policy_loss_buggy_outer(std::span<const double> log_probs, std::span<const double> w,
                                   std::span<const unsigned char> terminal);

/// -mean(log_probs); plain behaviour cloning.
PolicyLoss policy_loss_bc(std::span<const double> log_probs);

// --- gradient penalty ------------------------------------------------------

inline constexpr double kGradientNormThreshold = 5.0;

/// lambda * sum_i max{0, norm_i - 5}^2.
double gradient_penalty(std::span<const double> norms, double lambda);
/// d penalty / d norm_i.
std::vector<double> gradient_penalty_derivative(std::span<const double> norms, double lambda);

}  // namespace fairdice
