#include "fairdice/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fairdice {

NswValue nsw(std::span<const double> returns) {
  NswValue out;
  for (double j : returns) {
    if (!(j > 0.0)) {
      out.nonpositive = true;
      out.value = -std::numeric_limits<double>::infinity();
      return out;
    }
    out.value += std::log(j);
  }
  return out;
}

NswValue nsw_mean(std::span<const double> samples, std::size_t k) {
  if (k == 0 || samples.size() % k != 0 || samples.empty()) {
    throw std::invalid_argument("nsw_mean: samples are not a whole number of K-vectors");
  }
  const std::size_t n = samples.size() / k;
  NswValue out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = nsw(samples.subspan(i * k, k));
    if (v.nonpositive) return v;
    out.value += v.value;
  }
  out.value /= static_cast<double>(n);
  return out;
}

double jain_index(std::span<const double> returns) {
  double sum = 0.0;
  double sq = 0.0;
  for (double j : returns) {
    sum += j;
    sq += j * j;
  }
  if (!(sq > 0.0)) throw std::domain_error("jain_index: all returns are zero");
  return sum * sum / (static_cast<double>(returns.size()) * sq);
}

double utilitarian(std::span<const double> returns) {
  return std::accumulate(returns.begin(), returns.end(), 0.0);
}

ConfidenceInterval confidence_interval(std::span<const double> values) {
  ConfidenceInterval ci;
  ci.n = values.size();
  if (values.empty()) return ci;
  ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(ci.n);
  if (ci.n < 2) return ci;
  double ss = 0.0;
  for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
  const double sd = std::sqrt(ss / static_cast<double>(ci.n - 1));
  ci.half_width = 1.959963984540054 * sd / std::sqrt(static_cast<double>(ci.n));
  return ci;
}

// --- normalization ---------------------------------------------------------

NormStats compute_norm_stats(const TransitionDataset& data) {
  NormStats s;
  const std::size_t k = data.n_objectives;
  s.reward_min.assign(k, std::numeric_limits<double>::infinity());
  s.reward_max.assign(k, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double* r = data.reward(i);
    for (std::size_t j = 0; j < k; ++j) {
      s.reward_min[j] = std::min(s.reward_min[j], r[j]);
      s.reward_max[j] = std::max(s.reward_max[j], r[j]);
    }
  }
  s.reward_constant.assign(k, 0);
  for (std::size_t j = 0; j < k; ++j) {
    if (data.size() == 0) s.reward_min[j] = s.reward_max[j] = 0.0;
    s.reward_constant[j] = s.reward_max[j] > s.reward_min[j] ? 0 : 1;
  }

  const std::size_t d = data.obs_dim;
  s.state_mean.assign(d, 0.0);
  s.state_std.assign(d, 0.0);
  s.state_constant.assign(d, 0);
  if (d == 0 || data.size() == 0) return s;
  const auto n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double* x = data.observation(i);
    for (std::size_t j = 0; j < d; ++j) s.state_mean[j] += x[j];
  }
  for (auto& m : s.state_mean) m /= n;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double* x = data.observation(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[j] - s.state_mean[j];
      s.state_std[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    s.state_std[j] = std::sqrt(s.state_std[j] / n);
    s.state_constant[j] = s.state_std[j] > 0.0 ? 0 : 1;
  }
  return s;
}

double normalize_reward(double r, std::size_t objective, const NormStats& stats) {
  if (stats.reward_constant[objective]) return 0.0;
  return (r - stats.reward_min[objective]) / (stats.reward_max[objective] - stats.reward_min[objective]);
}

double denormalize_reward(double r, std::size_t objective, const NormStats& stats) {
  if (stats.reward_constant[objective]) return stats.reward_min[objective];
  return stats.reward_min[objective] + r * (stats.reward_max[objective] - stats.reward_min[objective]);
}

namespace {

void check_reward_stats(const TransitionDataset& data, const NormStats& stats) {
  if (stats.reward_min.size() != data.n_objectives || stats.reward_max.size() != data.n_objectives ||
      stats.reward_constant.size() != data.n_objectives) {
    throw std::invalid_argument("reward statistics do not match the dataset's objectives");
  }
}

}  // namespace

TransitionDataset minmax_normalize_rewards(const TransitionDataset& data, const NormStats& stats) {
  check_reward_stats(data, stats);
  TransitionDataset out = data;
  const std::size_t k = data.n_objectives;
  for (std::size_t i = 0; i < out.rewards.size(); ++i) {
    out.rewards[i] = normalize_reward(data.rewards[i], i % k, stats);
  }
  out.meta.stats.reward_min = stats.reward_min;
  out.meta.stats.reward_max = stats.reward_max;
  out.meta.stats.reward_constant = stats.reward_constant;
  return out;
}

TransitionDataset minmax_denormalize_rewards(const TransitionDataset& data, const NormStats& stats) {
  check_reward_stats(data, stats);
  TransitionDataset out = data;
  const std::size_t k = data.n_objectives;
  for (std::size_t i = 0; i < out.rewards.size(); ++i) {
    out.rewards[i] = denormalize_reward(data.rewards[i], i % k, stats);
  }
  return out;
}

void normalize_state(std::span<double> x, const NormStats& stats) {
  if (x.size() != stats.state_mean.size()) throw std::invalid_argument("normalize_state: width mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] -= stats.state_mean[j];
    if (!stats.state_constant[j]) x[j] /= stats.state_std[j];
  }
}

TransitionDataset meanstd_normalize_states(const TransitionDataset& data, const NormStats& stats) {
  if (data.tabular()) throw std::invalid_argument("meanstd_normalize_states: tabular dataset");
  TransitionDataset out = data;
  const std::size_t d = data.obs_dim;
  auto apply = [&](std::vector<double>& block) {
    for (std::size_t off = 0; off < block.size(); off += d) {
      normalize_state(std::span<double>(block.data() + off, d), stats);
    }
  };
  apply(out.obs);
  apply(out.next_obs);
  apply(out.initial_obs);
  out.meta.stats.state_mean = stats.state_mean;
  out.meta.stats.state_std = stats.state_std;
  out.meta.stats.state_constant = stats.state_constant;
  return out;
}

// --- statistics ------------------------------------------------------------

namespace {

constexpr double kSeriesTolerance = 1e-10;
constexpr int kMaxTerms = 100000;

/// Lower regularized gamma by its power series (x < a + 1).
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxTerms; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kSeriesTolerance) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Upper regularized gamma by its continued fraction (modified Lentz).
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kSeriesTolerance) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("regularized_gamma_q: need a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * dof, 0.5 * x);
}

KruskalWallis kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw std::invalid_argument("kruskal_wallis: need at least two groups");
  struct Obs {
    double value;
    std::size_t group;
  };
  std::vector<Obs> pooled;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw std::invalid_argument("kruskal_wallis: empty group");
    for (double v : groups[g]) {
      if (std::isnan(v)) throw std::invalid_argument("kruskal_wallis: NaN observation");
      pooled.push_back({v, g});
    }
  }
  std::sort(pooled.begin(), pooled.end(), [](const Obs& a, const Obs& b) { return a.value < b.value; });

  const auto n = static_cast<double>(pooled.size());
  std::vector<double> rank_sum(groups.size(), 0.0);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].value == pooled[i].value) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) rank_sum[pooled[t].group] += avg_rank;
    const auto ties = static_cast<double>(j - i);
    tie_term += ties * ties * ties - ties;
    i = j;
  }

  const double correction = 1.0 - tie_term / (n * n * n - n);
  KruskalWallis out;
  if (!(correction > 0.0)) return out;  // every observation identical
  double s = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    s += rank_sum[g] * rank_sum[g] / static_cast<double>(groups[g].size());
  }
  out.h = (12.0 * s - 3.0 * n * (n + 1.0) * (n + 1.0)) / (n * (n + 1.0)) / correction;
  out.h = std::max(out.h, 0.0);
  out.p = chi_square_sf(out.h, static_cast<double>(groups.size() - 1));
  return out;
}

}  // namespace fairdice
