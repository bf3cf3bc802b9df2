#pragma once

// Welfare metrics, dataset normalization and the Kruskal-Wallis H-test.

#include "fairdice/dataset.hpp"

#include <span>
#include <vector>

namespace fairdice {

struct NswValue {
  double value = 0.0;
  /// Set when some return was nonpositive; value is then -infinity.
  bool nonpositive = false;
};

/// sum_i log J_i, or -inf (flagged) when any J_i <= 0.
NswValue nsw(std::span<const double> returns);
/// Mean NSW over rows of a samples x K row-major matrix.
NswValue nsw_mean(std::span<const double> samples, std::size_t k);

/// (sum J)^2 / (K sum J^2). Throws std::domain_error for an all-zero vector.
double jain_index(std::span<const double> returns);

double utilitarian(std::span<const double> returns);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal approximation
  std::size_t n = 0;
};
ConfidenceInterval confidence_interval(std::span<const double> values);

// --- normalization ---------------------------------------------------------

NormStats compute_norm_stats(const TransitionDataset& data);

/// r -> (r - min) / (max - min); constant objectives map to 0.
double normalize_reward(double r, std::size_t objective, const NormStats& stats);
double denormalize_reward(double r, std::size_t objective, const NormStats& stats);

TransitionDataset minmax_normalize_rewards(const TransitionDataset& data, const NormStats& stats);
/// Inverse of minmax_normalize_rewards on non-constant objectives.
TransitionDataset minmax_denormalize_rewards(const TransitionDataset& data, const NormStats& stats);

/// (x - mean) / std per dimension; constant dimensions are only centered.
void normalize_state(std::span<double> x, const NormStats& stats);
TransitionDataset meanstd_normalize_states(const TransitionDataset& data, const NormStats& stats);

// --- statistics ------------------------------------------------------------

/// Regularized upper incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);
/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double dof);

struct KruskalWallis {
  double h = 0.0;
  double p = 1.0;
};

/// H with tie correction and p from the chi-square tail on groups - 1 dof.
KruskalWallis kruskal_wallis(const std::vector<std::vector<double>>& groups);

}  // namespace fairdice
