#pragma once

// Full-batch FairDICE on tabular datasets: joint optimization of the critic
// nu(s) and preference weights mu, closed-form weighted behaviour cloning,
// and exact / Monte-Carlo policy evaluation.

#include "fairdice/dataset.hpp"
#include "fairdice/losses.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairdice {

struct TabularCritic {
  std::vector<double> nu;
};

struct TabularPolicy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;  // row-major |S| x |A|

  [[nodiscard]] double prob(int s, int a) const {
    return probs[static_cast<std::size_t>(s * n_actions + a)];
  }
  void validate(double tol = 1e-9) const;
  static TabularPolicy uniform(int n_states, int n_actions);
};

/// Unique (s, a, r, s', done) tuples with their empirical frequency, plus the
/// empirical distribution of trajectory-initial states.
struct AggregatedData {
  int n_states = 0;
  int n_actions = 0;
  std::size_t n_objectives = 0;
  std::vector<int> s, a, s_next;
  std::vector<unsigned char> done;
  std::vector<double> rewards;  // tuples x K
  std::vector<double> weight;   // frequency, sums to 1
  std::vector<double> initial;  // |S|, sums to 1
};

AggregatedData aggregate(const TransitionDataset& data);

/// The full-batch loss as a function of (nu, mu).
class FullBatchObjective {
 public:
  FullBatchObjective(AggregatedData data, HyperParams hp);

  [[nodiscard]] double value(const std::vector<double>& nu, const std::vector<double>& mu) const;
  /// Gradient over (nu, mu) stacked; mu entries are omitted for a utilitarian utility.
  double value_and_gradient(const std::vector<double>& nu, const std::vector<double>& mu,
                            Eigen::VectorXd& grad, Eigen::MatrixXd* hessian = nullptr) const;

  [[nodiscard]] const AggregatedData& data() const { return data_; }
  [[nodiscard]] const HyperParams& hyper() const { return hp_; }
  [[nodiscard]] std::size_t n_free_mu() const { return hp_.utilitarian() ? 0 : data_.n_objectives; }

 private:
  AggregatedData data_;
  HyperParams hp_;
};

enum class TabularSolver { Newton, Adam };

struct SolveOptions {
  TabularSolver method = TabularSolver::Newton;
  std::size_t iters = 50000;     // Adam step budget
  double lr = 3e-4;              // Adam learning rate
  double grad_tol = 1e-5;        // Adam stopping threshold (inf-norm)
  std::size_t newton_iters = 500;
  double newton_tol = 1e-8;
};

struct SolveTrace {
  std::vector<double> loss;
  std::vector<double> min_mu;
  double final_grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct TabularSolution {
  TabularCritic critic;
  PreferenceVector mu;
  SolveTrace trace;
};

/// Raised when the loss leaves the finite range during a solve.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  [[nodiscard]] std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

TabularSolution solve_critic_full_batch(const TransitionDataset& data, const HyperParams& hp,
                                        const SolveOptions& options = {});

/// pi(a|s) proportional to the summed w* of (s, a) transitions; uniform on unseen states.
TabularPolicy extract_policy(const TransitionDataset& data, const TabularCritic& critic,
                             const PreferenceVector& mu, const HyperParams& hp);

/// Empirical action frequencies (unweighted behaviour cloning).
TabularPolicy empirical_policy(const TransitionDataset& data);

/// Mean over dataset transitions of the per-state total-variation distance.
double total_variation(const TabularPolicy& a, const TabularPolicy& b, const TransitionDataset& data);

struct PolicyReturns {
  std::vector<double> returns;    // discounted J_i
  std::vector<double> std_error;  // zero when exact
  bool exact = true;
};

enum class EvalMethod { Auto, Exact, MonteCarlo };

struct EvalOptions {
  EvalMethod method = EvalMethod::Auto;
  std::size_t mc_episodes = 10000;
  std::size_t horizon = 1000;
  std::uint64_t seed = 0;
  std::size_t exact_limit = 10000;  // max |S| x |A| for the linear solve
};

PolicyReturns evaluate_tabular_policy(const TabularMOMDP& env, const TabularPolicy& policy,
                                      double gamma, const EvalOptions& options = {});

}  // namespace fairdice
