#pragma once

// Minibatch FairDICE / behaviour-cloning trainer for observation-based
// datasets, GroupFair rollouts for evaluation, and the artifact file format.

#include "fairdice/dataset.hpp"
#include "fairdice/losses.hpp"
#include "fairdice/metrics.hpp"
#include "fairdice/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairdice {

enum class LossMode { FairDice, FairDiceBuggy, PlainBC };

LossMode parse_loss_mode(const std::string& name);
std::string to_string(LossMode mode);

struct TrainConfig {
  HyperParams hp{.alpha = 1.0, .beta = 1.0, .lambda_gp = 1e-4, .gamma = 0.99};
  std::size_t iterations = 10000;
  std::size_t batch_size = 256;
  std::size_t eval_every = 0;  // 0 disables periodic evaluation hooks
  LossMode mode = LossMode::FairDice;
  double lr = 3e-4;
  std::vector<std::size_t> hidden{256, 256};
  nn::Activation activation = nn::Activation::ReLU;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Raised when a loss leaves the finite range; carries where it happened.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t iteration, std::string component)
      : std::runtime_error(what), iteration_(iteration), component_(std::move(component)) {}
  [[nodiscard]] std::size_t iteration() const { return iteration_; }
  [[nodiscard]] const std::string& component() const { return component_; }

 private:
  std::size_t iteration_;
  std::string component_;
};

struct TrainArtifact {
  TrainConfig config;
  std::string env_id;
  std::size_t obs_dim = 0;       // network input width (one-hot width for tabular data)
  std::size_t n_objectives = 0;
  int n_actions = 0;
  NormStats stats;               // reward range and state moments of the training data
  nn::MlpSpec nu_spec;
  nn::MlpSpec policy_spec;
  nn::Vector nu_params;
  nn::Vector policy_params;
  std::vector<double> xi;
  std::vector<double> mu_trace;  // iterations x K, mu used in each critic step
  std::vector<double> critic_loss;
  std::vector<double> penalty;
  std::vector<double> policy_loss;
  std::size_t uniform_fallbacks = 0;
  std::map<std::string, double> summary;  // free-form metric summary kept in the header

  [[nodiscard]] std::vector<double> mu() const;
  [[nodiscard]] nn::Mlp policy() const;
  [[nodiscard]] nn::Mlp critic() const;
};

/// Called every eval_every iterations with the iteration count and the live artifact.
using TrainCallback = std::function<void(std::size_t, const TrainArtifact&)>;

/// Trains on `data`, which is min-max normalized (rewards) and mean-std
/// normalized (observations) internally using its own statistics.
TrainArtifact train(const TransitionDataset& data, const TrainConfig& config,
                    const TrainCallback& callback = {});

/// Network input for raw observations (features x batch) after the
/// artifact's state normalization.
nn::Matrix prepare_observations(const TrainArtifact& artifact, const nn::Matrix& raw);

/// Action probabilities (actions x batch) for raw observations.
nn::Matrix policy_probabilities(const TrainArtifact& artifact, const nn::Matrix& raw);

/// Mean over columns of KL(p || q) for two probability matrices.
double mean_kl(const nn::Matrix& p, const nn::Matrix& q);

/// Gradients of the buggy and the plain-BC policy losses on one minibatch
/// of `data`, for checking that they point the same way.
struct PolicyGradientPair {
  nn::Vector buggy;
  nn::Vector bc;
  [[nodiscard]] double cosine() const;
};
PolicyGradientPair buggy_and_bc_gradients(const TrainArtifact& artifact,
                                          const TransitionDataset& data,
                                          const std::vector<std::size_t>& batch,
                                          const std::vector<double>& w);

// --- evaluation ------------------------------------------------------------

struct EvalReport {
  std::size_t n_objectives = 0;
  std::vector<double> returns;  // rollouts x K, undiscounted
  std::vector<double> nsw;      // per rollout
  std::vector<double> utilitarian;
  std::vector<double> jain;
  std::size_t nonpositive_rollouts = 0;

  [[nodiscard]] std::size_t n_rollouts() const { return nsw.size(); }
  [[nodiscard]] std::vector<double> mean_returns() const;
  [[nodiscard]] double mean_nsw() const;
  [[nodiscard]] double mean_utilitarian() const;
  [[nodiscard]] double mean_jain() const;
};

/// Builds an EvalReport from rollouts x K returns.
EvalReport summarize_returns(std::vector<double> returns, std::size_t k);

enum class ActionSelection { Sample, Greedy };

struct GroupFairEval {
  std::shared_ptr<const Membership> membership;
  GroupFairConfig config;
  std::size_t n_rollouts = 100;
  std::size_t horizon = 500;
  ActionSelection selection = ActionSelection::Sample;
};

/// Rolls out the artifact's policy on GroupFair; rollouts run in lockstep.
EvalReport evaluate_policy_mc(const GroupFairEval& env, const TrainArtifact& artifact, Rng& rng);

/// Same for a scripted reference policy.
EvalReport evaluate_reference_policy(const GroupFairEval& env, ReferencePolicy kind, Rng& rng);

/// Raw observations (features x n) visited by a reference policy, for held-out comparisons.
nn::Matrix sample_groupfair_states(const GroupFairEval& env, ReferencePolicy kind, std::size_t n,
                                   Rng& rng);

// --- artifact files --------------------------------------------------------

/// "FAIRDICE-ARTIFACT 1\n", u64 little-endian header length, JSON header, raw doubles.
void write_artifact(const TrainArtifact& artifact, const std::filesystem::path& path);
TrainArtifact read_artifact(const std::filesystem::path& path);

}  // namespace fairdice
