#pragma once

// Small reverse-mode engine for fixed-topology MLPs: forward with a tape,
// parameter backward, input gradients for scalar heads and the second pass
// needed to differentiate a penalty on those input gradients. Samples are
// stored column-wise (features x batch).

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fairdice::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { ReLU, Tanh };
enum class Head { Categorical, Scalar };

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 1;
  Activation activation = Activation::ReLU;
  Head head = Head::Scalar;
  double gain = 1.4142135623730951;

  void validate() const;
  [[nodiscard]] std::size_t n_layers() const { return hidden.size() + 1; }
  [[nodiscard]] std::size_t fan_in(std::size_t layer) const;
  [[nodiscard]] std::size_t fan_out(std::size_t layer) const;
};

/// Non-finite value detected in a forward pass or loss. layer() is the
/// index of the affine layer whose output went bad; n_layers() means the loss head.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t layer)
      : std::runtime_error(what), layer_(layer) {}
  [[nodiscard]] std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

/// Orthogonal matrix scaled by gain (Saxe et al. style, sign-corrected QR).
Matrix orthogonal_init(std::size_t rows, std::size_t cols, double gain, std::mt19937_64& rng);

class Mlp {
 public:
  struct Tape {
    std::vector<Matrix> pre;   // z_l, l = 0..L-1
    std::vector<Matrix> post;  // h_l = act(z_l) for hidden layers; post[0] is the input
  };
  struct InputGradTape {
    std::vector<Matrix> delta;    // d out / d z_l for hidden layers
    std::vector<Matrix> delta_h;  // d out / d h_l, delta_h[0] is the input gradient
  };

  explicit Mlp(MlpSpec spec);

  /// Orthogonal weights, zero biases.
  void initialize(std::mt19937_64& rng);

  [[nodiscard]] const MlpSpec& spec() const { return spec_; }
  [[nodiscard]] std::size_t n_params() const { return static_cast<std::size_t>(params_.size()); }
  [[nodiscard]] Vector& params() { return params_; }
  [[nodiscard]] const Vector& params() const { return params_; }

  [[nodiscard]] Eigen::Map<const Matrix> weight(std::size_t layer) const;
  [[nodiscard]] Eigen::Map<const Vector> bias(std::size_t layer) const;

  /// x is input_dim x B. Returns output_dim x B.
  Matrix forward(const Matrix& x, Tape* tape = nullptr) const;

  /// Accumulates dLoss/dparams into grad given dLoss/doutput. Optionally
  /// returns dLoss/dinput.
  void backward(const Tape& tape, const Matrix& d_out, Vector& grad,
                Matrix* d_input = nullptr) const;

  /// d out / d x per sample for a scalar head; input_dim x B.
  Matrix input_gradient(const Tape& tape, InputGradTape* grad_tape = nullptr) const;

  /// Accumulates d/dparams of sum(d_input_grad .* input_gradient).
  void input_gradient_backward(const Tape& tape, const InputGradTape& grad_tape,
                               const Matrix& d_input_grad, Vector& grad) const;

 private:
  [[nodiscard]] Eigen::Map<Matrix> weight_mut(std::size_t layer);
  [[nodiscard]] Eigen::Map<Vector> bias_mut(std::size_t layer);
  [[nodiscard]] Eigen::Map<Matrix> weight_in(Vector& flat, std::size_t layer) const;
  [[nodiscard]] Eigen::Map<Vector> bias_in(Vector& flat, std::size_t layer) const;

  MlpSpec spec_;
  Vector params_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
};

/// Loss head: receives network outputs, returns (loss, dLoss/doutputs).
using LossHead = std::function<std::pair<double, Matrix>(const Matrix&)>;

struct LossAndGrad {
  double loss = 0.0;
  Vector gradient;
};

/// One forward/backward pass of `net` on `input` under `head`.
LossAndGrad forward_backward(const Mlp& net, const Matrix& input, const LossHead& head);

// --- categorical head helpers ---------------------------------------------

/// Column-wise log-softmax.
Matrix log_softmax(const Matrix& logits);
/// log pi(a_b | s_b) for each column b.
std::vector<double> gather_log_probs(const Matrix& log_probs, const std::vector<int>& actions);
/// dLoss/dlogits given dLoss/dlog pi(a_b|s_b).
Matrix log_prob_backward(const Matrix& log_probs, const std::vector<int>& actions,
                         const std::vector<double>& d_log_prob);

// --- Adam ------------------------------------------------------------------

enum class Schedule { Constant, CosineToZero };

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Schedule schedule = Schedule::Constant;
  std::size_t total_steps = 0;  // cosine horizon
};

class Adam {
 public:
  Adam(AdamConfig config, std::size_t n_params);

  /// In-place update. Throws std::domain_error on non-finite gradients.
  void step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads);

  [[nodiscard]] double lr_at(std::size_t step) const;
  [[nodiscard]] std::size_t steps() const { return step_; }
  [[nodiscard]] const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  Vector m_;
  Vector v_;
};

}  // namespace fairdice::nn
