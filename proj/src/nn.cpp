#include "fairdice/nn.hpp"

#include <cmath>
#include <numbers>

namespace fairdice::nn {

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MlpSpec: zero width");
  for (std::size_t w : hidden) {
    if (w == 0) throw std::invalid_argument("MlpSpec: zero hidden width");
  }
  if (head == Head::Scalar && output_dim != 1) {
    throw std::invalid_argument("MlpSpec: scalar head needs output_dim 1");
  }
}

std::size_t MlpSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden[layer - 1];
}

std::size_t MlpSpec::fan_out(std::size_t layer) const {
  return layer == hidden.size() ? output_dim : hidden[layer];
}

Matrix orthogonal_init(std::size_t rows, std::size_t cols, double gain, std::mt19937_64& rng) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("orthogonal_init: empty shape");
  const auto tall = static_cast<Eigen::Index>(std::max(rows, cols));
  const auto flat = static_cast<Eigen::Index>(std::min(rows, cols));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(tall, flat);
  for (Eigen::Index j = 0; j < flat; ++j) {
    for (Eigen::Index i = 0; i < tall; ++i) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(tall, flat);
  const Matrix r = qr.matrixQR().topLeftCorner(flat, flat);
  for (Eigen::Index j = 0; j < flat; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  q *= gain;
  if (rows < cols) return q.transpose();
  return q;
}

// --- Mlp -------------------------------------------------------------------

namespace {

void activate(Activation act, Matrix& z) {
  if (act == Activation::ReLU) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

/// act'(z) expressed through the activation value h = act(z). ReLU'(0) = 0.
Matrix activation_slope(Activation act, const Matrix& h) {
  if (act == Activation::ReLU) return (h.array() > 0.0).cast<double>().matrix();
  return (1.0 - h.array().square()).matrix();
}

/// act''(z) through h; zero almost everywhere for ReLU.
Matrix activation_curvature(Activation act, const Matrix& h) {
  if (act == Activation::ReLU) return Matrix::Zero(h.rows(), h.cols());
  return (-2.0 * h.array() * (1.0 - h.array().square())).matrix();
}

}  // namespace

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec_.n_layers(); ++l) {
    weight_offset_.push_back(offset);
    offset += spec_.fan_in(l) * spec_.fan_out(l);
    bias_offset_.push_back(offset);
    offset += spec_.fan_out(l);
  }
  params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

void Mlp::initialize(std::mt19937_64& rng) {
  for (std::size_t l = 0; l < spec_.n_layers(); ++l) {
    weight_mut(l) = orthogonal_init(spec_.fan_out(l), spec_.fan_in(l), spec_.gain, rng);
    bias_mut(l).setZero();
  }
}

Eigen::Map<const Matrix> Mlp::weight(std::size_t layer) const {
  return {params_.data() + weight_offset_[layer], static_cast<Eigen::Index>(spec_.fan_out(layer)),
          static_cast<Eigen::Index>(spec_.fan_in(layer))};
}

Eigen::Map<const Vector> Mlp::bias(std::size_t layer) const {
  return {params_.data() + bias_offset_[layer], static_cast<Eigen::Index>(spec_.fan_out(layer))};
}

Eigen::Map<Matrix> Mlp::weight_mut(std::size_t layer) { return weight_in(params_, layer); }

Eigen::Map<Vector> Mlp::bias_mut(std::size_t layer) { return bias_in(params_, layer); }

Eigen::Map<Matrix> Mlp::weight_in(Vector& flat, std::size_t layer) const {
  return {flat.data() + weight_offset_[layer], static_cast<Eigen::Index>(spec_.fan_out(layer)),
          static_cast<Eigen::Index>(spec_.fan_in(layer))};
}

Eigen::Map<Vector> Mlp::bias_in(Vector& flat, std::size_t layer) const {
  return {flat.data() + bias_offset_[layer], static_cast<Eigen::Index>(spec_.fan_out(layer))};
}

Matrix Mlp::forward(const Matrix& x, Tape* tape) const {
  if (static_cast<std::size_t>(x.rows()) != spec_.input_dim) {
    throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.rows()) +
                                " rows, expected " + std::to_string(spec_.input_dim));
  }
  const std::size_t n = spec_.n_layers();
  if (tape) {
    tape->pre.resize(n);
    tape->post.resize(n);
    tape->post[0] = x;
  }
  Matrix h = x;
  for (std::size_t l = 0; l < n; ++l) {
    Matrix z = weight(l) * h;
    z.colwise() += bias(l);
    if (!z.allFinite()) {
      throw NumericError("non-finite activation in layer " + std::to_string(l), l);
    }
    if (tape) tape->pre[l] = z;
    if (l + 1 == n) return z;
    activate(spec_.activation, z);
    h = std::move(z);
    if (tape) tape->post[l + 1] = h;
  }
  return h;
}

void Mlp::backward(const Tape& tape, const Matrix& d_out, Vector& grad, Matrix* d_input) const {
  if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
  Matrix g = d_out;
  for (std::size_t l = spec_.n_layers(); l-- > 0;) {
    weight_in(grad, l).noalias() += g * tape.post[l].transpose();
    bias_in(grad, l) += g.rowwise().sum();
    if (l > 0) {
      Matrix dh = weight(l).transpose() * g;
      g = dh.cwiseProduct(activation_slope(spec_.activation, tape.post[l]));
    } else if (d_input) {
      *d_input = weight(0).transpose() * g;
    }
  }
}

Matrix Mlp::input_gradient(const Tape& tape, InputGradTape* grad_tape) const {
  if (spec_.output_dim != 1) throw std::logic_error("input_gradient needs a scalar head");
  const std::size_t n = spec_.n_layers();
  const Eigen::Index batch = tape.post[0].cols();
  InputGradTape local;
  InputGradTape& gt = grad_tape ? *grad_tape : local;
  gt.delta.assign(n, Matrix());
  gt.delta_h.assign(n, Matrix());
  gt.delta[n - 1] = Matrix::Ones(1, batch);
  for (std::size_t l = n; l-- > 0;) {
    gt.delta_h[l] = weight(l).transpose() * gt.delta[l];
    if (l > 0) {
      gt.delta[l - 1] =
          gt.delta_h[l].cwiseProduct(activation_slope(spec_.activation, tape.post[l]));
    }
  }
  return gt.delta_h[0];
}

void Mlp::input_gradient_backward(const Tape& tape, const InputGradTape& gt,
                                  const Matrix& d_input_grad, Vector& grad) const {
  if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
  const std::size_t n = spec_.n_layers();
  const bool curved = spec_.activation != Activation::ReLU;
  std::vector<Matrix> adj_z(n);

  // Reverse of the input-gradient recursion, walking from the input upward.
  Matrix adj_dh = d_input_grad;
  for (std::size_t l = 0; l < n; ++l) {
    weight_in(grad, l).noalias() += gt.delta[l] * adj_dh.transpose();
    if (l + 1 == n) break;
    Matrix adj_delta = weight(l) * adj_dh;
    const Matrix& h = tape.post[l + 1];
    if (curved) {
      adj_z[l] = adj_delta.cwiseProduct(gt.delta_h[l + 1])
                     .cwiseProduct(activation_curvature(spec_.activation, h));
    }
    adj_dh = adj_delta.cwiseProduct(activation_slope(spec_.activation, h));
  }
  if (!curved) return;

  // The slopes depend on z_l, so push those adjoints through the forward graph.
  Matrix carry;
  for (std::size_t l = n - 1; l-- > 0;) {
    Matrix a = adj_z[l];
    if (carry.size() > 0) {
      a += (weight(l + 1).transpose() * carry)
               .cwiseProduct(activation_slope(spec_.activation, tape.post[l + 1]));
    }
    weight_in(grad, l).noalias() += a * tape.post[l].transpose();
    bias_in(grad, l) += a.rowwise().sum();
    carry = std::move(a);
  }
}

LossAndGrad forward_backward(const Mlp& net, const Matrix& input, const LossHead& head) {
  Mlp::Tape tape;
  const Matrix out = net.forward(input, &tape);
  auto [loss, d_out] = head(out);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss", net.spec().n_layers());
  LossAndGrad result;
  result.loss = loss;
  result.gradient = Vector::Zero(static_cast<Eigen::Index>(net.n_params()));
  net.backward(tape, d_out, result.gradient);
  return result;
}

// --- categorical -----------------------------------------------------------

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    const double lse = m + std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

std::vector<double> gather_log_probs(const Matrix& log_probs, const std::vector<int>& actions) {
  if (static_cast<Eigen::Index>(actions.size()) != log_probs.cols()) {
    throw std::invalid_argument("gather_log_probs: batch mismatch");
  }
  std::vector<double> out(actions.size());
  for (std::size_t j = 0; j < actions.size(); ++j) {
    out[j] = log_probs(actions[j], static_cast<Eigen::Index>(j));
  }
  return out;
}

Matrix log_prob_backward(const Matrix& log_probs, const std::vector<int>& actions,
                         const std::vector<double>& d_log_prob) {
  // d log pi_a / d logit_k = [k == a] - pi_k.
  Matrix d = -(log_probs.array().exp()).matrix();
  for (std::size_t j = 0; j < actions.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    d(actions[j], col) += 1.0;
    d.col(col) *= d_log_prob[j];
  }
  return d;
}

// --- Adam ------------------------------------------------------------------

Adam::Adam(AdamConfig config, std::size_t n_params)
    : config_(config),
      m_(Vector::Zero(static_cast<Eigen::Index>(n_params))),
      v_(Vector::Zero(static_cast<Eigen::Index>(n_params))) {
  if (config_.schedule == Schedule::CosineToZero && config_.total_steps == 0) {
    throw std::invalid_argument("Adam: cosine schedule needs total_steps");
  }
}

double Adam::lr_at(std::size_t step) const {
  if (config_.schedule == Schedule::Constant) return config_.lr;
  const double t = static_cast<double>(std::min(step, config_.total_steps)) /
                   static_cast<double>(config_.total_steps);
  return config_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void Adam::step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: shape mismatch");
  }
  if (!grads.allFinite()) throw std::domain_error("Adam::step: non-finite gradient");
  const double lr = lr_at(step_);
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grads;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grads.cwiseAbs2();
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
}

}  // namespace fairdice::nn
