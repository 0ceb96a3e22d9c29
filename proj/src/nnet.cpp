#include "masksizer/nnet.hpp"

#include <Eigen/SVD>

#include <cmath>

#include "masksizer/errors.hpp"

namespace masksizer {

namespace {

void check_dims(const NetworkDims& d) {
  if (d.n_in < 1 || d.n_hidden < 1 || d.n_out < 1) throw ShapeError("network dimensions must be positive");
}

}  // namespace

void init_params(NetworkParams& params, Rng& rng) {
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index i = 0; i < params.hidden.size(); ++i) params.hidden.data()[i] = rng.uniform(-kInitRange, kInitRange);
  for (Eigen::Index i = 0; i < params.output.size(); ++i) params.output.data()[i] = rng.uniform(-kInitRange, kInitRange);
}

NetworkParams init_params(const NetworkDims& dims, std::uint64_t seed, double drop_prob) {
  check_dims(dims);
  NetworkParams p;
  p.dims = dims;
  p.drop_prob = drop_prob;
  p.init_seed = seed;
  p.hidden.resize(dims.n_in + 1, dims.n_hidden);
  p.output.resize(dims.n_hidden + 1, dims.n_out);
  Rng rng(seed);
  init_params(p, rng);
  return p;
}

DropoutMask DropoutMask::draw(int n_hidden, double drop_prob, Rng& rng) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw ArgumentError("drop probability must lie in [0, 1)");
  DropoutMask m;
  m.drop_prob = drop_prob;
  m.keep.resize(n_hidden);
  for (int j = 0; j < n_hidden; ++j) m.keep[j] = rng.bernoulli(drop_prob) ? 0.0 : 1.0;
  return m;
}

DropoutMask DropoutMask::keep_all(int n_hidden, double drop_prob) {
  DropoutMask m;
  m.drop_prob = drop_prob;
  m.keep = Eigen::VectorXd::Ones(n_hidden);
  return m;
}

ForwardPass forward(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const DropoutMask* mask) {
  const int n_in = params.dims.n_in;
  const int n_hidden = params.dims.n_hidden;
  if (x.size() != n_in) {
    throw ShapeError("input has " + std::to_string(x.size()) + " values, network expects " + std::to_string(n_in));
  }
  if (mask && mask->keep.size() != n_hidden) throw ShapeError("dropout mask length does not match hidden layer");
  ForwardPass pass;
  pass.activation.noalias() = params.hidden.topRows(n_in).transpose() * x;
  pass.activation += params.hidden.row(n_in).transpose();
  pass.activation = pass.activation.array().tanh();
  if (mask) {
    pass.hidden = pass.activation.cwiseProduct(mask->keep);
  } else {
    pass.hidden = pass.activation * (1.0 - params.drop_prob);
  }
  pass.output.noalias() = params.output.topRows(n_hidden).transpose() * pass.hidden;
  pass.output += params.output.row(n_hidden).transpose();
  return pass;
}

Eigen::VectorXd hidden_delta(const NetworkParams& params, const ForwardPass& pass,
                             const Eigen::Ref<const Eigen::VectorXd>& target, const DropoutMask* mask) {
  const int n_hidden = params.dims.n_hidden;
  if (target.size() != params.dims.n_out) throw ShapeError("target length does not match output layer");
  const Eigen::VectorXd out_err = pass.output - target;
  Eigen::VectorXd delta = params.output.topRows(n_hidden) * out_err;
  const Eigen::ArrayXd slope = 1.0 - pass.activation.array().square();
  if (mask) {
    delta = (delta.array() * slope * mask->keep.array()).matrix();
  } else {
    delta = (delta.array() * slope * (1.0 - params.drop_prob)).matrix();
  }
  return delta;
}

Eigen::MatrixXd backprop(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& target, const DropoutMask* mask) {
  const ForwardPass pass = forward(params, x, mask);
  const Eigen::VectorXd delta = hidden_delta(params, pass, target, mask);
  const int n_in = params.dims.n_in;
  Eigen::MatrixXd grad(n_in + 1, params.dims.n_hidden);
  grad.topRows(n_in).noalias() = x * delta.transpose();
  grad.row(n_in) = delta.transpose();
  return grad;
}

double squared_error(const Eigen::VectorXd& output, const Eigen::Ref<const Eigen::VectorXd>& target) {
  return 0.5 * (output - target).squaredNorm();
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a, double tau) {
  if (!a.allFinite()) throw NumericError("pseudo-inverse input contains non-finite values");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sigma.size());
  if (sigma.size() > 0) {
    const double cutoff = tau * sigma[0];
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      if (sigma[i] > cutoff) inv[i] = 1.0 / sigma[i];
    }
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::MatrixXd solve_output_pinv(const Eigen::MatrixXd& hidden_with_bias, const Eigen::MatrixXd& targets,
                                  double tau) {
  if (hidden_with_bias.rows() != targets.rows()) {
    throw ShapeError("activation and target matrices have different row counts");
  }
  if (!targets.allFinite()) throw NumericError("targets contain non-finite values");
  return pseudo_inverse(hidden_with_bias, tau) * targets;
}

void sgd_momentum_step(Eigen::MatrixXd& weights, Eigen::MatrixXd& velocity, const Eigen::MatrixXd& gradient,
                       double alpha, double mu) {
  if (weights.rows() != velocity.rows() || weights.cols() != velocity.cols() || weights.rows() != gradient.rows() ||
      weights.cols() != gradient.cols()) {
    throw ShapeError("momentum step operands differ in shape");
  }
  velocity = mu * velocity - alpha * gradient;
  weights += velocity;
}

void sgd_momentum_step_outer(Eigen::MatrixXd& weights, Eigen::MatrixXd& velocity,
                             const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd& delta, double alpha,
                             double mu) {
  const Eigen::Index n_in = x.size();
  if (weights.rows() != n_in + 1 || weights.cols() != delta.size()) {
    throw ShapeError("momentum step operands differ in shape");
  }
  velocity *= mu;
  velocity.topRows(n_in).noalias() -= (alpha * x) * delta.transpose();
  velocity.row(n_in) -= alpha * delta.transpose();
  weights += velocity;
}

}  // namespace masksizer
