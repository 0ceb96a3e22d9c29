#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>

#include "masksizer/rng.hpp"

namespace masksizer {

struct NetworkDims {
  int n_in = 30000;
  int n_hidden = 40;
  int n_out = 4;
  friend bool operator==(const NetworkDims&, const NetworkDims&) = default;
};

/// Three-layer network: tanh hidden layer, linear output layer, both fed a
/// bias unit. Weight matrices store the bias as their last row, so
/// hidden is (n_in + 1) x n_hidden and output is (n_hidden + 1) x n_out.
struct NetworkParams {
  NetworkDims dims;
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd output;
  double drop_prob = 0.0;  // used to scale hidden activations at inference
  std::uint64_t init_seed = 0;
};

inline constexpr double kInitRange = 0.05;

/// Every weight uniform on [-0.05, 0.05] from the seeded generator.
NetworkParams init_params(const NetworkDims& dims, std::uint64_t seed, double drop_prob = 0.0);
void init_params(NetworkParams& params, Rng& rng);

struct DropoutMask {
  Eigen::VectorXd keep;  // 1.0 kept, 0.0 dropped
  double drop_prob = 0.0;

  static DropoutMask draw(int n_hidden, double drop_prob, Rng& rng);
  static DropoutMask keep_all(int n_hidden, double drop_prob = 0.0);
};

struct ForwardPass {
  Eigen::VectorXd activation;  // tanh of the hidden pre-activations
  Eigen::VectorXd hidden;      // activation after masking or inference scaling
  Eigen::VectorXd output;
};

/// With a mask, dropped units are zeroed and kept units pass unscaled. With
/// no mask, activations are multiplied by (1 - params.drop_prob).
ForwardPass forward(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const DropoutMask* mask = nullptr);

/// Backpropagated error signal at the hidden pre-activations for
/// E = 1/2 ||output - target||^2. Zero for dropped units.
Eigen::VectorXd hidden_delta(const NetworkParams& params, const ForwardPass& pass,
                             const Eigen::Ref<const Eigen::VectorXd>& target, const DropoutMask* mask);

/// Gradient of 1/2 ||output - target||^2 with respect to the hidden weights,
/// shaped like params.hidden.
Eigen::MatrixXd backprop(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& target, const DropoutMask* mask);

double squared_error(const Eigen::VectorXd& output, const Eigen::Ref<const Eigen::VectorXd>& target);

/// Moore-Penrose pseudo-inverse by SVD; singular values at or below
/// tau * sigma_max are treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a, double tau = 1e-10);

/// Minimum-norm least-squares output weights: pinv(H) * T.
Eigen::MatrixXd solve_output_pinv(const Eigen::MatrixXd& hidden_with_bias, const Eigen::MatrixXd& targets,
                                  double tau = 1e-10);

/// Inference-mode hidden activations for every row of `inputs`, with a
/// trailing bias column of ones. Rows x (n_hidden + 1).
template <typename Derived>
Eigen::MatrixXd hidden_activations(const NetworkParams& params, const Eigen::MatrixBase<Derived>& inputs) {
  const int n_in = params.dims.n_in;
  const int n_hidden = params.dims.n_hidden;
  Eigen::MatrixXd h(inputs.rows(), n_hidden + 1);
  h.leftCols(n_hidden).noalias() = inputs * params.hidden.topRows(n_in);
  h.leftCols(n_hidden).rowwise() += params.hidden.row(n_in);
  h.leftCols(n_hidden) = h.leftCols(n_hidden).array().tanh() * (1.0 - params.drop_prob);
  h.col(n_hidden).setOnes();
  return h;
}

/// velocity' = mu * velocity - alpha * gradient; weights' = weights + velocity'.
void sgd_momentum_step(Eigen::MatrixXd& weights, Eigen::MatrixXd& velocity, const Eigen::MatrixXd& gradient,
                       double alpha, double mu);

/// Same update for a rank-one gradient [x; 1] * delta^T, without forming it.
void sgd_momentum_step_outer(Eigen::MatrixXd& weights, Eigen::MatrixXd& velocity,
                             const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd& delta, double alpha,
                             double mu);

}  // namespace masksizer
