#include <doctest.h>

#include <cmath>

#include "masksizer/nnet.hpp"
#include "masksizer/rng.hpp"
#include "oracles.hpp"

using namespace masksizer;

namespace {

NetworkParams random_net(Rng& rng, int n_in, int n_h, int n_out, double drop) {
  NetworkParams p;
  p.dims = {n_in, n_h, n_out};
  p.drop_prob = drop;
  p.hidden.resize(n_in + 1, n_h);
  p.output.resize(n_h + 1, n_out);
  for (Eigen::Index i = 0; i < p.hidden.size(); ++i) p.hidden.data()[i] = rng.uniform(-1.0, 1.0);
  for (Eigen::Index i = 0; i < p.output.size(); ++i) p.output.data()[i] = rng.uniform(-1.0, 1.0);
  return p;
}

Eigen::VectorXd random_vec(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("initial weights lie in the init range and follow the seed") {
  const NetworkParams a = init_params({50, 40, 4}, 9, 0.7);
  CHECK(a.hidden.rows() == 51);
  CHECK(a.hidden.cols() == 40);
  CHECK(a.output.rows() == 41);
  CHECK(a.output.cols() == 4);
  CHECK(a.hidden.cwiseAbs().maxCoeff() <= kInitRange);
  CHECK(a.output.cwiseAbs().maxCoeff() <= kInitRange);
  CHECK(a.drop_prob == 0.7);
  const NetworkParams b = init_params({50, 40, 4}, 9, 0.7);
  CHECK(a.hidden == b.hidden);
  CHECK(a.output == b.output);
  CHECK(init_params({50, 40, 4}, 10).hidden != a.hidden);
}

TEST_CASE("hand evaluated one unit network") {
  NetworkParams p;
  p.dims = {1, 1, 1};
  p.hidden = Eigen::MatrixXd{{1.0}, {0.0}};
  p.output = Eigen::MatrixXd{{2.0}, {0.0}};
  const ForwardPass f = forward(p, Eigen::VectorXd::Constant(1, 0.5));
  CHECK(f.output[0] == doctest::Approx(2.0 * std::tanh(0.5)).epsilon(1e-15));
  CHECK(f.output[0] == doctest::Approx(0.92423).epsilon(1e-5));
}

TEST_CASE("zero weights give the output bias") {
  NetworkParams p;
  p.dims = {3, 2, 4};
  p.hidden = Eigen::MatrixXd::Zero(4, 2);
  p.output = Eigen::MatrixXd::Zero(3, 4);
  p.output.row(2) << 0.1, -0.2, 0.3, 0.4;
  const ForwardPass f = forward(p, Eigen::Vector3d(5, -2, 1));
  CHECK(f.hidden.isZero());
  CHECK(f.output == p.output.row(2).transpose());
}

TEST_CASE("dropping every unit leaves only the output bias") {
  Rng rng(1);
  const NetworkParams p = random_net(rng, 4, 5, 3, 0.7);
  DropoutMask m = DropoutMask::keep_all(5, 0.7);
  m.keep.setZero();
  const ForwardPass f = forward(p, random_vec(rng, 4), &m);
  CHECK(f.output.isApprox(p.output.row(5).transpose()));
}

TEST_CASE("inference scales activations, training masks without scaling") {
  Rng rng(2);
  const NetworkParams p = random_net(rng, 3, 6, 2, 0.7);
  const Eigen::VectorXd x = random_vec(rng, 3);
  const ForwardPass inf = forward(p, x);
  CHECK(inf.hidden.isApprox(inf.activation * 0.3));
  DropoutMask m = DropoutMask::keep_all(6, 0.7);
  m.keep << 1, 0, 1, 0, 0, 1;
  const ForwardPass tr = forward(p, x, &m);
  CHECK(tr.hidden.isApprox(tr.activation.cwiseProduct(m.keep)));
}

TEST_CASE("dropout expectation matches inference scaling") {
  Rng rng(4);
  const NetworkParams p = random_net(rng, 3, 8, 2, 0.7);
  const Eigen::VectorXd x = random_vec(rng, 3);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(8);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) {
    const DropoutMask m = DropoutMask::draw(8, 0.7, rng);
    sum += forward(p, x, &m).hidden;
  }
  const Eigen::VectorXd expected = forward(p, x).hidden;
  // Standard error of a kept fraction over 40000 draws is about 0.0023.
  for (int j = 0; j < 8; ++j) CHECK(sum[j] / draws == doctest::Approx(expected[j]).epsilon(0.03).scale(0.05));
}

TEST_CASE("mask draw frequency") {
  Rng rng(8);
  double kept = 0;
  for (int i = 0; i < 2000; ++i) kept += DropoutMask::draw(40, 0.7, rng).keep.sum();
  CHECK(kept / (2000.0 * 40.0) == doctest::Approx(0.3).epsilon(0.02));
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n_in = 1 + static_cast<int>(rng.below(8));
    const int n_h = 1 + static_cast<int>(rng.below(5));
    const int n_out = 1 + static_cast<int>(rng.below(3));
    const NetworkParams p = random_net(rng, n_in, n_h, n_out, 0.5);
    const Eigen::VectorXd x = random_vec(rng, n_in);
    const Eigen::VectorXd t = random_vec(rng, n_out);
    const Eigen::MatrixXd g = backprop(p, x, t, nullptr);
    CHECK(oracle::max_relative_error(g, oracle::numeric_gradient(p, x, t, nullptr)) <= 1e-5);

    const DropoutMask m = DropoutMask::draw(n_h, 0.5, rng);
    const Eigen::MatrixXd gm = backprop(p, x, t, &m);
    CHECK(oracle::max_relative_error(gm, oracle::numeric_gradient(p, x, t, &m.keep)) <= 1e-5);
    for (int j = 0; j < n_h; ++j) {
      if (m.keep[j] == 0.0) CHECK(gm.col(j).isZero());
    }
  }
}

TEST_CASE("zero error gives zero gradient") {
  Rng rng(12);
  const NetworkParams p = random_net(rng, 4, 3, 2, 0.0);
  const Eigen::VectorXd x = random_vec(rng, 4);
  const Eigen::VectorXd t = forward(p, x).output;
  CHECK(backprop(p, x, t, nullptr).isZero());
  CHECK(squared_error(forward(p, x).output, t) == 0.0);
}

TEST_CASE("pseudo-inverse of a full rank matrix") {
  const Eigen::MatrixXd a = oracle::random_rank(12, 5, 5, 3);
  const Eigen::MatrixXd pinv = pseudo_inverse(a);
  CHECK((pinv * a).isApprox(Eigen::MatrixXd::Identity(5, 5), 1e-10));
  CHECK((a * pinv * a).isApprox(a, 1e-10));
}

TEST_CASE("duplicated column solves like the reduced system") {
  const Eigen::MatrixXd base = oracle::random_rank(20, 4, 4, 7);
  const Eigen::MatrixXd t = oracle::random_rank(20, 3, 3, 8);
  Eigen::MatrixXd dup(20, 5);
  dup << base, base.col(1);
  const Eigen::MatrixXd w = solve_output_pinv(dup, t);
  const Eigen::MatrixXd reduced = oracle::ridge_solve(base, t, 0.0);
  const double r_dup = (dup * w - t).norm();
  const double r_red = (base * reduced - t).norm();
  CHECK(r_dup == doctest::Approx(r_red).epsilon(1e-9));
  // Minimum norm splits the weight of the duplicated column evenly.
  for (int k = 0; k < 3; ++k) {
    CHECK(w(1, k) == doctest::Approx(w(4, k)).epsilon(1e-9));
    CHECK(w(1, k) + w(4, k) == doctest::Approx(reduced(1, k)).epsilon(1e-8));
  }
}

TEST_CASE("pseudo-inverse satisfies the normal equations on rank deficient input") {
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const Eigen::MatrixXd h = oracle::random_rank(30, 10, 1 + seed % 9, seed);
    const Eigen::MatrixXd t = oracle::random_rank(30, 4, 4, seed + 100);
    const Eigen::MatrixXd w = solve_output_pinv(h, t);
    CHECK((h.transpose() * (h * w - t)).norm() <= 1e-6 * h.norm() * t.norm());
    CHECK(w.norm() <= oracle::ridge_solve(h, t).norm() * (1 + 1e-4));
  }
}

TEST_CASE("hidden activations match forward") {
  Rng rng(13);
  const NetworkParams p = random_net(rng, 5, 4, 2, 0.7);
  Eigen::MatrixXd inputs(3, 5);
  for (int r = 0; r < 3; ++r) inputs.row(r) = random_vec(rng, 5).transpose();
  const Eigen::MatrixXd h = hidden_activations(p, inputs);
  for (int r = 0; r < 3; ++r) {
    const ForwardPass f = forward(p, inputs.row(r).transpose());
    CHECK(h.row(r).head(4).transpose().isApprox(f.hidden));
    CHECK(h(r, 4) == 1.0);
    CHECK((h.row(r) * p.output).transpose().isApprox(f.output));
  }
}

TEST_CASE("momentum recursion by hand") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(1, 1);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(1, 1);
  sgd_momentum_step(w, v, g, 0.002, 0.95);
  CHECK(v(0, 0) == doctest::Approx(-0.002));
  sgd_momentum_step(w, v, g, 0.002, 0.95);
  CHECK(v(0, 0) == doctest::Approx(-0.0039).epsilon(1e-12));
  CHECK(w(0, 0) == doctest::Approx(-0.0059).epsilon(1e-12));
}

TEST_CASE("outer product step equals the dense step") {
  Rng rng(14);
  Eigen::MatrixXd w1 = Eigen::MatrixXd::Random(6, 3);
  Eigen::MatrixXd v1 = Eigen::MatrixXd::Random(6, 3);
  Eigen::MatrixXd w2 = w1;
  Eigen::MatrixXd v2 = v1;
  const Eigen::VectorXd x = random_vec(rng, 5);
  const Eigen::VectorXd d = random_vec(rng, 3);
  Eigen::VectorXd xb(6);
  xb << x, 1.0;
  sgd_momentum_step(w1, v1, xb * d.transpose(), 0.01, 0.9);
  sgd_momentum_step_outer(w2, v2, x, d, 0.01, 0.9);
  CHECK(w1.isApprox(w2, 1e-14));
  CHECK(v1.isApprox(v2, 1e-14));
}
