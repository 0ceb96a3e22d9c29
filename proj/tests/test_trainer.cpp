#include <doctest.h>

#include <cmath>

#include "masksizer/errors.hpp"
#include "masksizer/rng.hpp"
#include "masksizer/trainer.hpp"

using namespace masksizer;

namespace {

DesignMatrix random_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  DesignMatrix m;
  m.inputs.resize(rows, cols);
  m.targets.resize(rows, 4);
  for (Eigen::Index i = 0; i < m.inputs.size(); ++i) m.inputs.data()[i] = rng.uniform(-0.5, 0.5);
  for (Eigen::Index i = 0; i < m.targets.size(); ++i) m.targets.data()[i] = rng.uniform(-0.3, 0.3);
  for (int r = 0; r < rows; ++r) m.ids.push_back("r" + std::to_string(r));
  return m;
}

TrainConfig small_config() {
  TrainConfig c;
  c.n_hidden = 6;
  c.max_epochs = 25;
  c.patience = 25;
  c.repetitions = 1;
  c.alpha0 = 0.05;
  c.crop_w = 4;
  c.crop_h = 3;
  return c;
}

/// Prepared samples from a 4x3 crop whose bright column tracks the target.
PreparedSet toy_prepared(int n, std::uint64_t seed) {
  Rng rng(seed);
  PreparedSet set;
  set.crop_w = 4;
  set.crop_h = 3;
  for (int i = 0; i < n; ++i) {
    PreparedSample s;
    s.id = "s" + std::to_string(i);
    s.pixels.resize(12);
    for (int k = 0; k < 12; ++k) s.pixels[k] = 20.0 + rng.below(200);
    const double lx = 0.5 + rng.uniform(0.0, 1.5);
    s.target = {lx, 1.5, lx + 2.0, 1.5};
    s.pixels[static_cast<int>(lx)] = 250.0;
    set.samples.push_back(s);
  }
  return set;
}

}  // namespace

TEST_CASE("linear targets are fitted") {
  // Targets are an exact linear function of the first four features.
  DesignMatrix m = random_matrix(6, 10, 3);
  Eigen::MatrixXd a(4, 4);
  a << 0.2, -0.1, 0.05, 0.3, 0.1, 0.1, -0.2, 0.0, -0.05, 0.2, 0.1, 0.1, 0.3, 0.0, 0.0, -0.1;
  m.targets = m.inputs.leftCols(4) * a;
  TrainConfig c = small_config();
  c.max_epochs = 50;
  TrainTrace trace;
  const NetworkParams p = train_once(m, c, 1, &trace);
  CHECK(training_sse(p, m) <= 1e-6);
  CHECK(trace.epochs_run <= 50);
}

TEST_CASE("same seed gives bit-identical parameters") {
  const DesignMatrix m = random_matrix(15, 12, 4);
  const TrainConfig c = small_config();
  const NetworkParams a = train_once(m, c, 7);
  const NetworkParams b = train_once(m, c, 7);
  CHECK(a.hidden == b.hidden);
  CHECK(a.output == b.output);
  CHECK(train_once(m, c, 8).hidden != a.hidden);
}

TEST_CASE("learning rate decays by repeated multiplication per improvement") {
  const DesignMatrix m = random_matrix(30, 12, 5);
  TrainConfig c = small_config();
  c.alpha0 = 0.002;
  c.max_epochs = 40;
  TrainTrace trace;
  train_once(m, c, 3, &trace);
  REQUIRE(trace.alpha.size() == static_cast<std::size_t>(trace.epochs_run));
  int k = 0;
  double expected = 0.002;
  double best = trace.initial_sse;
  double prev_alpha = 0.002;
  for (std::size_t e = 0; e < trace.alpha.size(); ++e) {
    if (trace.epoch_sse[e] < best) {
      best = trace.epoch_sse[e];
      expected *= 0.95;
      ++k;
    }
    CHECK(trace.alpha[e] == expected);
    CHECK(trace.alpha[e] <= prev_alpha);
    prev_alpha = trace.alpha[e];
  }
  CHECK(k == trace.improvements);
  CHECK(trace.best_sse == best);
}

TEST_CASE("best parameters are returned") {
  const DesignMatrix m = random_matrix(20, 8, 6);
  TrainTrace trace;
  const NetworkParams p = train_once(m, small_config(), 2, &trace);
  CHECK(training_sse(p, m) == doctest::Approx(trace.best_sse).epsilon(1e-12));
  for (double s : trace.epoch_sse) CHECK(trace.best_sse <= s);
}

TEST_CASE("patience stops training") {
  const DesignMatrix m = random_matrix(20, 8, 6);
  TrainConfig c = small_config();
  c.max_epochs = 200;
  c.patience = 3;
  TrainTrace trace;
  train_once(m, c, 2, &trace);
  CHECK(trace.epochs_run < 200);
  CHECK(trace.epochs_run - trace.best_epoch == 3);
}

TEST_CASE("deferred momentum updates equal the dense path") {
  const DesignMatrix m = random_matrix(25, 30, 9);
  TrainConfig c = small_config();
  c.max_epochs = 8;
  c.sparse_updates = true;
  TrainTrace ts, td;
  const NetworkParams sparse = train_once(m, c, 4, &ts);
  c.sparse_updates = false;
  const NetworkParams dense = train_once(m, c, 4, &td);
  CHECK(sparse.hidden.isApprox(dense.hidden, 1e-10));
  CHECK(ts.improvements == td.improvements);
  for (std::size_t e = 0; e < ts.epoch_sse.size(); ++e) {
    CHECK(ts.epoch_sse[e] == doctest::Approx(td.epoch_sse[e]).epsilon(1e-9));
  }
}

TEST_CASE("mini-batches train") {
  const DesignMatrix m = random_matrix(20, 8, 10);
  TrainConfig c = small_config();
  c.batch_size = 5;
  TrainTrace trace;
  const NetworkParams p = train_once(m, c, 1, &trace);
  CHECK(std::isfinite(training_sse(p, m)));
  CHECK(trace.best_sse <= trace.initial_sse);
}

TEST_CASE("non-finite input is a training error") {
  DesignMatrix m = random_matrix(5, 4, 11);
  m.inputs(2, 1) = std::nan("");
  CHECK_THROWS_AS(train_once(m, small_config(), 1), TrainingError);
}

TEST_CASE("invalid configuration") {
  TrainConfig c;
  c.drop_prob = 1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  CHECK_THROWS_AS(config_from_json({{"stats_mode", "weird"}}), ArgumentError);
  const TrainConfig d;
  const TrainConfig e = config_from_json(config_to_json(d));
  CHECK(config_to_json(e) == config_to_json(d));
}

TEST_CASE("leave-one-out structure") {
  const PreparedSet set = toy_prepared(6, 1);
  TrainConfig c = small_config();
  c.repetitions = 2;
  const auto folds = loocv(set, c);
  REQUIRE(folds.size() == 6);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    CHECK(folds[i].sample_id == set.samples[i].id);
    CHECK(folds[i].reps.size() == 2);
    // Independent rebuild of the fold's training matrix.
    std::vector<const PreparedSample*> train;
    for (std::size_t j = 0; j < set.samples.size(); ++j) {
      if (j != i) train.push_back(&set.samples[j]);
    }
    const DesignMatrix m = assemble_design_matrix(train, compute_norm_stats(train), 4, 3);
    CHECK(folds[i].train_checksum == m.checksum());
    CHECK(std::find(m.ids.begin(), m.ids.end(), set.samples[i].id) == m.ids.end());
    for (int k = 0; k < 4; ++k) {
      CHECK(folds[i].mean[k] == doctest::Approx((folds[i].reps[0][k] + folds[i].reps[1][k]) / 2).epsilon(1e-12));
    }
  }
}

TEST_CASE("leave-one-out repetition seeds") {
  const PreparedSet set = toy_prepared(4, 2);
  TrainConfig c = small_config();
  c.repetitions = 3;
  c.base_seed = 10;
  const auto folds = loocv(set, c);
  // Fold 2, repetition 1 uses base + 2*3 + 1.
  auto [m, stats] = fold_design_matrix(set, 2, c.stats_mode);
  const NetworkParams p = train_once(m, c, 10 + 2 * 3 + 1);
  const auto pred = predict_targets(p, stats, set.samples[2].pixels);
  for (int k = 0; k < 4; ++k) CHECK(folds[2].reps[1][k] == pred[k]);
}

TEST_CASE("single repetition mean is the repetition") {
  const PreparedSet set = toy_prepared(4, 3);
  const auto folds = loocv(set, small_config());
  for (const auto& f : folds) CHECK(f.mean == f.reps[0]);
}

TEST_CASE("threaded leave-one-out matches serial") {
  const PreparedSet set = toy_prepared(7, 4);
  const TrainConfig c = small_config();
  LoocvOptions opts;
  opts.threads = 3;
  CHECK(folds_to_jsonl(loocv(set, c, opts)) == folds_to_jsonl(loocv(set, c)));
}

TEST_CASE("global statistics use every sample") {
  const PreparedSet set = toy_prepared(5, 5);
  auto [m, stats] = fold_design_matrix(set, 1, StatsMode::global);
  std::vector<const PreparedSample*> all;
  for (const auto& s : set.samples) all.push_back(&s);
  const NormStats g = compute_norm_stats(all);
  CHECK(stats.x_mean == g.x_mean);
  CHECK(stats.y_mean == g.y_mean);
  CHECK(m.rows() == 4);
}

TEST_CASE("leave-one-out needs two samples") {
  CHECK_THROWS_AS(loocv(toy_prepared(1, 1), small_config()), ArgumentError);
}

TEST_CASE("fold records round trip through json lines") {
  const PreparedSet set = toy_prepared(4, 6);
  const auto folds = loocv(set, small_config());
  const std::string text = folds_to_jsonl(folds);
  std::vector<FoldResult> back;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    back.push_back(fold_from_json(nlohmann::json::parse(text.substr(pos, nl - pos))));
    pos = nl + 1;
  }
  CHECK(folds_to_jsonl(back) == text);
  CHECK(back[1].mean == folds[1].mean);
}

TEST_CASE("memorized sample is predicted back") {
  GrayImage img(4, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) img.at(x, y) = static_cast<std::uint8_t>(30 + 40 * x + 10 * y);
  }
  PreparedSet set;
  set.crop_w = 4;
  set.crop_h = 3;
  PreparedSample s;
  s.id = "only";
  s.pixels.resize(12);
  for (int k = 0; k < 12; ++k) s.pixels[k] = img.pixels()[static_cast<std::size_t>(k)];
  s.target = {0.8, 1.2, 3.1, 1.4};
  set.samples.push_back(s);
  const LandmarkModel model = train_model(set, small_config(), 5);
  const Landmarks l = predict_landmarks(model.params, model.stats, img);
  CHECK(std::abs(l.left.x - 0.8) <= 0.5);
  CHECK(std::abs(l.left.y - 1.2) <= 0.5);
  CHECK(std::abs(l.right.x - 3.1) <= 0.5);
  CHECK(std::abs(l.right.y - 1.4) <= 0.5);
}

TEST_CASE("zero hidden weights predict the denormalized output bias") {
  NetworkParams p;
  p.dims = {12, 3, 4};
  p.drop_prob = 0.7;
  p.hidden = Eigen::MatrixXd::Zero(13, 3);
  p.output = Eigen::MatrixXd::Zero(4, 4);
  p.output.row(3) << 0.1, -0.1, 0.2, 0.0;
  NormStats st{200.0, 0.4, 50.0, 0.3};
  const Landmarks l = predict_landmarks(p, st, GrayImage(4, 3));
  CHECK(l.left.x == doctest::Approx((0.1 + 0.3) * 50.0));
  CHECK(l.left.y == doctest::Approx((-0.1 + 0.3) * 50.0));
  CHECK(l.right.x == doctest::Approx((0.2 + 0.3) * 50.0));
  CHECK(l.right.y == doctest::Approx(0.3 * 50.0));
}

TEST_CASE("prediction rejects a crop of the wrong size") {
  NetworkParams p = init_params({12, 3, 4}, 1);
  CHECK_THROWS_AS(predict_landmarks(p, NormStats{}, GrayImage(5, 3)), ShapeError);
  CHECK(predict_landmarks(p, NormStats{}, GrayImage(4, 3)).left == predict_landmarks(p, NormStats{}, GrayImage(4, 3)).left);
}
