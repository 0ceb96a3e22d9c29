#include "masksizer/trainer.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "masksizer/errors.hpp"
#include "masksizer/rng.hpp"

namespace masksizer {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(alpha0 > 0.0)) throw ArgumentError("alpha0 must be > 0");
  if (!(alpha_decay > 0.0 && alpha_decay <= 1.0)) throw ArgumentError("alpha_decay must lie in (0, 1]");
  if (!(mu >= 0.0 && mu < 1.0)) throw ArgumentError("mu must lie in [0, 1)");
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw ArgumentError("drop_prob must lie in [0, 1)");
  if (n_hidden < 1) throw ArgumentError("n_hidden must be >= 1");
  if (max_epochs < 1) throw ArgumentError("max_epochs must be >= 1");
  if (patience < 1) throw ArgumentError("patience must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (repetitions < 1) throw ArgumentError("repetitions must be >= 1");
  if (crop_w < 1 || crop_h < 1) throw ArgumentError("crop dimensions must be positive");
}

json config_to_json(const TrainConfig& c) {
  return json{{"alpha0", c.alpha0},
              {"alpha_decay", c.alpha_decay},
              {"mu", c.mu},
              {"drop_prob", c.drop_prob},
              {"n_hidden", c.n_hidden},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"batch_size", c.batch_size},
              {"repetitions", c.repetitions},
              {"base_seed", c.base_seed},
              {"stats_mode", c.stats_mode == StatsMode::per_fold ? "per-fold" : "global"},
              {"crop", {c.crop_w, c.crop_h}}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.alpha0 = j.value("alpha0", c.alpha0);
  c.alpha_decay = j.value("alpha_decay", c.alpha_decay);
  c.mu = j.value("mu", c.mu);
  c.drop_prob = j.value("drop_prob", c.drop_prob);
  c.n_hidden = j.value("n_hidden", c.n_hidden);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.repetitions = j.value("repetitions", c.repetitions);
  c.base_seed = j.value("base_seed", c.base_seed);
  const std::string mode = j.value("stats_mode", std::string("per-fold"));
  if (mode == "per-fold") {
    c.stats_mode = StatsMode::per_fold;
  } else if (mode == "global") {
    c.stats_mode = StatsMode::global;
  } else {
    throw ArgumentError("stats_mode must be per-fold or global");
  }
  if (j.contains("crop")) {
    c.crop_w = j["crop"].at(0).get<int>();
    c.crop_h = j["crop"].at(1).get<int>();
  }
  c.validate();
  return c;
}

namespace {

/// Deferred momentum for one weight matrix. Column j has had every update
/// for presentations before last_[j]; the k idle presentations since then
/// had zero gradient, so V <- mu^k V and W <- W + (mu + ... + mu^k) V.
class DeferredMomentum {
public:
  DeferredMomentum(Eigen::MatrixXd& weights, Eigen::MatrixXd& velocity, double mu, std::size_t max_gap)
      : w_(weights), v_(velocity), last_(static_cast<std::size_t>(weights.cols()), 0) {
    pow_.resize(max_gap + 1);
    sum_.resize(max_gap + 1);
    pow_[0] = 1.0;
    sum_[0] = 0.0;
    for (std::size_t k = 1; k <= max_gap; ++k) {
      pow_[k] = pow_[k - 1] * mu;
      sum_[k] = sum_[k - 1] + pow_[k];
    }
  }

  void catch_up(Eigen::Index j, std::size_t now) {
    const std::size_t k = now - last_[static_cast<std::size_t>(j)];
    if (k > 0) {
      w_.col(j) += sum_[k] * v_.col(j);
      v_.col(j) *= pow_[k];
    }
    last_[static_cast<std::size_t>(j)] = now;
  }

  void flush(std::size_t now) {
    for (Eigen::Index j = 0; j < w_.cols(); ++j) catch_up(j, now);
    std::fill(last_.begin(), last_.end(), 0);
  }

  /// Marks column j as updated through presentation `now`.
  void touched(Eigen::Index j, std::size_t now) { last_[static_cast<std::size_t>(j)] = now + 1; }

private:
  Eigen::MatrixXd& w_;
  Eigen::MatrixXd& v_;
  std::vector<std::size_t> last_;
  std::vector<double> pow_;
  std::vector<double> sum_;
};

/// One epoch of online updates restricted to kept hidden units.
void sparse_epoch(NetworkParams& params, Eigen::MatrixXd& velocity, const DesignMatrix& matrix,
                  const std::vector<std::size_t>& order, const TrainConfig& config, double alpha, Rng& rng) {
  const int n_in = params.dims.n_in;
  const int n_hidden = params.dims.n_hidden;
  DeferredMomentum momentum(params.hidden, velocity, config.mu, order.size());
  std::vector<Eigen::Index> kept;
  Eigen::VectorXd act(n_hidden);
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto row = static_cast<Eigen::Index>(order[t]);
    const DropoutMask mask = DropoutMask::draw(n_hidden, config.drop_prob, rng);
    const auto x = matrix.inputs.row(row).transpose();
    kept.clear();
    Eigen::VectorXd out = params.output.row(n_hidden).transpose();
    for (Eigen::Index j = 0; j < n_hidden; ++j) {
      if (mask.keep[j] == 0.0) continue;
      kept.push_back(j);
      momentum.catch_up(j, t);
      act[j] = std::tanh(params.hidden.col(j).head(n_in).dot(x) + params.hidden(n_in, j));
      out += act[j] * params.output.row(j).transpose();
    }
    const Eigen::VectorXd err = out - matrix.targets.row(row).transpose();
    for (Eigen::Index j : kept) {
      const double delta = params.output.row(j).dot(err) * (1.0 - act[j] * act[j]);
      auto v = velocity.col(j);
      v *= config.mu;
      v.head(n_in).noalias() -= (alpha * delta) * x;
      v[n_in] -= alpha * delta;
      params.hidden.col(j) += v;
      momentum.touched(j, t);
    }
  }
  momentum.flush(order.size());
}

double residual_sse(const Eigen::MatrixXd& h, const Eigen::MatrixXd& w_out, const RowMatrix& targets) {
  return 0.5 * (h * w_out - targets).squaredNorm();
}

}  // namespace

double training_sse(const NetworkParams& params, const DesignMatrix& matrix) {
  return residual_sse(hidden_activations(params, matrix.inputs), params.output, matrix.targets);
}

NetworkParams train_once(const DesignMatrix& matrix, const TrainConfig& config, std::uint64_t seed,
                         TrainTrace* trace) {
  config.validate();
  if (matrix.rows() < 1) throw ArgumentError("training matrix is empty");
  const NetworkDims dims{static_cast<int>(matrix.cols()), config.n_hidden, static_cast<int>(matrix.targets.cols())};
  const int n_in = dims.n_in;
  const auto n = static_cast<std::size_t>(matrix.rows());

  // One stream per run: initial weights first, then shuffles and masks.
  Rng rng(seed);
  NetworkParams params;
  params.dims = dims;
  params.drop_prob = config.drop_prob;
  params.init_seed = seed;
  params.hidden.resize(n_in + 1, dims.n_hidden);
  params.output.resize(dims.n_hidden + 1, dims.n_out);
  init_params(params, rng);

  if (!matrix.inputs.allFinite() || !matrix.targets.allFinite()) {
    throw TrainingError("non-finite values in the training matrix", 0, config.alpha0);
  }
  Eigen::MatrixXd h = hidden_activations(params, matrix.inputs);
  params.output = solve_output_pinv(h, matrix.targets);
  double best_sse = residual_sse(h, params.output, matrix.targets);
  if (!std::isfinite(best_sse)) throw TrainingError("non-finite initial loss", 0, config.alpha0);
  NetworkParams best = params;

  TrainTrace local;
  TrainTrace& tr = trace ? *trace : local;
  tr = TrainTrace{};
  tr.initial_sse = best_sse;
  tr.best_sse = best_sse;

  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n_in + 1, dims.n_hidden);
  Eigen::MatrixXd batch_grad;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  double alpha = config.alpha0;
  int since_improvement = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    if (config.batch_size == 1 && config.sparse_updates) {
      sparse_epoch(params, velocity, matrix, order, config, alpha, rng);
    } else if (config.batch_size == 1) {
      for (std::size_t idx : order) {
        const auto row = static_cast<Eigen::Index>(idx);
        const DropoutMask mask = DropoutMask::draw(dims.n_hidden, config.drop_prob, rng);
        const auto x = matrix.inputs.row(row).transpose();
        const ForwardPass pass = forward(params, x, &mask);
        const Eigen::VectorXd delta = hidden_delta(params, pass, matrix.targets.row(row).transpose(), &mask);
        sgd_momentum_step_outer(params.hidden, velocity, x, delta, alpha, config.mu);
      }
    } else {
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
        batch_grad.setZero(n_in + 1, dims.n_hidden);
        const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
        for (std::size_t k = start; k < stop; ++k) {
          const auto row = static_cast<Eigen::Index>(order[k]);
          const DropoutMask mask = DropoutMask::draw(dims.n_hidden, config.drop_prob, rng);
          const auto x = matrix.inputs.row(row).transpose();
          const ForwardPass pass = forward(params, x, &mask);
          const Eigen::VectorXd delta = hidden_delta(params, pass, matrix.targets.row(row).transpose(), &mask);
          batch_grad.topRows(n_in).noalias() += x * delta.transpose();
          batch_grad.row(n_in) += delta.transpose();
        }
        sgd_momentum_step(params.hidden, velocity, batch_grad, alpha, config.mu);
      }
    }

    if (!params.hidden.allFinite()) throw TrainingError("hidden weights diverged", epoch, alpha);
    h = hidden_activations(params, matrix.inputs);
    params.output = solve_output_pinv(h, matrix.targets);
    const double sse = residual_sse(h, params.output, matrix.targets);
    if (!std::isfinite(sse)) throw TrainingError("non-finite training loss", epoch, alpha);

    if (sse < best_sse) {
      best_sse = sse;
      best = params;
      alpha *= config.alpha_decay;
      ++tr.improvements;
      tr.best_epoch = epoch;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    tr.epoch_sse.push_back(sse);
    tr.alpha.push_back(alpha);
    tr.epochs_run = epoch;
    if (since_improvement >= config.patience) break;
  }
  tr.best_sse = best_sse;
  return best;
}

std::array<double, 4> mean_landmarks(const std::vector<std::array<double, 4>>& reps) {
  if (reps.empty()) throw ArgumentError("no repetitions to average");
  std::array<double, 4> m{};
  for (const auto& r : reps) {
    for (std::size_t k = 0; k < 4; ++k) m[k] += r[k];
  }
  for (auto& v : m) v /= static_cast<double>(reps.size());
  return m;
}

std::pair<DesignMatrix, NormStats> fold_design_matrix(const PreparedSet& prepared, std::size_t held_out,
                                                      StatsMode mode) {
  std::vector<const PreparedSample*> train;
  std::vector<const PreparedSample*> all;
  for (std::size_t j = 0; j < prepared.samples.size(); ++j) {
    all.push_back(&prepared.samples[j]);
    if (j != held_out) train.push_back(&prepared.samples[j]);
  }
  const NormStats stats = compute_norm_stats(mode == StatsMode::per_fold ? train : all);
  return {assemble_design_matrix(train, stats, prepared.crop_w, prepared.crop_h), stats};
}

std::array<double, 4> predict_targets(const NetworkParams& params, const NormStats& stats,
                                      const Eigen::VectorXd& raw_pixels) {
  if (raw_pixels.size() != params.dims.n_in) {
    throw ShapeError("crop has " + std::to_string(raw_pixels.size()) + " pixels, model expects " +
                     std::to_string(params.dims.n_in));
  }
  if (params.dims.n_out != 4) throw ShapeError("model does not produce four landmark coordinates");
  const ForwardPass pass = forward(params, normalize_inputs(raw_pixels, stats));
  return denormalize_targets({pass.output[0], pass.output[1], pass.output[2], pass.output[3]}, stats);
}

Landmarks predict_landmarks(const NetworkParams& params, const NormStats& stats, const GrayImage& crop) {
  Eigen::VectorXd raw(static_cast<Eigen::Index>(crop.pixels().size()));
  for (std::size_t i = 0; i < crop.pixels().size(); ++i) raw[static_cast<Eigen::Index>(i)] = crop.pixels()[i];
  const auto t = predict_targets(params, stats, raw);
  return {{t[0], t[1]}, {t[2], t[3]}};
}

std::vector<FoldResult> loocv(const PreparedSet& prepared, const TrainConfig& config, const LoocvOptions& options) {
  config.validate();
  const std::size_t n = prepared.samples.size();
  if (n < 2) throw ArgumentError("leave-one-out needs at least two samples");

  std::vector<FoldResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto run_fold = [&](std::size_t i) {
    const auto [matrix, stats] = fold_design_matrix(prepared, i, config.stats_mode);
    FoldResult f;
    f.sample_id = prepared.samples[i].id;
    f.train_checksum = matrix.checksum();
    const auto reps = static_cast<std::uint64_t>(config.repetitions);
    for (std::uint64_t r = 0; r < reps; ++r) {
      const std::uint64_t seed = config.base_seed + i * reps + r;
      TrainTrace trace;
      const NetworkParams params = train_once(matrix, config, seed, &trace);
      f.reps.push_back(predict_targets(params, stats, prepared.samples[i].pixels));
      f.epochs.push_back(trace.epochs_run);
      f.sse.push_back(trace.best_sse);
    }
    f.mean = mean_landmarks(f.reps);
    results[i] = std::move(f);
  };

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        run_fold(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      const std::size_t completed = ++done;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(completed, n);
      }
    }
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    const std::string prefix = "fold " + std::to_string(i) + " (" + prepared.samples[i].id + "): ";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const TrainingError& e) {
      throw TrainingError(prefix + e.what(), e.epoch(), e.alpha());
    } catch (const Error& e) {
      throw Error(prefix + e.what());
    }
  }
  return results;
}

std::vector<FoldResult> loocv(const std::vector<SampleRecord>& samples, const TrainConfig& config,
                              const LoocvOptions& options, std::vector<Exclusion>* excluded) {
  const PreparedSet prepared = prepare_samples(samples, config.crop_w, config.crop_h);
  if (excluded) *excluded = prepared.excluded;
  return loocv(prepared, config, options);
}

LandmarkModel train_model(const PreparedSet& prepared, const TrainConfig& config, std::uint64_t seed,
                          TrainTrace* trace) {
  std::vector<const PreparedSample*> ptrs;
  for (const auto& s : prepared.samples) ptrs.push_back(&s);
  if (ptrs.empty()) throw ArgumentError("no usable samples to train on");
  LandmarkModel m;
  m.stats = compute_norm_stats(ptrs);
  m.crop_w = prepared.crop_w;
  m.crop_h = prepared.crop_h;
  const DesignMatrix matrix = assemble_design_matrix(ptrs, m.stats, prepared.crop_w, prepared.crop_h);
  m.params = train_once(matrix, config, seed, trace);
  return m;
}

json fold_to_json(const FoldResult& f) {
  return json{{"id", f.sample_id}, {"reps", f.reps}, {"mean", f.mean}, {"epochs", f.epochs}, {"sse", f.sse}};
}

FoldResult fold_from_json(const json& j) {
  FoldResult f;
  f.sample_id = j.at("id").get<std::string>();
  f.reps = j.at("reps").get<std::vector<std::array<double, 4>>>();
  f.mean = j.at("mean").get<std::array<double, 4>>();
  f.epochs = j.at("epochs").get<std::vector<int>>();
  f.sse = j.at("sse").get<std::vector<double>>();
  return f;
}

std::string folds_to_jsonl(const std::vector<FoldResult>& folds) {
  std::string out;
  for (const auto& f : folds) out += fold_to_json(f).dump() + "\n";
  return out;
}

std::vector<FoldResult> load_folds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fold results " + path.string());
  std::vector<FoldResult> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(fold_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace masksizer
