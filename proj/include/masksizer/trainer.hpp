#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "masksizer/dataset.hpp"
#include "masksizer/model_io.hpp"
#include "masksizer/nnet.hpp"

namespace masksizer {

enum class StatsMode { per_fold, global };

struct TrainConfig {
  double alpha0 = 0.002;
  double alpha_decay = 0.95;  // multiplier applied on each improvement
  double mu = 0.95;
  double drop_prob = 0.7;
  int n_hidden = 40;
  int max_epochs = 200;
  int patience = 20;
  int batch_size = 1;
  int repetitions = 4;
  std::uint64_t base_seed = 0;
  StatsMode stats_mode = StatsMode::per_fold;
  int crop_w = 200;
  int crop_h = 150;
  /// Online updates touch only the columns of kept hidden units and apply
  /// the momentum decay of idle columns in closed form. Mathematically the
  /// same trajectory as the dense update; false selects the dense path.
  bool sparse_updates = true;

  void validate() const;
};

nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig config_from_json(const nlohmann::json& j);

/// Per-epoch record of a training run.
struct TrainTrace {
  double initial_sse = 0.0;        // after the first output solve, before any update
  std::vector<double> epoch_sse;   // inference-mode training SSE after each epoch
  std::vector<double> alpha;       // learning rate in force after each epoch
  int improvements = 0;
  int best_epoch = 0;              // 0 means the initial solve was never beaten
  double best_sse = 0.0;
  int epochs_run = 0;
};

/// Online momentum backprop on the hidden layer, with the output layer
/// re-solved by pseudo-inverse after every epoch. Returns the parameters
/// with the lowest training SSE seen.
NetworkParams train_once(const DesignMatrix& matrix, const TrainConfig& config, std::uint64_t seed,
                         TrainTrace* trace = nullptr);

/// Inference-mode SSE (with the 1/2 factor) summed over the matrix rows.
double training_sse(const NetworkParams& params, const DesignMatrix& matrix);

struct FoldResult {
  std::string sample_id;
  std::vector<std::array<double, 4>> reps;  // crop-space landmarks per repetition
  std::array<double, 4> mean{};
  std::vector<int> epochs;
  std::vector<double> sse;
  std::string train_checksum;  // DesignMatrix::checksum of the fold's training matrix
};

std::array<double, 4> mean_landmarks(const std::vector<std::array<double, 4>>& reps);

struct LoocvOptions {
  int threads = 1;
  /// Called after each fold completes, with (completed, total).
  std::function<void(std::size_t, std::size_t)> progress;
};

/// Leave-one-out over already prepared samples; results in input order.
std::vector<FoldResult> loocv(const PreparedSet& prepared, const TrainConfig& config,
                              const LoocvOptions& options = {});

/// Prepares the records (excluded samples are dropped) and runs loocv.
std::vector<FoldResult> loocv(const std::vector<SampleRecord>& samples, const TrainConfig& config,
                              const LoocvOptions& options = {}, std::vector<Exclusion>* excluded = nullptr);

/// Training matrix for fold `held_out`, with the statistics it was scaled by.
std::pair<DesignMatrix, NormStats> fold_design_matrix(const PreparedSet& prepared, std::size_t held_out,
                                                      StatsMode mode);

/// Trains one model on every prepared sample (no hold-out).
LandmarkModel train_model(const PreparedSet& prepared, const TrainConfig& config, std::uint64_t seed,
                          TrainTrace* trace = nullptr);

/// Landmarks in crop space for one crop of the model's dimensions.
Landmarks predict_landmarks(const NetworkParams& params, const NormStats& stats, const GrayImage& crop);
std::array<double, 4> predict_targets(const NetworkParams& params, const NormStats& stats,
                                      const Eigen::VectorXd& raw_pixels);

nlohmann::json fold_to_json(const FoldResult& f);
FoldResult fold_from_json(const nlohmann::json& j);
std::string folds_to_jsonl(const std::vector<FoldResult>& folds);
std::vector<FoldResult> load_folds(const std::filesystem::path& path);

}  // namespace masksizer
