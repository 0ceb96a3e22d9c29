#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "masksizer/dataset.hpp"
#include "masksizer/nnet.hpp"

namespace masksizer {

inline constexpr int kModelFormatVersion = 1;

/// A trained landmark regressor together with what is needed to feed it.
struct LandmarkModel {
  NetworkParams params;
  NormStats stats;
  int crop_w = 0;
  int crop_h = 0;
};

/// JSON envelope; weights are base64 of little-endian IEEE-754 doubles in
/// row-major order, so a write/read cycle is bit-exact.
nlohmann::json model_to_json(const LandmarkModel& m);
LandmarkModel model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const LandmarkModel& m);
LandmarkModel load_model(const std::filesystem::path& path);

std::string encode_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd decode_matrix(const std::string& blob, Eigen::Index rows, Eigen::Index cols);

}  // namespace masksizer
