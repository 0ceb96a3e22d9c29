#include "masksizer/model_io.hpp"

#include <bit>
#include <fstream>

#include "masksizer/checksum.hpp"
#include "masksizer/errors.hpp"

namespace masksizer {

using nlohmann::json;

std::string encode_matrix(const Eigen::MatrixXd& m) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(m.size()) * 8);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint64_t>(m(r, c));
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return base64_encode(bytes);
}

Eigen::MatrixXd decode_matrix(const std::string& blob, Eigen::Index rows, Eigen::Index cols) {
  const auto bytes = base64_decode(blob);
  if (bytes.size() != static_cast<std::size_t>(rows * cols * 8)) {
    throw FormatError("model: weight blob holds " + std::to_string(bytes.size() / 8) + " values, expected " +
                      std::to_string(rows * cols));
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[k++]) << (8 * b);
      m(r, c) = std::bit_cast<double>(bits);
    }
  }
  if (!m.allFinite()) throw FormatError("model: weights contain non-finite values");
  return m;
}

json model_to_json(const LandmarkModel& m) {
  const auto& d = m.params.dims;
  return json{{"version", kModelFormatVersion},
              {"dims", {{"n_in", d.n_in}, {"n_hidden", d.n_hidden}, {"n_out", d.n_out}}},
              {"crop", {m.crop_w, m.crop_h}},
              {"drop_prob", m.params.drop_prob},
              {"norm_stats",
               {{"x_max", m.stats.x_max}, {"x_mean", m.stats.x_mean}, {"y_max", m.stats.y_max}, {"y_mean", m.stats.y_mean}}},
              {"seed", m.params.init_seed},
              {"weights", {{"hidden", encode_matrix(m.params.hidden)}, {"output", encode_matrix(m.params.output)}}}};
}

LandmarkModel model_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw FormatError("model: unsupported version " + j.at("version").dump());
    }
    LandmarkModel m;
    auto& d = m.params.dims;
    d.n_in = j.at("dims").at("n_in").get<int>();
    d.n_hidden = j.at("dims").at("n_hidden").get<int>();
    d.n_out = j.at("dims").at("n_out").get<int>();
    if (d.n_in < 1 || d.n_hidden < 1 || d.n_out < 1) throw FormatError("model: dimensions must be positive");
    m.crop_w = j.at("crop").at(0).get<int>();
    m.crop_h = j.at("crop").at(1).get<int>();
    m.params.drop_prob = j.at("drop_prob").get<double>();
    m.params.init_seed = j.at("seed").get<std::uint64_t>();
    const auto& ns = j.at("norm_stats");
    m.stats = {ns.at("x_max").get<double>(), ns.at("x_mean").get<double>(), ns.at("y_max").get<double>(),
               ns.at("y_mean").get<double>()};
    m.params.hidden = decode_matrix(j.at("weights").at("hidden").get<std::string>(), d.n_in + 1, d.n_hidden);
    m.params.output = decode_matrix(j.at("weights").at("output").get<std::string>(), d.n_hidden + 1, d.n_out);
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const LandmarkModel& m) {
  write_file_text(path, model_to_json(m).dump(1) + "\n");
}

LandmarkModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("model: " + std::string(e.what()));
  }
  return model_from_json(j);
}

}  // namespace masksizer
